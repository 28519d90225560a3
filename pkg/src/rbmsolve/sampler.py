"""Floating point clamped block Gibbs sampling.

One sample is a full sweep: every hidden unit is drawn from p(h | v), then
every free visible unit from p(v | h_new). Pinned visible units are copied
through. Chains start with free visible units set by fair coin flips.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from .model import BinaryState, ClampPattern, DimensionError, Rbm


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def gibbs_step(model: Rbm, state: BinaryState, clamps: ClampPattern,
               rng: np.random.Generator) -> BinaryState:
    """One hidden-then-visible sweep of a single chain."""
    if state.visible.size != model.n_visible or state.hidden.size != model.n_hidden:
        raise DimensionError("state does not match model dimensions")
    mask, values = clamps.mask(model.n_visible)
    v = np.where(mask, values, state.visible).astype(np.float64)
    ph = expit(v @ model.weights + model.hidden_bias)
    h = (rng.random(model.n_hidden) < ph).astype(np.uint8)
    pv = expit(h @ model.weights.T + model.visible_bias)
    v_new = (rng.random(model.n_visible) < pv).astype(np.uint8)
    return BinaryState(np.where(mask, values, v_new), h)


class GibbsChains:
    """A batch of independent clamped chains over one model.

    ``clamps`` is either one pattern shared by every chain or a sequence with
    one pattern per chain. Random numbers come from a single PCG64 stream
    drawn in blocks, so a batch is reproducible given ``seed`` and its
    composition.
    """

    def __init__(self, model: Rbm, clamps: ClampPattern | Sequence[ClampPattern] | None = None,
                 seed=None, n_chains: int | None = None, block: int = 256):
        if clamps is None or isinstance(clamps, ClampPattern):
            n_chains = 1 if n_chains is None else n_chains
            clamps = [clamps or ClampPattern()] * n_chains
        clamps = list(clamps)
        if n_chains is not None and n_chains != len(clamps):
            raise ValueError("n_chains disagrees with number of clamp patterns")
        self.model = model
        self.n_chains = len(clamps)
        masks, values = zip(*(c.mask(model.n_visible) for c in clamps))
        self.pinned = np.array(masks)
        self.pin_values = np.array(values, dtype=np.uint8)
        self.rng = _as_rng(seed)
        self._block = max(1, int(block))
        self._buf_h = self._buf_v = None
        self._pos = self._block
        init = self.rng.integers(0, 2, size=(self.n_chains, model.n_visible), dtype=np.uint8)
        self.visible = np.where(self.pinned, self.pin_values, init).astype(np.uint8)
        self.hidden = np.zeros((self.n_chains, model.n_hidden), dtype=np.uint8)
        self.count = 0
        self._w = np.ascontiguousarray(model.weights)
        self._wt = np.ascontiguousarray(model.weights.T)

    def _uniforms(self):
        if self._pos >= self._block:
            m = self.model
            self._buf_h = self.rng.random((self._block, self.n_chains, m.n_hidden))
            self._buf_v = self.rng.random((self._block, self.n_chains, m.n_visible))
            self._pos = 0
        i = self._pos
        self._pos += 1
        return self._buf_h[i], self._buf_v[i]

    def step(self) -> np.ndarray:
        """Advance every chain by one sweep; returns visible states (n_chains, n_visible)."""
        uh, uv = self._uniforms()
        ph = expit(self.visible @ self._w + self.model.hidden_bias)
        self.hidden = (uh < ph).view(np.uint8)
        pv = expit(self.hidden @ self._wt + self.model.visible_bias)
        v = (uv < pv).view(np.uint8)
        self.visible = np.where(self.pinned, self.pin_values, v)
        self.count += 1
        return self.visible

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.step()

    def run(self, n_samples: int) -> Iterator[np.ndarray]:
        for _ in range(n_samples):
            yield self.step()


def iter_chain(model: Rbm, clamps: ClampPattern | None, n_samples: int, seed) -> Iterator[np.ndarray]:
    """Stream ``n_samples`` visible vectors from a single chain."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    chains = GibbsChains(model, clamps, seed=seed)
    for v in chains.run(n_samples):
        yield v[0].copy()


def sample_chain(model: Rbm, clamps: ClampPattern | None, n_samples: int, seed) -> np.ndarray:
    """Visible samples of one chain as a (n_samples, n_visible) uint8 array."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    chains = GibbsChains(model, clamps, seed=seed)
    out = np.empty((n_samples, model.n_visible), dtype=np.uint8)
    for t in range(n_samples):
        out[t] = chains.step()[0]
    return out
