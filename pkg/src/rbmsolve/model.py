"""Binary RBM data model, exact energies and brute-force oracles.

States are {0, 1} valued. The energy of a joint configuration is

    E(v, h) = -v^T W h - a^T h - b^T v

with ``W`` of shape (n_visible, n_hidden), hidden bias ``a`` and visible
bias ``b``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, logsumexp

MAX_ENUMERATION_BITS = 24


class DimensionError(ValueError):
    """Array shapes do not agree with the model."""


class EnumerationLimitError(ValueError):
    """Too many free units to enumerate exactly."""


@dataclass(frozen=True, eq=False)
class Rbm:
    """Dense floating point RBM with named visible units."""

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    visible_labels: tuple[str, ...] = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, ndmin=2)
        b = np.array(self.visible_bias, dtype=np.float64).reshape(-1)
        a = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape != (b.size, a.size):
            raise DimensionError(
                f"weights {w.shape} inconsistent with biases ({b.size}, {a.size})"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("RBM parameters must be finite")
        labels = tuple(self.visible_labels) or tuple(f"v{i}" for i in range(b.size))
        if len(labels) != b.size:
            raise DimensionError(f"{len(labels)} labels for {b.size} visible units")
        if len(set(labels)) != len(labels):
            raise ValueError("visible labels must be unique")
        for arr in (w, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", a)
        object.__setattr__(self, "visible_labels", labels)

    @property
    def n_visible(self) -> int:
        return self.visible_bias.size

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.size

    def index(self, label: str) -> int:
        try:
            return self.visible_labels.index(label)
        except ValueError:
            raise KeyError(f"no visible unit named {label!r}") from None

    def replace(self, **changes) -> "Rbm":
        fields = dict(
            weights=self.weights,
            visible_bias=self.visible_bias,
            hidden_bias=self.hidden_bias,
            visible_labels=self.visible_labels,
        )
        fields.update(changes)
        return Rbm(**fields)

    def allclose(self, other: "Rbm", atol: float = 0.0) -> bool:
        return (
            self.visible_labels == other.visible_labels
            and self.weights.shape == other.weights.shape
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
            and np.allclose(self.visible_bias, other.visible_bias, rtol=0, atol=atol)
            and np.allclose(self.hidden_bias, other.hidden_bias, rtol=0, atol=atol)
        )

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int, labels: Sequence[str] = ()) -> "Rbm":
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden), tuple(labels))

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, rng=None, scale: float = 1.0,
               labels: Sequence[str] = ()) -> "Rbm":
        rng = np.random.default_rng(rng)
        return cls(
            rng.normal(0.0, scale, (n_visible, n_hidden)),
            rng.normal(0.0, scale, n_visible),
            rng.normal(0.0, scale, n_hidden),
            tuple(labels),
        )


@dataclass(frozen=True)
class BinaryState:
    visible: np.ndarray
    hidden: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.visible, dtype=np.uint8).reshape(-1)
        h = np.asarray(self.hidden, dtype=np.uint8).reshape(-1)
        if np.any(v > 1) or np.any(h > 1):
            raise ValueError("state entries must be 0 or 1")
        object.__setattr__(self, "visible", v)
        object.__setattr__(self, "hidden", h)


@dataclass(frozen=True)
class ClampPattern:
    """Pinned visible bits, ``{index: bit}``; unlisted units are free."""

    pins: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        pins = {int(k): int(v) for k, v in dict(self.pins).items()}
        for k, v in pins.items():
            if k < 0 or v not in (0, 1):
                raise ValueError(f"invalid pin {k}={v}")
        object.__setattr__(self, "pins", pins)

    @classmethod
    def from_labels(cls, model: Rbm, pins: Mapping[str, int]) -> "ClampPattern":
        return cls({model.index(k): v for k, v in pins.items()})

    def check(self, n_visible: int) -> None:
        bad = [k for k in self.pins if k >= n_visible]
        if bad:
            raise DimensionError(f"pinned indices {bad} out of range for {n_visible} units")

    def mask(self, n_visible: int) -> tuple[np.ndarray, np.ndarray]:
        """Return (pinned mask, pinned values) boolean/uint8 arrays."""
        self.check(n_visible)
        mask = np.zeros(n_visible, dtype=bool)
        values = np.zeros(n_visible, dtype=np.uint8)
        for k, v in self.pins.items():
            mask[k] = True
            values[k] = v
        return mask, values

    def free_indices(self, n_visible: int) -> np.ndarray:
        mask, _ = self.mask(n_visible)
        return np.flatnonzero(~mask)

    def merged(self, other: "ClampPattern") -> "ClampPattern":
        pins = dict(self.pins)
        for k, v in other.pins.items():
            if pins.get(k, v) != v:
                raise ValueError(f"conflicting pins at unit {k}")
            pins[k] = v
        return ClampPattern(pins)


@dataclass(frozen=True)
class Distribution:
    """Probability mass over visible bit vectors (rows of ``support``)."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.uint8)
        p = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        if s.ndim != 2 or s.shape[0] != p.size:
            raise DimensionError("support rows and probabilities disagree")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(x) for x in row): float(p) for row, p in zip(self.support, self.probs)}

    def argmax(self) -> np.ndarray:
        return self.support[int(np.argmax(self.probs))]

    def marginal(self, columns: Sequence[int]) -> "Distribution":
        """Marginalize onto a subset of visible columns."""
        cols = np.asarray(columns, dtype=int)
        sub = self.support[:, cols]
        keys, inverse = np.unique(sub, axis=0, return_inverse=True)
        probs = np.zeros(len(keys))
        np.add.at(probs, inverse.reshape(-1), self.probs)
        return Distribution(keys, probs / probs.sum())


def _check_len(x: np.ndarray, n: int, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[-1] != n:
        raise DimensionError(f"{what} has length {x.shape[-1]}, expected {n}")
    return x


def energy(model: Rbm, state: BinaryState) -> float:
    v = _check_len(state.visible, model.n_visible, "visible").astype(np.float64)
    h = _check_len(state.hidden, model.n_hidden, "hidden").astype(np.float64)
    return float(-(v @ model.weights @ h) - model.hidden_bias @ h - model.visible_bias @ v)


def hidden_activation(model: Rbm, visible) -> np.ndarray:
    """p(h_j = 1 | v) for every hidden unit; accepts a batch of rows."""
    v = _check_len(visible, model.n_visible, "visible").astype(np.float64)
    return expit(v @ model.weights + model.hidden_bias)


def visible_activation(model: Rbm, hidden) -> np.ndarray:
    """p(v_i = 1 | h) for every visible unit; accepts a batch of rows."""
    h = _check_len(hidden, model.n_hidden, "hidden").astype(np.float64)
    return expit(h @ model.weights.T + model.visible_bias)


def free_energy(model: Rbm, visible) -> np.ndarray | float:
    """-b^T v - sum_j log(1 + exp((W^T v + a)_j)); vectorized over rows."""
    v = _check_len(visible, model.n_visible, "visible").astype(np.float64)
    pre = v @ model.weights + model.hidden_bias
    out = -(v @ model.visible_bias) - np.logaddexp(0.0, pre).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def all_bit_vectors(n: int) -> np.ndarray:
    """All 2**n bit vectors of length n, row k is k in little-endian bits."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    k = np.arange(2**n, dtype=np.int64)[:, None]
    return ((k >> np.arange(n)) & 1).astype(np.uint8)


def exact_distribution(model: Rbm, clamps: ClampPattern | None = None,
                       max_free: int = MAX_ENUMERATION_BITS) -> Distribution:
    """Visible marginal conditioned on ``clamps``, by exhaustive enumeration.

    Support rows are full visible vectors; free units vary in little-endian
    counting order, pinned units hold their clamp values.
    """
    clamps = clamps or ClampPattern()
    mask, values = clamps.mask(model.n_visible)
    free = np.flatnonzero(~mask)
    if free.size > max_free:
        raise EnumerationLimitError(f"{free.size} free visible units exceeds limit {max_free}")
    support = np.tile(values, (2**free.size, 1))
    support[:, free] = all_bit_vectors(free.size)
    logp = -free_energy(model, support)
    logp = np.atleast_1d(logp)
    probs = np.exp(logp - logsumexp(logp))
    return Distribution(support, probs / probs.sum())


def joint_distribution(model: Rbm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Enumerate p(v, h) over every joint state; returns (V, H, P) with P[i, j] = p(V[i], H[j])."""
    if model.n_visible + model.n_hidden > MAX_ENUMERATION_BITS:
        raise EnumerationLimitError("joint state space too large")
    V = all_bit_vectors(model.n_visible)
    H = all_bit_vectors(model.n_hidden)
    Vf, Hf = V.astype(float), H.astype(float)
    neg_e = Vf @ model.weights @ Hf.T + (Hf @ model.hidden_bias)[None, :] + (Vf @ model.visible_bias)[:, None]
    P = np.exp(neg_e - logsumexp(neg_e))
    return V, H, P / P.sum()


def kl_divergence(p: Distribution, q: Distribution) -> float:
    if p.support.shape != q.support.shape or not np.array_equal(p.support, q.support):
        raise ValueError("distributions must share the same support")
    nz = p.probs > 0
    if np.any(q.probs[nz] <= 0):
        raise ValueError("q is zero where p is positive")
    return float(max(0.0, np.sum(p.probs[nz] * np.log(p.probs[nz] / q.probs[nz]))))


def total_variation(p: Distribution, q: Distribution) -> float:
    pd, qd = p.as_dict(), q.as_dict()
    keys = set(pd) | set(qd)
    return 0.5 * sum(abs(pd.get(k, 0.0) - qd.get(k, 0.0)) for k in keys)


def empirical_distribution(samples: np.ndarray) -> Distribution:
    samples = np.asarray(samples, dtype=np.uint8)
    keys, counts = np.unique(samples, axis=0, return_counts=True)
    return Distribution(keys, counts / counts.sum())


def enumerate_states(n: int):
    """Iterate tuples over {0,1}^n (lexicographic, first element slowest)."""
    return itertools.product((0, 1), repeat=n)
