"""Bit-exact emulation of the fixed-point RBM sampling datapath.

Each unit owns a Fibonacci LFSR. A node update masks a weight row with the
opposite layer's bits, accumulates the survivors in a guarded integer
accumulator, adds the bias, saturates into the sigmoid LUT domain and fires
when the LFSR output word is below the LUT threshold. Hidden units update
first, then free visible units.

Each draw clocks the register ``shifts_per_draw`` times (a leap-forward
LFSR, as unrolled in hardware) so consecutive output words are disjoint
chunks of the m-sequence. With compare_bits = 16 that is 16 shifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .model import ClampPattern, DimensionError
from .quantize import FixedRbm, SigmoidLut, derive_seeds

# Fibonacci taps (1-based bit positions); maximal length for each width.
TAPS = {
    8: (8, 6, 5, 4),
    16: (16, 15, 13, 4),
    24: (24, 23, 22, 17),
    32: (32, 22, 2, 1),
}


@dataclass(frozen=True)
class LfsrState:
    register: int
    width: int = 32
    taps: tuple[int, ...] = TAPS[32]

    def __post_init__(self):
        if self.register <= 0 or self.register >> self.width:
            raise ValueError("LFSR register must be a nonzero value of the register width")


def lfsr_shift(register: int, width: int = 32, taps: Sequence[int] = TAPS[32]) -> int:
    """Clock a Fibonacci LFSR once: shift left, feedback XOR enters at bit 0."""
    fb = 0
    for t in taps:
        fb ^= (register >> (t - 1)) & 1
    return ((register << 1) | fb) & ((1 << width) - 1)


def lfsr_step(state: LfsrState, compare_bits: int = 16,
              shifts: int = 1) -> tuple[LfsrState, int]:
    """Advance ``shifts`` clocks; the output word is the top ``compare_bits`` of the new register."""
    reg = state.register
    for _ in range(shifts):
        reg = lfsr_shift(reg, state.width, state.taps)
    new = LfsrState(reg, state.width, state.taps)
    return new, reg >> (state.width - compare_bits)


def lfsr_period(seed: int, width: int, taps: Sequence[int] | None = None) -> int:
    taps = TAPS[width] if taps is None else taps
    reg = lfsr_shift(seed, width, taps)
    n = 1
    while reg != seed:
        reg = lfsr_shift(reg, width, taps)
        n += 1
    return n


def transition_matrix(width: int, taps: Sequence[int]) -> np.ndarray:
    """GF(2) matrix M with state' = M @ state (bit 0 first)."""
    m = np.zeros((width, width), dtype=np.uint8)
    for i in range(1, width):
        m[i, i - 1] = 1
    for t in taps:
        m[0, t - 1] ^= 1
    return m


@lru_cache(maxsize=None)
def leap_tables(width: int, taps: tuple[int, ...], shifts: int) -> np.ndarray:
    """Byte-sliced lookup tables for advancing a register ``shifts`` clocks.

    ``state' = XOR_k T[k][(state >> 8k) & 0xff]`` by linearity over GF(2).
    """
    n_bytes = (width + 7) // 8
    tables = np.zeros((n_bytes, 256), dtype=np.uint64)
    for k in range(n_bytes):
        for x in range(256):
            reg = (x << (8 * k)) & ((1 << width) - 1)
            for _ in range(shifts):
                reg = lfsr_shift(reg, width, taps)
            tables[k, x] = reg
    tables.setflags(write=False)
    return tables


def leap(registers: np.ndarray, tables: np.ndarray) -> np.ndarray:
    regs = registers.astype(np.uint64, copy=False)
    out = np.zeros_like(regs)
    for k in range(tables.shape[0]):
        out ^= tables[k][(regs >> np.uint64(8 * k)) & np.uint64(0xFF)]
    return out


def masked_accumulate(weight_row, nodes) -> int:
    """Sum of the weights whose node bit is set."""
    w = np.asarray(weight_row, dtype=np.int64).reshape(-1)
    m = np.asarray(nodes).reshape(-1)
    if w.size != m.size:
        raise DimensionError("weight row and node mask lengths differ")
    return int(w[m.astype(bool)].sum())


def node_update(weights_row, bias: int, nodes, lut: SigmoidLut, lfsr: LfsrState,
                shifts: int | None = None) -> tuple[int, LfsrState]:
    """Update one node: returns the new bit and the advanced LFSR."""
    c = lut.config.compare_bits
    pre = masked_accumulate(weights_row, nodes) + int(bias)
    lfsr, word = lfsr_step(lfsr, c, c if shifts is None else shifts)
    return int(word < int(lut.threshold(pre))), lfsr


def chain_seeds(model: FixedRbm, n_chains: int) -> np.ndarray:
    """Seed banks for ``n_chains`` chains; chain 0 uses the model's own bank."""
    n_units = model.n_visible + model.n_hidden
    banks = [np.asarray(model.lfsr_seeds, dtype=np.uint64)]
    for c in range(1, n_chains):
        banks.append(derive_seeds((model.master_seed * 1_000_003 + c) & ((1 << 64) - 1),
                                  n_units, model.lfsr_bits).astype(np.uint64))
    return np.stack(banks)


class FixedEngine:
    """Batched bit-exact chains over a :class:`FixedRbm`.

    ``backend="numpy"`` is the readable reference; ``"numba"`` runs the
    same datapath in a compiled kernel. Both produce identical streams.
    """

    def __init__(self, model: FixedRbm, clamps: ClampPattern | Sequence[ClampPattern] | None = None,
                 n_chains: int | None = None, seeds: np.ndarray | None = None,
                 shifts_per_draw: int | None = None, backend: str = "numba"):
        if clamps is None or isinstance(clamps, ClampPattern):
            n_chains = 1 if n_chains is None else n_chains
            clamps = [clamps or ClampPattern()] * n_chains
        clamps = list(clamps)
        self.model = model
        self.n_chains = len(clamps)
        masks, values = zip(*(c.mask(model.n_visible) for c in clamps))
        self.pinned = np.array(masks)
        self.pin_values = np.array(values, dtype=np.uint8)
        n_units = model.n_visible + model.n_hidden
        if seeds is None:
            seeds = chain_seeds(model, self.n_chains)
        seeds = np.asarray(seeds, dtype=np.uint64).reshape(self.n_chains, n_units)
        self.registers = seeds.copy()
        c = model.lut.config.compare_bits
        if c > model.lfsr_bits:
            raise ValueError("compare width exceeds LFSR width")
        self.compare_bits = c
        self.shifts = c if shifts_per_draw is None else shifts_per_draw
        self.taps = TAPS[model.lfsr_bits]
        self.tables = leap_tables(model.lfsr_bits, self.taps, self.shifts)
        msb = (seeds[:, :model.n_visible] >> np.uint64(model.lfsr_bits - 1)).astype(np.uint8)
        self.visible = np.where(self.pinned, self.pin_values, msb).astype(np.uint8)
        self.hidden = np.zeros((self.n_chains, model.n_hidden), dtype=np.uint8)
        self.count = 0
        if backend not in ("numpy", "numba"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        # float32 sums of small integers are exact below 2**24
        acc_bits = model.accumulator_bits
        self._dtype = np.float32 if acc_bits <= 24 else np.float64
        self._w = model.weights.astype(self._dtype)
        self._wt = np.ascontiguousarray(self._w.T)

    def _draw(self, lo: int, hi: int) -> np.ndarray:
        regs = leap(self.registers[:, lo:hi], self.tables)
        self.registers[:, lo:hi] = regs
        return (regs >> np.uint64(self.model.lfsr_bits - self.compare_bits)).astype(np.int64)

    def _fire(self, acc: np.ndarray, bias: np.ndarray, words: np.ndarray) -> np.ndarray:
        pre = acc.astype(np.int64) + bias
        return (words < self.model.lut.threshold(pre)).view(np.uint8)

    def _step_numpy(self) -> np.ndarray:
        m = self.model
        nv = m.n_visible
        acc = self.visible.astype(self._dtype) @ self._w
        self.hidden = self._fire(acc, m.hidden_bias, self._draw(nv, nv + m.n_hidden))
        acc = self.hidden.astype(self._dtype) @ self._wt
        v = self._fire(acc, m.visible_bias, self._draw(0, nv))
        self.visible = np.where(self.pinned, self.pin_values, v)
        self.count += 1
        return self.visible

    def step(self) -> np.ndarray:
        return self.run_block(1)[0]

    def run_block(self, n_steps: int) -> np.ndarray:
        """Advance ``n_steps`` sweeps; returns visible states (n_steps, n_chains, n_visible)."""
        if self.backend == "numpy":
            out = np.empty((n_steps, self.n_chains, self.model.n_visible), dtype=np.uint8)
            for t in range(n_steps):
                out[t] = self._step_numpy()
            return out
        from ._kernels import fixed_block

        m = self.model
        out = np.empty((n_steps, self.n_chains, m.n_visible), dtype=np.uint8)
        fixed_block(m.weights, m.visible_bias, m.hidden_bias, m.lut.entries, m.lut.offset,
                    self.registers, self.tables, m.lfsr_bits - self.compare_bits,
                    self.pinned, self.pin_values, self.visible, self.hidden, out)
        self.count += n_steps
        return out

    def __iter__(self) -> Iterator[np.ndarray]:
        while True:
            yield self.step()


def run(model: FixedRbm, clamps: ClampPattern | None, n_samples: int,
        seeds: np.ndarray | None = None, backend: str = "numba") -> np.ndarray:
    """Visible samples of a single fixed-point chain, (n_samples, n_visible)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    eng = FixedEngine(model, clamps, seeds=None if seeds is None else np.asarray(seeds)[None, :],
                      backend=backend)
    return eng.run_block(n_samples)[:, 0, :]
