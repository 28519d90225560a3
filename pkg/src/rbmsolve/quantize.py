"""Signed fixed-point grids, model quantization and the sigmoid lookup table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .model import Rbm


@dataclass(frozen=True)
class QuantGrid:
    """Two's-complement fixed point with ``frac_bits`` bits after the point."""

    total_bits: int = 8
    frac_bits: int = 4

    def __post_init__(self):
        if not 2 <= self.total_bits <= 16:
            raise ValueError("total_bits must be in [2, 16]")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError("frac_bits must be in [0, total_bits)")

    @classmethod
    def for_max_weight(cls, total_bits: int, max_weight: float) -> "QuantGrid":
        """Place the binary point so +-max_weight spans the full signed range."""
        int_bits = max(0, math.ceil(math.log2(max_weight))) if max_weight > 0 else 0
        return cls(total_bits, max(0, min(total_bits - 1, total_bits - 1 - int_bits)))

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def int_min(self) -> int:
        return -(2 ** (self.total_bits - 1))

    @property
    def int_max(self) -> int:
        return 2 ** (self.total_bits - 1) - 1

    @property
    def min_value(self) -> float:
        return self.int_min * self.step

    @property
    def max_value(self) -> float:
        return self.int_max * self.step

    def to_int(self, x) -> np.ndarray:
        # np.rint rounds half to even; ties are measure-zero for trained weights
        q = np.rint(np.asarray(x, dtype=np.float64) / self.step)
        return np.clip(q, self.int_min, self.int_max).astype(np.int64)

    def to_real(self, q) -> np.ndarray:
        return np.asarray(q, dtype=np.int64) * self.step


def quantize_value(x, grid: QuantGrid):
    """Nearest representable value, saturating at the ends of the range."""
    out = grid.to_real(grid.to_int(x))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LutConfig:
    input_frac_bits: int = 4
    compare_bits: int = 16
    saturation: float = 8.0


@dataclass(frozen=True, eq=False)
class SigmoidLut:
    """Firing thresholds for every fixed-point pre-activation in [-sat, +sat].

    ``entries[k]`` corresponds to the integer pre-activation ``k - offset``.
    Inputs beyond the table saturate to its end entries.
    """

    config: LutConfig
    entries: np.ndarray

    @property
    def offset(self) -> int:
        return (self.entries.size - 1) // 2

    @property
    def scale(self) -> int:
        return 2 ** self.config.compare_bits

    def index(self, pre_activation) -> np.ndarray:
        return np.clip(np.asarray(pre_activation, dtype=np.int64), -self.offset, self.offset) + self.offset

    def threshold(self, pre_activation) -> np.ndarray:
        return self.entries[self.index(pre_activation)]

    def probability(self, pre_activation) -> np.ndarray:
        return self.threshold(pre_activation) / self.scale


def build_sigmoid_lut(cfg: LutConfig) -> SigmoidLut:
    if cfg.compare_bits < 1 or cfg.compare_bits > 31 or cfg.input_frac_bits < 0:
        raise ValueError("invalid LUT widths")
    half = int(round(cfg.saturation * 2**cfg.input_frac_bits))
    x = np.arange(-half, half + 1) / 2.0**cfg.input_frac_bits
    scale = 2**cfg.compare_bits
    entries = np.clip(np.rint(expit(x) * scale), 0, scale - 1).astype(np.int64)
    entries[half] = scale // 2
    entries.setflags(write=False)
    return SigmoidLut(cfg, entries)


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next state, output)."""
    mask = (1 << 64) - 1
    state = (state + 0x9E3779B97F4A7C15) & mask
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return state, z ^ (z >> 31)


def derive_seeds(master_seed: int, count: int, bits: int = 32) -> np.ndarray:
    """Distinct nonzero ``bits``-wide seeds scrambled from ``master_seed``."""
    state = int(master_seed) & ((1 << 64) - 1)
    seen: set[int] = set()
    out = []
    while len(out) < count:
        state, z = splitmix64(state)
        s = z >> (64 - bits)
        if s == 0 or s in seen:
            continue
        seen.add(s)
        out.append(s)
    return np.array(out, dtype=np.uint64 if bits > 32 else np.uint32)


@dataclass(frozen=True, eq=False)
class FixedRbm:
    """Integer RBM on a fixed-point grid, ready for the bit-exact engine.

    ``lfsr_seeds`` holds one seed per unit, visible units first.
    """

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    grid: QuantGrid
    lut: SigmoidLut
    lfsr_seeds: np.ndarray
    visible_labels: tuple[str, ...]
    master_seed: int = 0
    source: str = ""
    lfsr_bits: int = field(default=32)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64)
        b = np.asarray(self.visible_bias, dtype=np.int64).reshape(-1)
        a = np.asarray(self.hidden_bias, dtype=np.int64).reshape(-1)
        if w.shape != (b.size, a.size):
            raise ValueError("fixed model dimensions inconsistent")
        for arr in (w, a, b):
            if arr.size and (arr.min() < self.grid.int_min or arr.max() > self.grid.int_max):
                raise ValueError("fixed-point parameter outside grid range")
        seeds = np.asarray(self.lfsr_seeds, dtype=np.uint64).reshape(-1)
        if seeds.size != b.size + a.size:
            raise ValueError("need one LFSR seed per unit")
        if np.any(seeds == 0) or np.unique(seeds).size != seeds.size:
            raise ValueError("LFSR seeds must be nonzero and distinct")
        if np.any(seeds >> np.uint64(self.lfsr_bits)):
            raise ValueError("LFSR seed wider than register")
        if self.lut.config.input_frac_bits != self.grid.frac_bits:
            raise ValueError("LUT input binary point must match the grid")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", a)
        object.__setattr__(self, "lfsr_seeds", seeds)
        object.__setattr__(self, "visible_labels", tuple(self.visible_labels))

    @property
    def n_visible(self) -> int:
        return self.visible_bias.size

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.size

    @property
    def accumulator_bits(self) -> int:
        """Signed width that holds any masked row sum plus bias without overflow."""
        n = max(self.n_visible, self.n_hidden, 1)
        return self.grid.total_bits + math.ceil(math.log2(n)) + 1

    def dequantize(self) -> Rbm:
        g = self.grid
        return Rbm(g.to_real(self.weights), g.to_real(self.visible_bias),
                   g.to_real(self.hidden_bias), self.visible_labels)

    def with_seeds(self, master_seed: int) -> "FixedRbm":
        seeds = derive_seeds(master_seed, self.n_visible + self.n_hidden, self.lfsr_bits)
        return FixedRbm(self.weights, self.visible_bias, self.hidden_bias, self.grid, self.lut,
                        seeds, self.visible_labels, master_seed, self.source, self.lfsr_bits)


def quantize_model(model: Rbm, grid: QuantGrid, lut_cfg: LutConfig | None = None,
                   seed: int = 0, lfsr_bits: int = 32, source: str = "") -> FixedRbm:
    """Quantize every parameter onto ``grid`` and attach a LUT and seed bank."""
    if lut_cfg is None:
        lut_cfg = LutConfig(input_frac_bits=grid.frac_bits)
    lut = build_sigmoid_lut(lut_cfg)
    seeds = derive_seeds(seed, model.n_visible + model.n_hidden, lfsr_bits)
    return FixedRbm(
        grid.to_int(model.weights),
        grid.to_int(model.visible_bias),
        grid.to_int(model.hidden_bias),
        grid, lut, seeds, model.visible_labels,
        master_seed=seed, source=source, lfsr_bits=lfsr_bits,
    )


def quantize_rbm(model: Rbm, grid: QuantGrid) -> Rbm:
    """Float model with every parameter snapped to the grid."""
    return Rbm(quantize_value(model.weights, grid), quantize_value(model.visible_bias, grid),
               quantize_value(model.hidden_bias, grid), model.visible_labels)
