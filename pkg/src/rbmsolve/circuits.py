"""Boolean circuit functions used as training targets and merge blocks.

Every function has named input and output ports. Integer operands occupy
consecutive ports ``<field>0 .. <field>{w-1}``, least significant bit first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import all_bit_vectors


@dataclass(frozen=True)
class CircuitFunction:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    fn: Callable[[np.ndarray], np.ndarray]  # (rows, n_in) bits -> (rows, n_out) bits

    @property
    def labels(self) -> tuple[str, ...]:
        return self.inputs + self.outputs

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    def evaluate(self, in_bits) -> np.ndarray:
        x = np.atleast_2d(np.asarray(in_bits, dtype=np.uint8))
        if x.shape[1] != self.n_inputs:
            raise ValueError(f"{self.name} expects {self.n_inputs} input bits")
        return np.asarray(self.fn(x), dtype=np.uint8).reshape(x.shape[0], len(self.outputs))

    def rows(self, in_bits) -> np.ndarray:
        """Full visible rows (inputs followed by outputs)."""
        x = np.atleast_2d(np.asarray(in_bits, dtype=np.uint8))
        return np.hstack([x, self.evaluate(x)])

    def is_valid(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
        n = self.n_inputs
        return np.all(self.evaluate(rows[:, :n]) == rows[:, n:], axis=1)


def field_labels(name: str, width: int) -> tuple[str, ...]:
    return tuple(f"{name}{i}" for i in range(width))


def to_bits(values, width: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64)
    if np.any(v < 0) or np.any(v >> width):
        raise ValueError(f"value does not fit in {width} bits")
    return ((v[..., None] >> np.arange(width)) & 1).astype(np.uint8)


def from_bits(bits) -> np.ndarray | int:
    b = np.asarray(bits, dtype=np.int64)
    out = (b << np.arange(b.shape[-1])).sum(axis=-1)
    return int(out) if np.ndim(out) == 0 else out


def _gate(name, inputs, op):
    return CircuitFunction(name, tuple(inputs), ("out",), lambda x: op(x)[:, None])


AND = _gate("and", ("x", "y"), lambda x: x[:, 0] & x[:, 1])
OR = _gate("or", ("x", "y"), lambda x: x[:, 0] | x[:, 1])
XOR = _gate("xor", ("x", "y"), lambda x: x[:, 0] ^ x[:, 1])
NOT = _gate("not", ("x",), lambda x: 1 - x[:, 0])
OR3 = _gate("or3", ("x", "y", "z"), lambda x: x[:, 0] | x[:, 1] | x[:, 2])
HALF_ADDER = CircuitFunction(
    "half_adder", ("a", "b"), ("s", "c"),
    lambda x: np.stack([x[:, 0] ^ x[:, 1], x[:, 0] & x[:, 1]], axis=1),
)


def adder(width: int) -> CircuitFunction:
    """``width``-bit ripple adder with carry in: visible count 3*width + 2."""
    inputs = field_labels("a", width) + field_labels("b", width) + ("cin",)

    def fn(x):
        a = from_bits(x[:, :width])
        b = from_bits(x[:, width:2 * width])
        return to_bits(np.atleast_1d(a + b + x[:, 2 * width]), width + 1)

    return CircuitFunction(f"add{width}", inputs, field_labels("s", width + 1), fn)


def multiplier(width: int) -> CircuitFunction:
    """``width`` x ``width`` multiplier with a 2*width-bit product field."""
    inputs = field_labels("a", width) + field_labels("b", width)

    def fn(x):
        a = from_bits(x[:, :width])
        b = from_bits(x[:, width:])
        return to_bits(np.atleast_1d(a * b), 2 * width)

    return CircuitFunction(f"mult{width}", inputs, field_labels("p", 2 * width), fn)


GATES = {f.name: f for f in (AND, OR, XOR, NOT, OR3, HALF_ADDER)}


def lookup(name: str) -> CircuitFunction:
    """Resolve names like ``and``, ``add4`` or ``mult2``."""
    if name in GATES:
        return GATES[name]
    for prefix, make in (("add", adder), ("mult", multiplier)):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return make(int(name[len(prefix):]))
    raise KeyError(f"unknown circuit function {name!r}")


@dataclass
class Dataset:
    rows: np.ndarray
    description: str = ""
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim != 2:
            rows = rows.reshape(len(rows), -1) if rows.size else rows.reshape(0, len(self.labels))
        self.rows = rows

    def __len__(self) -> int:
        return self.rows.shape[0]


def generate_truth_table(circuit: CircuitFunction, max_rows: int | None = None,
                         seed=None) -> Dataset:
    """All input/output rows, or a uniform random sample of inputs when the
    table has more than ``max_rows`` rows."""
    n = circuit.n_inputs
    total = 2**n
    if max_rows is None or total <= max_rows:
        x = all_bit_vectors(n)
        desc = f"{circuit.name} exhaustive ({total} rows)"
    else:
        rng = np.random.default_rng(seed)
        x = rng.integers(0, 2, size=(max_rows, n), dtype=np.uint8)
        desc = f"{circuit.name} sampled ({max_rows} of {total} rows, seed={seed})"
    return Dataset(circuit.rows(x), desc, circuit.labels)


def sat_clause_value(clauses: Sequence[Sequence[int]], assignment) -> bool:
    """Evaluate a CNF given as signed 1-based variable indices."""
    bits = np.asarray(assignment).reshape(-1)
    return all(any((bits[abs(l) - 1] == 1) == (l > 0) for l in clause) for clause in clauses)
