"""Merging RBMs along shared visible units and composing circuits from blocks.

Merging unit ``k`` of A with unit ``l`` of B moves row ``l`` of W_B into
row ``k`` of the merged matrix (in B's hidden columns) and adds the two
visible biases. The merged energy is the sum of the two block energies,
so the merged distribution is proportional to the product of the parts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .circuits import CircuitFunction, Dataset, lookup
from .model import Rbm


class MergeError(ValueError):
    pass


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class MergeSpec:
    """Pairs ``(label in A, label in B)`` of visible units to identify."""

    pairs: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        pairs = tuple((str(x), str(y)) for x, y in self.pairs)
        for side, names in (("A", [p[0] for p in pairs]), ("B", [p[1] for p in pairs])):
            if len(set(names)) != len(names):
                raise MergeError(f"a unit of {side} appears in more than one merge pair")
        object.__setattr__(self, "pairs", pairs)

    @property
    def d(self) -> int:
        return len(self.pairs)

    def reversed(self) -> "MergeSpec":
        return MergeSpec(tuple((y, x) for x, y in self.pairs))


def merge_maps(a: Rbm, b: Rbm, spec: MergeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Positions of A's and B's visible units inside the merged model."""
    for x, y in spec.pairs:
        if x not in a.visible_labels:
            raise MergeError(f"{x!r} is not a visible unit of A (only visible units merge)")
        if y not in b.visible_labels:
            raise MergeError(f"{y!r} is not a visible unit of B (only visible units merge)")
    merged_into = {b.index(y): a.index(x) for x, y in spec.pairs}
    b_map = np.empty(b.n_visible, dtype=np.int64)
    nxt = a.n_visible
    for j in range(b.n_visible):
        if j in merged_into:
            b_map[j] = merged_into[j]
        else:
            b_map[j] = nxt
            nxt += 1
    return np.arange(a.n_visible), b_map


def merge(a: Rbm, b: Rbm, spec: MergeSpec) -> Rbm:
    """Block-structured merge of two RBMs; see the module docstring."""
    a_map, b_map = merge_maps(a, b, spec)
    n = a.n_visible + b.n_visible - spec.d
    r, s = a.n_hidden, b.n_hidden
    W = np.zeros((n, r + s))
    W[a_map, :r] = a.weights
    W[b_map, r:] = b.weights
    vb = np.zeros(n)
    vb[a_map] += a.visible_bias
    np.add.at(vb, b_map, b.visible_bias)
    labels = list(a.visible_labels)
    merged_b = {b.index(y) for _, y in spec.pairs}
    for j, lab in enumerate(b.visible_labels):
        if j not in merged_b:
            labels.append(lab)
    if len(set(labels)) != len(labels):
        clash = sorted({l for l in labels if labels.count(l) > 1})
        raise MergeError(f"unmerged units share labels {clash}; relabel before merging")
    return Rbm(W, vb, np.concatenate([a.hidden_bias, b.hidden_bias]), tuple(labels))


def relabel(model: Rbm, mapping: Mapping[str, str]) -> Rbm:
    return model.replace(visible_labels=tuple(mapping.get(l, l) for l in model.visible_labels))


# ---------------------------------------------------------------------------
# circuit descriptions

@dataclass
class Block:
    name: str
    kind: str


@dataclass
class CircuitSpec:
    """Blocks wired together by named nets.

    ``nets`` maps a net name to its ``(block, port)`` endpoints. Ports not
    listed on any net get a private net named ``block.port``. ``consts``
    pins nets to fixed bits, ``fields`` groups nets into little-endian
    integers and ``inputs`` names the externally driven nets.
    """

    blocks: list[Block] = field(default_factory=list)
    nets: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    consts: dict[str, int] = field(default_factory=dict)
    fields: dict[str, tuple[str, ...]] = field(default_factory=dict)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()

    def block(self, name: str) -> Block:
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise CircuitError(f"unknown block {name!r}")

    def port_nets(self, ports: Mapping[str, Sequence[str]]) -> dict[tuple[str, str], str]:
        """Net attached to every (block, port); validates the wiring."""
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise CircuitError("duplicate block names")
        owner: dict[tuple[str, str], str] = {}
        for net, ends in self.nets.items():
            if not ends:
                raise CircuitError(f"dangling net {net!r}: no endpoints")
            blocks_seen = set()
            for blk, port in ends:
                if blk not in ports:
                    raise CircuitError(f"net {net!r} names unknown block {blk!r}")
                if port not in ports[blk]:
                    raise CircuitError(f"net {net!r} names unknown port {blk}.{port}")
                if (blk, port) in owner:
                    raise CircuitError(f"{blk}.{port} is on nets {owner[(blk, port)]!r} and {net!r}")
                if blk in blocks_seen:
                    raise CircuitError(f"net {net!r} joins two ports of block {blk!r}")
                blocks_seen.add(blk)
                owner[(blk, port)] = net
        for cnet in self.consts:
            if cnet not in self.nets:
                raise CircuitError(f"constant on undeclared net {cnet!r}")
        for blk in self.blocks:
            for port in ports[blk.name]:
                owner.setdefault((blk.name, port), f"{blk.name}.{port}")
        known = set(owner.values())
        for fname, members in self.fields.items():
            for net in members:
                if net not in known:
                    raise CircuitError(f"field {fname!r} names unknown net {net!r}")
        for net in self.inputs + self.outputs:
            if net not in known:
                raise CircuitError(f"exposed net {net!r} does not exist")
        return owner

    def visible_order(self, ports: Mapping[str, Sequence[str]]) -> list[str]:
        owner = self.port_nets(ports)
        order: list[str] = []
        seen = set()
        for blk in self.blocks:
            for port in ports[blk.name]:
                net = owner[(blk.name, port)]
                if net not in seen:
                    seen.add(net)
                    order.append(net)
        return order

    def const_pins(self, model: Rbm) -> dict[int, int]:
        return {model.index(n): v for n, v in self.consts.items()}

    def to_text(self) -> str:
        lines = []
        for blk in self.blocks:
            lines.append(f"block {blk.name} {blk.kind}")
        for net, ends in self.nets.items():
            eps = " ".join(f"{b}.{p}" for b, p in ends)
            if net in self.consts:
                lines.append(f"const {net} {self.consts[net]} {eps}")
            else:
                lines.append(f"net {net} {eps}")
        for name, members in self.fields.items():
            lines.append(f"field {name} {' '.join(members)}")
        if self.inputs:
            lines.append("input " + " ".join(self.inputs))
        if self.outputs:
            lines.append("output " + " ".join(self.outputs))
        return "\n".join(lines) + "\n"


_ENDPOINT = re.compile(r"^([A-Za-z_][\w]*)\.([A-Za-z_][\w]*)$")


def parse_circuit(text: str) -> CircuitSpec:
    """Parse the line-oriented circuit format (see docs/circuit_format.md)."""
    spec = CircuitSpec()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *rest = line.split()
        try:
            if word == "block":
                name, kind = rest
                spec.blocks.append(Block(name, kind))
            elif word in ("net", "const"):
                net = rest[0]
                ends = rest[1:]
                if word == "const":
                    bit = int(ends[0])
                    if bit not in (0, 1):
                        raise ValueError
                    spec.consts[net] = bit
                    ends = ends[1:]
                if net in spec.nets:
                    raise CircuitError(f"line {lineno}: net {net!r} declared twice")
                pairs = []
                for e in ends:
                    m = _ENDPOINT.match(e)
                    if not m:
                        raise CircuitError(f"line {lineno}: bad endpoint {e!r} on net {net!r}")
                    pairs.append((m.group(1), m.group(2)))
                spec.nets[net] = pairs
            elif word == "field":
                spec.fields[rest[0]] = tuple(rest[1:])
            elif word == "input":
                spec.inputs += tuple(rest)
            elif word == "output":
                spec.outputs += tuple(rest)
            else:
                raise CircuitError(f"line {lineno}: unknown directive {word!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, CircuitError):
                raise
            raise CircuitError(f"line {lineno}: malformed {word!r} directive") from None
    return spec


def _ports(spec: CircuitSpec, library: Mapping[str, Rbm]) -> dict[str, tuple[str, ...]]:
    ports = {}
    for blk in spec.blocks:
        if blk.kind not in library:
            raise CircuitError(f"block {blk.name!r} uses {blk.kind!r}, missing from the library")
        ports[blk.name] = library[blk.kind].visible_labels
    return ports


def compose(spec: CircuitSpec, library: Mapping[str, Rbm]) -> Rbm:
    """Fold pairwise merges over the blocks; visible labels become net names."""
    ports = _ports(spec, library)
    owner = spec.port_nets(ports)
    model: Rbm | None = None
    for blk in spec.blocks:
        part = relabel(library[blk.kind], {p: owner[(blk.name, p)] for p in ports[blk.name]})
        if model is None:
            model = part
            continue
        shared = [l for l in part.visible_labels if l in model.visible_labels]
        model = merge(model, part, MergeSpec(tuple((l, l) for l in shared)))
    if model is None:
        raise CircuitError("circuit has no blocks")
    return model


def _functions(spec: CircuitSpec, functions: Mapping[str, CircuitFunction] | None):
    out = {}
    for blk in spec.blocks:
        if functions and blk.kind in functions:
            out[blk.name] = functions[blk.kind]
        else:
            try:
                out[blk.name] = lookup(blk.kind)
            except KeyError:
                raise CircuitError(f"no circuit function for block kind {blk.kind!r}") from None
    return out


def circuit_inputs(spec: CircuitSpec, functions: Mapping[str, CircuitFunction] | None = None) -> list[str]:
    """Nets not driven by any block output and not constant."""
    fns = _functions(spec, functions)
    ports = {b.name: fns[b.name].labels for b in spec.blocks}
    owner = spec.port_nets(ports)
    driven = {owner[(b.name, p)] for b in spec.blocks for p in fns[b.name].outputs}
    if spec.inputs:
        return list(spec.inputs)
    order = spec.visible_order(ports)
    return [n for n in order if n not in driven and n not in spec.consts]


def evaluate_circuit(spec: CircuitSpec, input_rows: np.ndarray,
                     functions: Mapping[str, CircuitFunction] | None = None) -> tuple[list[str], np.ndarray]:
    """Propagate input rows through the blocks; returns (net order, rows of every net)."""
    fns = _functions(spec, functions)
    ports = {b.name: fns[b.name].labels for b in spec.blocks}
    owner = spec.port_nets(ports)
    order = spec.visible_order(ports)
    col = {n: i for i, n in enumerate(order)}
    inputs = circuit_inputs(spec, functions)
    x = np.atleast_2d(np.asarray(input_rows, dtype=np.uint8))
    if x.shape[1] != len(inputs):
        raise CircuitError(f"expected {len(inputs)} input bits, got {x.shape[1]}")
    n_rows = x.shape[0]
    values = np.zeros((n_rows, len(order)), dtype=np.uint8)
    known = np.zeros(len(order), dtype=bool)
    for i, net in enumerate(inputs):
        values[:, col[net]] = x[:, i]
        known[col[net]] = True
    for net, bit in spec.consts.items():
        values[:, col[net]] = bit
        known[col[net]] = True
    pending = list(spec.blocks)
    while pending:
        progressed = False
        for blk in list(pending):
            f = fns[blk.name]
            in_cols = [col[owner[(blk.name, p)]] for p in f.inputs]
            if not all(known[c] for c in in_cols):
                continue
            out = f.evaluate(values[:, in_cols]) if n_rows else np.zeros((0, len(f.outputs)), np.uint8)
            for k, p in enumerate(f.outputs):
                c = col[owner[(blk.name, p)]]
                if known[c] and n_rows and not np.array_equal(values[:, c], out[:, k]):
                    bad = order[c]
                    raise CircuitError(f"net {bad!r} driven inconsistently by block {blk.name!r}")
                values[:, c] = out[:, k]
                known[c] = True
            pending.remove(blk)
            progressed = True
        if not progressed:
            raise CircuitError("circuit has a combinational loop or undriven block inputs: "
                               + ", ".join(b.name for b in pending))
    return order, values


def intermediate_dataset(spec: CircuitSpec, library: Mapping[str, Rbm] | None, inputs,
                         functions: Mapping[str, CircuitFunction] | None = None) -> Dataset:
    """Full visible rows of the composed model for each input row."""
    rows = inputs.rows if isinstance(inputs, Dataset) else np.asarray(inputs, dtype=np.uint8)
    n_in = len(circuit_inputs(spec, functions))
    rows = rows.reshape(-1, n_in)
    order, values = evaluate_circuit(spec, rows, functions)
    if library is not None:
        target = spec.visible_order(_ports(spec, library))
        if target != order:
            idx = [order.index(n) for n in target]
            values, order = values[:, idx], target
    return Dataset(values, f"circuit propagation of {rows.shape[0]} input rows", tuple(order))


def circuit_violations(spec: CircuitSpec, labels: Sequence[str], rows,
                       functions: Mapping[str, CircuitFunction] | None = None) -> np.ndarray:
    """Number of blocks whose truth table each row violates."""
    fns = _functions(spec, functions)
    ports = {b.name: fns[b.name].labels for b in spec.blocks}
    owner = spec.port_nets(ports)
    col = {n: i for i, n in enumerate(labels)}
    rows = np.atleast_2d(np.asarray(rows, dtype=np.uint8))
    bad = np.zeros(rows.shape[0], dtype=np.int64)
    for blk in spec.blocks:
        f = fns[blk.name]
        cols = [col[owner[(blk.name, p)]] for p in f.labels]
        bad += ~f.is_valid(rows[:, cols])
    for net, bit in spec.consts.items():
        bad += rows[:, col[net]] != bit
    return bad


# ---------------------------------------------------------------------------
# standard circuits

def multiplier_circuit(n: int) -> CircuitSpec:
    """2n x 2n multiplier from four n x n multipliers and an adder tree.

    With A = AH*2^n + AL and B likewise, P = LL + (LH + HL)*2^n + HH*2^(2n).
    ``s1`` adds the cross terms, ``s2`` folds in LL's top half and HH's
    bottom half, and ``s3`` adds the remaining carries into HH's top half.
    """
    spec = CircuitSpec()
    width = 2 * n
    for name in ("ll", "lh", "hl", "hh"):
        spec.blocks.append(Block(name, f"mult{n}"))
    spec.blocks += [Block("s1", f"add{width}"), Block("s2", f"add{width}"), Block("s3", f"add{n}")]
    factors = {"ll": ("a", "b"), "lh": ("a", "b"), "hl": ("a", "b"), "hh": ("a", "b")}
    a_hi = {"ll": False, "lh": False, "hl": True, "hh": True}
    b_hi = {"ll": False, "lh": True, "hl": False, "hh": True}

    def add(net, *ends):
        spec.nets.setdefault(net, []).extend(ends)

    for blk in factors:
        for i in range(n):
            add(f"a{i + n * a_hi[blk]}", (blk, f"a{i}"))
            add(f"b{i + n * b_hi[blk]}", (blk, f"b{i}"))
    for i in range(width):
        add(f"lh_p{i}", ("lh", f"p{i}"), ("s1", f"a{i}"))
        add(f"hl_p{i}", ("hl", f"p{i}"), ("s1", f"b{i}"))
    for i in range(n):
        add(f"p{i}", ("ll", f"p{i}"))
    for i in range(n, width):
        add(f"ll_p{i}", ("ll", f"p{i}"), ("s2", f"a{i - n}"))
    for i in range(n):
        add(f"hh_p{i}", ("hh", f"p{i}"), ("s2", f"a{i + n}"))
    for i in range(n, width):
        add(f"hh_p{i}", ("hh", f"p{i}"), ("s3", f"a{i - n}"))
    for i in range(width):
        add(f"x1_{i}", ("s1", f"s{i}"), ("s2", f"b{i}"))
        add(f"p{n + i}", ("s2", f"s{i}"))
    add(f"x1_{width}", ("s1", f"s{width}"), ("s3", "cin"))
    add(f"x2_{width}", ("s2", f"s{width}"), ("s3", "b0"))
    for i in range(n):
        add(f"p{n + width + i}", ("s3", f"s{i}"))
    zero_ends = {"z_s1cin": [("s1", "cin")], "z_s2cin": [("s2", "cin")], "z_s3top": [("s3", f"s{n}")]}
    for i in range(1, n):
        zero_ends[f"z_s3b{i}"] = [("s3", f"b{i}")]
    for net, ends in zero_ends.items():
        spec.nets[net] = ends
        spec.consts[net] = 0
    spec.fields = {
        "a": tuple(f"a{i}" for i in range(width)),
        "b": tuple(f"b{i}" for i in range(width)),
        "p": tuple(f"p{i}" for i in range(2 * width)),
    }
    spec.inputs = spec.fields["a"] + spec.fields["b"]
    spec.outputs = spec.fields["p"]
    return spec


def sat_circuit(clauses: Sequence[Sequence[int]], n_vars: int) -> CircuitSpec:
    """3-literal CNF as or3 clause blocks ANDed into a net named ``sat``.

    Negative literals go through one ``not`` block per variable. Variable
    ``v`` (1-based, as in the clauses) lives on net ``x{v-1}`` so the nets form
    a little-endian field ``x``.
    """
    spec = CircuitSpec()
    if not clauses:
        raise CircuitError("need at least one clause")

    def add(net, *ends):
        spec.nets.setdefault(net, []).extend(ends)

    negated = sorted({abs(l) for c in clauses for l in c if l < 0})
    for v in negated:
        spec.blocks.append(Block(f"n{v}", "not"))
        add(f"x{v - 1}", (f"n{v}", "x"))
        add(f"nx{v - 1}", (f"n{v}", "out"))
    for v in range(1, n_vars + 1):
        spec.nets.setdefault(f"x{v - 1}", [])
    clause_nets = []
    for k, clause in enumerate(clauses, 1):
        if len(clause) != 3:
            raise CircuitError("only 3-literal clauses are supported")
        if any(abs(l) < 1 or abs(l) > n_vars for l in clause):
            raise CircuitError(f"clause {k} references a variable outside 1..{n_vars}")
        blk = f"c{k}"
        spec.blocks.append(Block(blk, "or3"))
        for port, lit in zip(("x", "y", "z"), clause):
            add(f"x{lit - 1}" if lit > 0 else f"nx{-lit - 1}", (blk, port))
        clause_nets.append(blk)
    prev = ("c1", "out")
    for k in range(2, len(clauses) + 1):
        g = f"g{k}"
        spec.blocks.append(Block(g, "and"))
        add(f"cl{k - 1}" if k == 2 else f"t{k - 1}", prev, (g, "x"))
        add(f"cl{k}", (f"c{k}", "out"), (g, "y"))
        prev = (g, "out")
    add("sat", prev)
    unused = [n for n, ends in spec.nets.items() if not ends]
    if unused:
        raise CircuitError(f"variables {unused} appear in no clause")
    spec.fields = {"x": tuple(f"x{v}" for v in range(n_vars)), "sat": ("sat",)}
    spec.inputs = spec.fields["x"]
    spec.outputs = ("sat",)
    return spec


def block_library(models: Iterable[tuple[str, Rbm]]) -> dict[str, Rbm]:
    return dict(models)
