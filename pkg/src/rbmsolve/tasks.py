"""Problem encodings, answer decoding and run statistics.

Integer fields map onto visible labels ``<field>0 .. <field>{w-1}``, least
significant bit first. Answers are indexed by a code in which the first
answer field is most significant, so ordering codes orders answers
lexicographically by field value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .circuits import sat_clause_value, to_bits
from .model import ClampPattern, Rbm, exact_distribution, free_energy

KINDS = ("multiply", "divide", "factor", "add", "subtract", "sat")


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskInstance:
    kind: str
    widths: Mapping[str, int]
    clamped: Mapping[str, int]
    answer_fields: tuple[str, ...]
    expected: frozenset | None = None
    clauses: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TaskError(f"unknown task kind {self.kind!r}")
        for name, value in self.clamped.items():
            w = self.widths[name]
            if value < 0 or value >> w:
                raise TaskError(f"value {value} does not fit field {name!r} of width {w}")
        missing = [f for f in self.answer_fields if f not in self.widths]
        if missing:
            raise TaskError(f"answer fields {missing} have no width")

    @property
    def answer_bits(self) -> int:
        return sum(self.widths[f] for f in self.answer_fields)

    def is_correct(self, answer: tuple[int, ...]) -> bool:
        if self.expected is not None:
            return tuple(answer) in self.expected
        return check_answer(self, answer)


def check_answer(inst: TaskInstance, answer: Sequence[int]) -> bool:
    """Polynomial-time verification of a decoded answer."""
    vals = dict(inst.clamped)
    vals.update(zip(inst.answer_fields, answer))
    if inst.kind == "sat":
        bits = to_bits(vals["x"], inst.widths["x"])
        return sat_clause_value(inst.clauses, bits)
    if inst.kind in ("add", "subtract"):
        return vals["a"] + vals["b"] + vals["cin"] == vals["s"]
    return vals["a"] * vals["b"] == vals["p"]


def _factor_pairs(p: int, width: int) -> frozenset:
    top = 2**width
    return frozenset((a, b) for a in range(top) for b in range(top) if a * b == p)


def factor_instance(p: int, width: int) -> TaskInstance:
    """Factor ``p`` into two ``width``-bit factors (both orders are correct)."""
    if p < 2:
        raise TaskError("products 0 and 1 are degenerate")
    pairs = _factor_pairs(p, width)
    if not pairs:
        raise TaskError(f"{p} has no factorization into {width}-bit factors")
    return TaskInstance("factor", {"a": width, "b": width, "p": 2 * width}, {"p": p}, ("a", "b"), pairs)


def multiply_instance(a: int, b: int, width: int) -> TaskInstance:
    return TaskInstance("multiply", {"a": width, "b": width, "p": 2 * width},
                        {"a": a, "b": b}, ("p",), frozenset({(a * b,)}))


def divide_instance(p: int, a: int, width: int) -> TaskInstance:
    """Find ``b`` with ``a * b == p``."""
    answers = frozenset((b,) for b in range(2**width) if a * b == p)
    if not answers:
        raise TaskError(f"{p} is not divisible by {a} within {width} bits")
    return TaskInstance("divide", {"a": width, "b": width, "p": 2 * width},
                        {"p": p, "a": a}, ("b",), answers)


def _adder_widths(width: int) -> dict[str, int]:
    return {"a": width, "b": width, "cin": 1, "s": width + 1}


def add_instance(a: int, b: int, cin: int, width: int) -> TaskInstance:
    """Forward query on a ``width``-bit adder: find ``s = a + b + cin``."""
    return TaskInstance("add", _adder_widths(width), {"a": a, "b": b, "cin": cin}, ("s",),
                        frozenset({(a + b + cin,)}))


def subtract_instance(s: int, a: int, cin: int, width: int) -> TaskInstance:
    """Reverse query on an adder: find ``b`` with ``a + b + cin == s``."""
    b = s - a - cin
    if not 0 <= b < 2**width:
        raise TaskError(f"no {width}-bit b gives {a} + b + {cin} = {s}")
    return TaskInstance("subtract", _adder_widths(width), {"s": s, "a": a, "cin": cin}, ("b",),
                        frozenset({(b,)}))


def random_adder_instances(width: int, count: int, seed=None) -> list[TaskInstance]:
    """Half forward (add) and half reverse (subtract) queries, uniform operands."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        a, b = (int(x) for x in rng.integers(0, 2**width, 2))
        cin = int(rng.integers(0, 2))
        out.append(add_instance(a, b, cin, width) if k % 2 == 0
                   else subtract_instance(a + b + cin, a, cin, width))
    return out


def sat_instance(clauses: Sequence[Sequence[int]], n_vars: int) -> TaskInstance:
    clauses = tuple(tuple(int(l) for l in c) for c in clauses)
    sols = frozenset((x,) for x in range(2**n_vars)
                     if sat_clause_value(clauses, to_bits(x, n_vars)))
    return TaskInstance("sat", {"x": n_vars, "sat": 1}, {"sat": 1}, ("x",), sols, clauses)


def valid_products(width: int) -> list[int]:
    top = 2**width
    return sorted({a * b for a in range(top) for b in range(top)} - {0, 1})


def random_factor_instances(width: int, count: int, seed=None) -> list[TaskInstance]:
    """Uniform over products >= 2 having at least one in-range factorization."""
    rng = np.random.default_rng(seed)
    prods = valid_products(width)
    return [factor_instance(int(p), width) for p in rng.choice(prods, size=count)]


def multiplier_instances(width: int) -> list[TaskInstance]:
    """Every multiplication, division and factorization query of a width-bit multiplier."""
    top = 2**width
    out = [multiply_instance(a, b, width) for a in range(top) for b in range(top)]
    out += [divide_instance(a * b, a, width) for a in range(1, top) for b in range(top)]
    out += [factor_instance(p, width) for p in valid_products(width)]
    return out


# ---------------------------------------------------------------------------
# instance files: one instance per line, ``kind width key=value ...``
#   factor 4 p=143
#   multiply 2 a=3 b=2
#   divide 2 p=6 a=3
#   add 1 a=1 b=0 cin=1
#   subtract 2 s=5 a=3 cin=0
#   sat 4 clauses=1,-2,3/2,3,-4
# An optional ``expect=`` token lists correct answers as ``/``-separated tuples
# of comma-separated field values and replaces the computed expected set.

def _tuples(text: str) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(x) for x in part.split(",")) for part in text.split("/") if part)


def parse_instance(line: str) -> TaskInstance:
    tokens = line.split()
    if len(tokens) < 2:
        raise TaskError(f"instance line needs a kind and a width: {line!r}")
    kind, width = tokens[0], tokens[1]
    try:
        width = int(width)
        kv = dict(t.split("=", 1) for t in tokens[2:])
    except ValueError:
        raise TaskError(f"malformed instance line: {line!r}") from None
    expect = kv.pop("expect", None)
    try:
        if kind == "factor":
            inst = factor_instance(int(kv.pop("p")), width)
        elif kind == "multiply":
            inst = multiply_instance(int(kv.pop("a")), int(kv.pop("b")), width)
        elif kind == "divide":
            inst = divide_instance(int(kv.pop("p")), int(kv.pop("a")), width)
        elif kind == "add":
            inst = add_instance(int(kv.pop("a")), int(kv.pop("b")), int(kv.pop("cin", 0)), width)
        elif kind == "subtract":
            inst = subtract_instance(int(kv.pop("s")), int(kv.pop("a")), int(kv.pop("cin", 0)), width)
        elif kind == "sat":
            inst = sat_instance(_tuples(kv.pop("clauses")), width)
        else:
            raise TaskError(f"unknown task kind {kind!r}")
    except KeyError as exc:
        raise TaskError(f"{kind} instance is missing {exc.args[0]!r}: {line!r}") from None
    if kv:
        raise TaskError(f"unexpected keys {sorted(kv)} in {line!r}")
    if expect is not None:
        inst = replace(inst, expected=frozenset(_tuples(expect)))
    return inst


def format_instance(inst: TaskInstance, with_expected: bool = False) -> str:
    if inst.kind == "sat":
        width = inst.widths["x"]
        body = "clauses=" + "/".join(",".join(map(str, c)) for c in inst.clauses)
    else:
        width = inst.widths["a"]
        body = " ".join(f"{k}={v}" for k, v in inst.clamped.items())
    line = f"{inst.kind} {width} {body}"
    if with_expected and inst.expected is not None:
        line += " expect=" + "/".join(",".join(map(str, a)) for a in sorted(inst.expected))
    return line


def read_instances(path) -> list[TaskInstance]:
    out = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                out.append(parse_instance(line))
    return out


def write_instances(path, instances: Iterable[TaskInstance], with_expected: bool = False) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(format_instance(inst, with_expected) + "\n")


# ---------------------------------------------------------------------------
# encoding / decoding

def field_columns(labels: Sequence[str], name: str, width: int) -> list[int]:
    index = {l: i for i, l in enumerate(labels)}
    if width == 1 and name in index and f"{name}0" not in index:
        return [index[name]]
    try:
        return [index[f"{name}{i}"] for i in range(width)]
    except KeyError as exc:
        raise TaskError(f"model has no unit {exc.args[0]!r} for field {name!r}") from None


def encode(instance: TaskInstance, labels: Sequence[str],
           consts: Mapping[str, int] | None = None) -> ClampPattern:
    """Clamp pattern posing ``instance`` on a model with visible ``labels``."""
    pins: dict[int, int] = {}
    for name, value in instance.clamped.items():
        w = instance.widths[name]
        cols = field_columns(labels, name, w)
        for c, bit in zip(cols, to_bits(value, w)):
            pins[c] = int(bit)
    for net, bit in (consts or {}).items():
        pins[list(labels).index(net)] = int(bit)
    return ClampPattern(pins)


class AnswerCodec:
    """Maps visible rows to answer codes and back for one instance layout."""

    def __init__(self, instance: TaskInstance, labels: Sequence[str]):
        self.fields = instance.answer_fields
        self.widths = [instance.widths[f] for f in self.fields]
        cols, weights = [], []
        shift = sum(self.widths)
        for f, w in zip(self.fields, self.widths):
            shift -= w
            cols += field_columns(labels, f, w)
            weights += [1 << (shift + i) for i in range(w)]
        self.columns = np.array(cols, dtype=np.int64)
        self.weights = np.array(weights, dtype=np.int64)
        self.n_codes = 1 << sum(self.widths)

    def code(self, visible) -> np.ndarray:
        v = np.asarray(visible)
        return v[..., self.columns].astype(np.int64) @ self.weights

    def answer(self, code: int) -> tuple[int, ...]:
        out = []
        shift = sum(self.widths)
        for w in self.widths:
            shift -= w
            out.append((int(code) >> shift) & ((1 << w) - 1))
        return tuple(out)


@dataclass
class RunStats:
    """Histogram over answer codes from one chain."""

    counts: np.ndarray
    total: int
    first_hit: int | None = None
    representatives: np.ndarray | None = None
    mode_trace: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if int(np.sum(self.counts)) != self.total:
            raise ValueError("histogram counts must sum to the sample total")

    @classmethod
    def from_samples(cls, samples: np.ndarray, codec: AnswerCodec,
                     predicate: Callable[[np.ndarray], np.ndarray] | None = None) -> "RunStats":
        samples = np.atleast_2d(samples)
        codes = codec.code(samples)
        counts = np.bincount(codes, minlength=codec.n_codes)
        reps = np.zeros((codec.n_codes, samples.shape[1]), dtype=np.uint8)
        reps[codes] = samples  # last occurrence wins
        hit = None
        if predicate is not None:
            ok = np.flatnonzero(predicate(samples))
            hit = int(ok[0]) if ok.size else None
        return cls(counts, samples.shape[0], hit, reps)


def decode_mode(stats: RunStats, model: Rbm | None = None) -> int:
    """Answer code with the highest count.

    Ties go to the lowest free energy of each code's representative sample
    (when a model and representatives are available), then to the lowest code.
    """
    if stats.total < 1:
        raise TaskError("no samples to decode")
    counts = np.asarray(stats.counts)
    top = np.flatnonzero(counts == counts.max())
    if top.size == 1:
        return int(top[0])
    if model is not None and stats.representatives is not None:
        fe = np.atleast_1d(free_energy(model, stats.representatives[top]))
        best = top[np.isclose(fe, fe.min(), rtol=0, atol=1e-12)]
        return int(best.min())
    return int(top.min())


def instance_predicate(instance: TaskInstance, labels: Sequence[str]) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized verifier: which visible rows decode to a correct answer."""
    codec = AnswerCodec(instance, labels)
    table = np.array([check_answer(instance, codec.answer(c)) for c in range(codec.n_codes)])
    return lambda visible: table[codec.code(visible)]


# ---------------------------------------------------------------------------
# batched runs

@dataclass
class BatchRun:
    """Per-instance results of a batched sampling run."""

    modes: dict[int, np.ndarray]          # checkpoint -> decoded mode codes
    correct: dict[int, np.ndarray]        # checkpoint -> bool per instance
    first_hit: np.ndarray                  # -1 when never hit
    stabilized: np.ndarray                 # samples until the running mode last changed
    n_samples: int
    counts: np.ndarray

    def p_correct(self) -> dict[int, float]:
        return {k: float(np.mean(v)) for k, v in sorted(self.correct.items())}


def make_engine(model, clamps: list[ClampPattern], engine: str, seed):
    """Build a batched engine; ``model`` is an Rbm for "float" or FixedRbm for "fixed"."""
    if engine == "float":
        from .sampler import GibbsChains

        chains = GibbsChains(model, clamps, seed=seed)

        def block(k):
            out = np.empty((k, chains.n_chains, model.n_visible), dtype=np.uint8)
            for t in range(k):
                out[t] = chains.step()
            return out

        return block
    if engine == "fixed":
        from .fixsim import FixedEngine
        from .quantize import FixedRbm

        if not isinstance(model, FixedRbm):
            raise TaskError("fixed engine needs a FixedRbm")
        fixed = model if seed is None else model.with_seeds(int(seed))
        eng = FixedEngine(fixed, clamps)
        return eng.run_block
    raise TaskError(f"unknown engine {engine!r}")


def _layout(inst: TaskInstance):
    return (inst.kind, tuple(inst.answer_fields), tuple(sorted(inst.widths.items())))


def run_instances(model, instances: Sequence[TaskInstance], n_samples: int,
                  checkpoints: Iterable[int] = (), engine: str = "float", seed=0,
                  consts: Mapping[str, int] | None = None, discard: int = 0,
                  tie_model: Rbm | None = None, block: int = 512) -> BatchRun:
    """One chain per instance, all advanced together.

    ``discard`` drops that many leading samples from the histograms; hitting
    times always index the full stream.
    """
    if not instances:
        raise TaskError("need at least one instance")
    labels = model.visible_labels
    layouts = {_layout(i) for i in instances}
    if len(layouts) != 1:
        raise TaskError("batched instances must share one answer layout")
    codec = AnswerCodec(instances[0], labels)
    clamps = [encode(inst, labels, consts) for inst in instances]
    n = len(instances)
    ok_table = np.array([[inst.is_correct(codec.answer(c)) for c in range(codec.n_codes)]
                         for inst in instances])
    checkpoints = sorted({int(c) for c in checkpoints if 0 < c <= n_samples} | {n_samples})
    counts = np.zeros((n, codec.n_codes), dtype=np.int64)
    reps = np.zeros((n, codec.n_codes, model.n_visible), dtype=np.uint8)
    first_hit = np.full(n, -1, dtype=np.int64)
    mode = np.zeros(n, dtype=np.int64)
    last_change = np.zeros(n, dtype=np.int64)
    ar = np.arange(n)
    modes, correct = {}, {}
    next_cp = 0
    step = make_engine(model, clamps, engine, seed)
    fe_model = tie_model if tie_model is not None else (model if isinstance(model, Rbm) else None)
    t = 0
    while t < n_samples:
        chunk = step(min(block, n_samples - t))
        codes_blk = chunk[..., codec.columns].astype(np.int64) @ codec.weights
        for k in range(chunk.shape[0]):
            codes = codes_blk[k]
            hit = ok_table[ar, codes] & (first_hit < 0)
            first_hit[hit] = t
            if t >= discard:
                counts[ar, codes] += 1
                reps[ar, codes] = chunk[k]
                better = counts[ar, codes] > counts[ar, mode]
                changed = better & (codes != mode)
                mode[better] = codes[better]
                last_change[changed] = t - discard
            t += 1
            if next_cp < len(checkpoints) and t == checkpoints[next_cp]:
                cp = checkpoints[next_cp]
                m = np.array([decode_mode(RunStats(counts[i], int(counts[i].sum()), None, reps[i]), fe_model)
                              if counts[i].sum() else 0 for i in range(n)])
                modes[cp] = m
                correct[cp] = ok_table[ar, m] & (counts.sum(axis=1) > 0)
                next_cp += 1
    return BatchRun(modes, correct, first_hit, last_change + 1, n_samples, counts)


def p_correct(model, instances: Sequence[TaskInstance], sample_counts: Sequence[int],
              engine: str = "float", seed=0, consts: Mapping[str, int] | None = None,
              discard: int = 0) -> dict[int, float]:
    """Fraction of instances whose sampled mode is correct at each sample count.

    Instances with different answer layouts (say add and subtract queries)
    are run as separate batches and pooled.
    """
    if not instances:
        raise TaskError("p_correct needs at least one instance")
    groups: dict = {}
    for inst in instances:
        groups.setdefault(_layout(inst), []).append(inst)
    hits = {c: 0.0 for c in sorted(set(sample_counts))}
    for k, group in enumerate(groups.values()):
        run = run_instances(model, group, max(sample_counts), sample_counts, engine,
                            None if seed is None else seed + 7919 * k, consts, discard)
        for c in hits:
            hits[c] += float(np.sum(run.correct[c]))
    return {c: h / len(instances) for c, h in hits.items()}


def exact_p_correct(model: Rbm, instances: Sequence[TaskInstance],
                    consts: Mapping[str, int] | None = None) -> float:
    """p_correct in the infinite-sample limit: argmax of the exact conditional."""
    if not instances:
        raise TaskError("need at least one instance")
    hits = 0
    for inst in instances:
        clamps = encode(inst, model.visible_labels, consts)
        dist = exact_distribution(model, clamps)
        codec = AnswerCodec(inst, model.visible_labels)
        probs = np.bincount(codec.code(dist.support), weights=dist.probs, minlength=codec.n_codes)
        top = np.flatnonzero(np.isclose(probs, probs.max(), rtol=1e-12, atol=0))
        hits += inst.is_correct(codec.answer(int(top.min())))
    return hits / len(instances)


def exact_answer_distribution(model: Rbm, inst: TaskInstance,
                              consts: Mapping[str, int] | None = None) -> np.ndarray:
    clamps = encode(inst, model.visible_labels, consts)
    dist = exact_distribution(model, clamps)
    codec = AnswerCodec(inst, model.visible_labels)
    return np.bincount(codec.code(dist.support), weights=dist.probs, minlength=codec.n_codes)


# ---------------------------------------------------------------------------
# single-stream analysis

def hitting_time(stream: Iterable, predicate: Callable) -> int | None:
    """Index of the first sample satisfying ``predicate``, or None."""
    for i, sample in enumerate(stream):
        if predicate(sample):
            return i
    return None


def mode_stabilization(codes: Sequence[int]) -> int:
    """Samples needed before the running mode stops changing."""
    counts: dict[int, int] = {}
    mode, best, last = None, 0, 0
    for t, c in enumerate(codes):
        counts[c] = counts.get(c, 0) + 1
        if counts[c] > best:
            if c != mode:
                last = t
            mode, best = c, counts[c]
    return last + 1


def mode_is_stable(codes: Sequence[int], tail: float = 0.2) -> bool:
    """True when the running mode did not change over the final ``tail`` fraction."""
    codes = list(codes)
    return mode_stabilization(codes) <= math.ceil(len(codes) * (1 - tail))


@dataclass
class EarlyStopResult:
    answer: np.ndarray
    samples_used: int
    verified: bool


def verify_early_stop(model, clamps: ClampPattern, predicate: Callable[[np.ndarray], bool],
                      max_samples: int, seed=0, engine: str = "float") -> EarlyStopResult:
    """Sample until ``predicate`` accepts a visible vector.

    Falls back to the most frequent visible vector (``verified=False``) when
    no sample passes within ``max_samples``.
    """
    if max_samples < 1:
        raise TaskError("max_samples must be positive; no samples to fall back on")
    step = make_engine(model, [clamps], engine, seed)
    seen: dict[bytes, int] = {}
    t = 0
    while t < max_samples:
        chunk = step(min(256, max_samples - t))[:, 0, :]
        for v in chunk:
            t += 1
            if predicate(v):
                return EarlyStopResult(v.copy(), t, True)
            key = v.tobytes()
            seen[key] = seen.get(key, 0) + 1
    best = max(sorted(seen), key=seen.__getitem__)
    return EarlyStopResult(np.frombuffer(best, dtype=np.uint8).copy(), t, False)
