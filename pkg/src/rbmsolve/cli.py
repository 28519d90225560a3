"""Command-line front end.

Subcommands: train, merge, quantize, sample, factor, sat, bench. Every CSV
written carries the command line, configuration and seeds as ``# key=value``
header lines. Errors print ``error[<category>]: <message>`` on stderr and exit
with the category's code (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import Dataset, generate_truth_table, lookup
from .fixtures import MAX_WEIGHT, fixture_dir, task_score
from .merge import CircuitError, MergeError, circuit_inputs, compose, intermediate_dataset, parse_circuit, sat_circuit
from .model import ClampPattern, DimensionError, EnumerationLimitError, Rbm, all_bit_vectors
from .modelio import FormatError, load_model, save_model, write_stream
from .quantize import FixedRbm, LutConfig, QuantGrid, quantize_model, quantize_rbm
from .tasks import (TaskError, encode, factor_instance, instance_predicate, read_instances,
                    run_instances, sat_instance, verify_early_stop, _tuples)
from .trainer import TrainConfig, geometric_lambda_schedule, init_rbm, train

EXIT_CODES = {"usage": 2, "io": 3, "format": 4, "model": 5, "circuit": 6, "task": 7, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# helpers

def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return {"rbmsolve_version": __version__, "argv": " ".join(sys.argv[1:]), **cfg}


def _resolve(path: str | None, kind: str = "model") -> Path:
    """Find ``path`` as given or inside the fixture directory."""
    if path is None:
        raise CliError("usage", f"missing {kind} path")
    p = Path(path)
    if p.is_file():
        return p
    fx = fixture_dir()
    for cand in (fx / path, fx / f"{path}.json", fx / f"{path}.rbm", fx / f"{path}.txt"):
        if cand.is_file():
            return cand
    raise CliError("io", f"{kind} file not found: {path}")


def _load(path: str):
    return load_model(_resolve(path), with_metadata=True)


def _check_out(out: str | None, *inputs: Path) -> Path:
    if out is None:
        raise CliError("usage", "missing --out")
    p = Path(out)
    for src in inputs:
        if p.exists() and src.exists() and p.resolve() == src.resolve():
            raise CliError("io", f"refusing to overwrite input file {src}")
    if not p.parent.exists():
        raise CliError("io", f"output directory does not exist: {p.parent}")
    return p


def _write_rows(path, rows, config) -> None:
    from .experiments import write_csv

    write_csv(path or "-", rows, config)


def _read_dataset(path: str) -> Dataset:
    p = Path(path)
    if not p.is_file():
        raise CliError("io", f"dataset file not found: {path}")
    with open(p) as fh:
        lines = [l.strip() for l in fh if l.strip() and not l.startswith("#")]
    if not lines:
        raise CliError("format", f"dataset {path} is empty")
    labels = tuple(lines[0].split(","))
    try:
        rows = np.array([[int(x) for x in l.split(",")] for l in lines[1:]], dtype=np.uint8)
    except ValueError:
        raise CliError("format", f"dataset {path} has non-integer entries") from None
    if rows.ndim != 2 or rows.shape[1] != len(labels) or np.any(rows > 1):
        raise CliError("format", f"dataset {path} rows must be 0/1 and match the header width")
    return Dataset(rows, f"file {p.name}", labels)


def _parse_clamps(text: str | None, labels) -> ClampPattern:
    pins = {}
    for tok in (text or "").replace(",", " ").split():
        name, _, bit = tok.partition("=")
        if bit not in ("0", "1"):
            raise CliError("usage", f"clamp {tok!r} must look like label=0 or label=1")
        if name not in labels:
            raise CliError("task", f"model has no visible unit {name!r}")
        pins[list(labels).index(name)] = int(bit)
    return ClampPattern(pins)


def _float_of(model):
    return model.dequantize() if isinstance(model, FixedRbm) else model


def _engine_model(model, engine: str):
    if engine == "fixed" and not isinstance(model, FixedRbm):
        raise CliError("model", "the fixed engine needs a quantized model (run `rbmsolve quantize`)")
    return _float_of(model) if engine == "float" else model


def _width_of(labels, field: str) -> int:
    w = 0
    while f"{field}{w}" in labels:
        w += 1
    return w


def _checkpoints(text: str | None, n: int) -> list[int]:
    if not text:
        pts = np.unique(np.round(np.logspace(1, np.log10(max(n, 10)), 9)).astype(int))
        return [int(x) for x in pts if x <= n] or [n]
    return sorted({int(x) for x in text.split(",")} | {n})


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    if args.dataset:
        data = _read_dataset(args.dataset)
        labels = data.labels
    elif args.circuit:
        try:
            circuit = lookup(args.circuit)
        except KeyError as exc:
            raise CliError("usage", str(exc.args[0])) from None
        data = generate_truth_table(circuit, args.max_rows, args.seed)
        labels = circuit.labels
    else:
        raise CliError("usage", "train needs --circuit or --dataset")
    if args.init:
        init, _ = _load(args.init)
        init = _float_of(init)
        if init.n_visible != len(labels):
            raise CliError("model", "initial model width does not match the dataset")
    else:
        if args.hidden is None:
            raise CliError("usage", "train needs --hidden when no --init model is given")
        init = init_rbm(len(labels), args.hidden, labels, args.seed, args.init_std)
    validation = None
    if args.circuit and len(labels) <= 20:
        circuit = lookup(args.circuit)
        validation = lambda m: task_score(m, circuit)
    grid = None
    schedule = ()
    if args.qat_bits:
        grid = QuantGrid.for_max_weight(args.qat_bits, args.max_weight or MAX_WEIGHT)
        schedule = geometric_lambda_schedule(args.epochs, args.qat_lambda)
        if validation is not None:
            inner = validation
            validation = lambda m: inner(quantize_rbm(m, grid))
    cfg = TrainConfig(cd_k=args.cd_k, learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                      max_weight=args.max_weight, momentum=args.momentum, seed=args.seed,
                      validation=validation, validate_every=max(1, args.epochs // 20),
                      quant_lambda_schedule=schedule,
                      quant_rate=args.qat_rate if args.qat_bits else None)
    out = _check_out(args.out, *([_resolve(args.init)] if args.init else []))
    result = train(init, data, cfg, grid)
    meta = {"circuit": args.circuit, "dataset": data.description, "seed": args.seed,
            "best_epoch": result.best_epoch, "max_weight": args.max_weight}
    save_model(out, result.model, meta)
    if args.log:
        result.write_log(args.log, _config(args))
    print(f"wrote {out}: {result.model.n_visible} visible x {result.model.n_hidden} hidden, "
          f"best epoch {result.best_epoch}")
    return 0


def _library(path: str | None) -> dict[str, Rbm]:
    base = Path(path) if path else fixture_dir()
    if not base.is_dir():
        raise CliError("io", f"library directory not found: {base}")
    lib = {}
    for f in sorted(base.glob("*.json")):
        model, meta = load_model(f, with_metadata=True)
        if isinstance(model, Rbm):
            lib[f.stem] = model
    return lib


def cmd_merge(args) -> int:
    spec_path = _resolve(args.circuit, "circuit")
    try:
        spec = parse_circuit(spec_path.read_text())
        library = _library(args.library)
        missing = sorted({b.kind for b in spec.blocks} - set(library))
        if missing:
            raise CliError("circuit", f"library has no block models for {missing}")
        merged = compose(spec, library)
    except (CircuitError, MergeError) as exc:
        raise CliError("circuit", str(exc)) from None
    n_sum = sum(library[b.kind].n_visible for b in spec.blocks)
    h_sum = sum(library[b.kind].n_hidden for b in spec.blocks)
    d = n_sum - merged.n_visible
    if merged.n_hidden != h_sum:
        raise CliError("internal", "hidden-unit count broke the dimension law")
    out = _check_out(args.out, spec_path)
    meta = {"circuit": spec_path.name, "consts": dict(spec.consts), "stage": "merged",
            "fields": {k: list(v) for k, v in spec.fields.items()}}
    model = merged
    if args.retrain_epochs:
        n_in = len(circuit_inputs(spec))
        if n_in > 20:
            raise CliError("usage", "retraining enumerates circuit inputs; at most 20 are supported")
        data = intermediate_dataset(spec, library, all_bit_vectors(n_in))
        cfg = TrainConfig(cd_k=args.cd_k, learning_rate=args.lr, batch_size=args.batch,
                          epochs=args.retrain_epochs, momentum=args.momentum,
                          max_weight=args.max_weight, seed=args.seed)
        model = train(merged, data, cfg).model
        meta.update(stage="retrained", retrain_epochs=args.retrain_epochs, seed=args.seed)
    save_model(out, model, meta)
    print(f"wrote {out}: {model.n_visible} visible (sum {n_sum} - {d} merged) x "
          f"{model.n_hidden} hidden")
    return 0


def cmd_quantize(args) -> int:
    src = _resolve(args.model)
    model, meta = load_model(src, with_metadata=True)
    if isinstance(model, FixedRbm):
        raise CliError("model", "model is already quantized")
    grid = (QuantGrid(args.bits, args.frac_bits) if args.frac_bits is not None
            else QuantGrid.for_max_weight(args.bits, args.max_weight))
    lut = LutConfig(grid.frac_bits, args.compare_bits, args.saturation)
    out = _check_out(args.out, src)
    fixed = quantize_model(model, grid, lut, seed=args.seed, lfsr_bits=args.lfsr_bits, source=src.name)
    meta = {**meta, "quantized_from": src.name, "total_bits": grid.total_bits,
            "frac_bits": grid.frac_bits, "seed": args.seed}
    save_model(out, fixed, meta)
    clipped = int(np.sum(np.abs(model.weights) > grid.max_value))
    print(f"wrote {out}: {grid.total_bits}-bit grid, step {grid.step}, {clipped} weights saturated")
    return 0


def cmd_sample(args) -> int:
    model, meta = _load(args.model)
    eng_model = _engine_model(model, args.engine)
    clamps = _parse_clamps(args.clamp, model.visible_labels)
    if args.samples < 1:
        raise CliError("usage", "--samples must be at least 1")
    if args.engine == "fixed":
        from .fixsim import run

        fixed = eng_model.with_seeds(args.seed) if args.seed is not None else eng_model
        samples = run(fixed, clamps, args.samples + args.discard)
    else:
        from .sampler import sample_chain

        samples = sample_chain(eng_model, clamps, args.samples + args.discard, args.seed or 0)
    samples = samples[args.discard:]
    if args.out and args.out.endswith(".bin"):
        write_stream(_check_out(args.out, _resolve(args.model)), samples, seed=args.seed or 0)
        print(f"wrote {len(samples)} samples to {args.out}")
    else:
        rows = [dict(zip(model.visible_labels, map(int, s))) for s in samples]
        _write_rows(args.out, rows, _config(args))
    return 0


def _consts(meta: dict, args) -> dict | None:
    if getattr(args, "circuit", None):
        return dict(parse_circuit(_resolve(args.circuit, "circuit").read_text()).consts)
    return meta.get("consts") or None


def _task_rows(model, meta, instances, args, label_of) -> list[dict]:
    eng_model = _engine_model(model, args.engine)
    consts = _consts(meta, args)
    cps = _checkpoints(args.checkpoints, args.samples)
    float_model = _float_of(model)
    run = run_instances(eng_model, instances, args.samples, cps, args.engine, args.seed, consts,
                        args.discard, tie_model=float_model)
    rows = []
    labels = model.visible_labels
    for i, inst in enumerate(instances):
        from .tasks import AnswerCodec

        codec = AnswerCodec(inst, labels)
        final = codec.answer(int(run.modes[args.samples][i]))
        row = {**label_of(inst), "answer": " ".join(map(str, final)),
               "correct": bool(run.correct[args.samples][i]),
               "first_hit": int(run.first_hit[i]), "stabilized": int(run.stabilized[i])}
        for cp in cps:
            row[f"correct@{cp}"] = int(run.correct[cp][i])
        if args.early_stop:
            res = verify_early_stop(eng_model, encode(inst, labels, consts),
                                    lambda v, p=instance_predicate(inst, labels): bool(p(v)),
                                    args.samples, seed=args.seed + i, engine=args.engine)
            row["early_stop_samples"] = res.samples_used
            row["early_stop_verified"] = res.verified
        rows.append(row)
    summary = {f"p_correct@{k}": v for k, v in run.p_correct().items()}
    print(json.dumps(summary), file=sys.stderr)
    return rows


def cmd_factor(args) -> int:
    model, meta = _load(args.model)
    labels = model.visible_labels
    width = _width_of(labels, "a")
    if width == 0 or _width_of(labels, "b") != width or _width_of(labels, "p") != 2 * width:
        raise CliError("task", "model lacks a0.., b0.., p0.. fields of a multiplier")
    if args.instances:
        instances = read_instances(_resolve(args.instances, "instance"))
    elif args.product:
        instances = [factor_instance(p, width) for p in args.product]
    else:
        raise CliError("usage", "factor needs --product or --instances")
    instances = [i for i in instances for _ in range(args.repeats)]
    rows = _task_rows(model, meta, instances, args,
                      lambda inst: {"kind": inst.kind, **{k: v for k, v in inst.clamped.items()}})
    _write_rows(args.out, rows, _config(args))
    return 0


def _read_clauses(args) -> tuple[tuple[tuple[int, ...], ...], int]:
    if args.clauses:
        clauses = _tuples(args.clauses)
    elif args.cnf:
        path = _resolve(args.cnf, "cnf")
        lits = []
        for line in path.read_text().splitlines():
            line = line.strip()
            if not line or line[0] in "cp%":
                continue
            lits += [int(x) for x in line.split()]
        clauses, cur = [], []
        for x in lits:
            if x == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(x)
        if cur:
            clauses.append(tuple(cur))
        clauses = tuple(clauses)
    else:
        raise CliError("usage", "sat needs --clauses or --cnf")
    n_vars = args.n_vars or max(abs(l) for c in clauses for l in c)
    return clauses, n_vars


def cmd_sat(args) -> int:
    clauses, n_vars = _read_clauses(args)
    try:
        spec = sat_circuit(clauses, n_vars)
        library = _library(args.library)
        model = compose(spec, library)
        inst = sat_instance(clauses, n_vars)
    except (CircuitError, MergeError) as exc:
        raise CliError("circuit", str(exc)) from None
    if args.engine == "fixed":
        grid = QuantGrid.for_max_weight(args.bits, MAX_WEIGHT)
        model = quantize_model(model, grid, LutConfig(grid.frac_bits), seed=args.seed)
    args.circuit = None
    rows = _task_rows(model, {"consts": dict(spec.consts)}, [inst] * args.repeats, args,
                      lambda inst: {"kind": "sat", "clauses": " ".join(",".join(map(str, c)) for c in clauses),
                                    "satisfiable": bool(inst.expected)})
    _write_rows(args.out, rows, _config(args))
    return 0


def cmd_bench(args) -> int:
    from . import experiments as ex
    from .fixtures import load_circuit, load_fixture
    from .tasks import valid_products

    if args.kind == "throughput":
        rows = ex.throughput(args.visible, args.hidden, args.samples,
                             [int(c) for c in args.chains.split(",")], args.seed)
    elif args.kind in ("curves", "hitting"):
        model, meta = _load(args.model)
        width = _width_of(model.visible_labels, "a")
        prods = args.product or valid_products(width)
        instances = [factor_instance(p, width) for p in prods] * args.repeats
        consts = meta.get("consts") or None
        cps = _checkpoints(args.checkpoints, args.samples)
        engines = ["float", "fixed"] if args.engine == "both" else [args.engine]
        rows, run = [], None
        for eng in engines:
            r, run = ex.p_correct_curve(_engine_model(model, eng), instances, cps, eng, args.seed,
                                        consts, label=eng, tie_model=_float_of(model))
            rows += r
        if args.kind == "hitting":
            summary = ex.hitting_vs_mixing(run)
            rows = [{**row, **summary} for row in ex.hitting_histogram(run)]
    elif args.kind == "scaling":
        spec = load_circuit("mult4_circuit")
        models = {2: load_fixture("mult2"), 3: load_fixture("mult3"), 4: load_fixture("mult4_retrained")}
        inst = {w: [factor_instance(p, w) for p in valid_products(w)] * args.repeats for w in models}
        cps = _checkpoints(args.checkpoints, args.samples)
        rows = ex.scaling(models, inst, cps, args.target, args.seed, {4: dict(spec.consts)})
    else:
        raise CliError("usage", f"unknown bench kind {args.kind!r}")
    _write_rows(args.out, rows, _config(args))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rbmsolve",
        description="Train, merge, quantize and sample RBM circuit solvers. "
                    "Model and circuit names that are not existing paths are looked up in the "
                    "fixture directory ($RBMSOLVE_FIXTURES, default: the packaged data/).",
        epilog="Exit codes: " + ", ".join(f"{v}={k}" for k, v in EXIT_CODES.items()))
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common_train(sp, epochs):
        sp.add_argument("--epochs", type=int, default=epochs)
        sp.add_argument("--lr", type=float, default=0.2, help="learning rate")
        sp.add_argument("--batch", type=int, default=16, help="mini-batch size")
        sp.add_argument("--cd-k", type=int, default=5, help="Gibbs steps per CD update")
        sp.add_argument("--momentum", type=float, default=0.5)
        sp.add_argument("--max-weight", type=float, default=None, help="hard clip on |w| and |bias|")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train an RBM on a truth table or dataset CSV")
    t.add_argument("--circuit", help="circuit function name: and, or, xor, not, or3, half_adder, addN, multN")
    t.add_argument("--dataset", help="CSV with a label header and 0/1 rows")
    t.add_argument("--hidden", type=int, help="number of hidden units")
    t.add_argument("--init", help="start from this model instead of a fresh one")
    t.add_argument("--init-std", type=float, default=0.01)
    t.add_argument("--max-rows", type=int, default=None, help="subsample truth tables larger than this")
    t.add_argument("--qat-bits", type=int, default=None, help="quantization-aware retraining grid width")
    t.add_argument("--qat-lambda", type=float, default=1.0, help="final lambda of the geometric ramp")
    t.add_argument("--qat-rate", type=float, default=0.01, help="step size of the quantization pull")
    t.add_argument("--out", required=True, help="output model path (.json or binary)")
    t.add_argument("--log", help="training log CSV")
    common_train(t, 2000)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("merge", help="compose block models along a circuit description")
    m.add_argument("--circuit", required=True, help="circuit text file")
    m.add_argument("--library", help="directory of block models named by kind (default: fixtures)")
    m.add_argument("--retrain-epochs", type=int, default=0, help="retrain on propagated circuit data")
    m.add_argument("--out", required=True)
    common_train(m, 0)
    m.set_defaults(func=cmd_merge, lr=0.05, batch=32, max_weight=MAX_WEIGHT)

    q = sub.add_parser("quantize", help="convert a float model to fixed point")
    q.add_argument("--model", required=True)
    q.add_argument("--bits", type=int, default=8, help="total signed bits")
    q.add_argument("--frac-bits", type=int, default=None, help="binary point (default: fit --max-weight)")
    q.add_argument("--max-weight", type=float, default=MAX_WEIGHT)
    q.add_argument("--compare-bits", type=int, default=16)
    q.add_argument("--saturation", type=float, default=8.0)
    q.add_argument("--lfsr-bits", type=int, default=32, choices=(8, 16, 24, 32))
    q.add_argument("--seed", type=int, default=0, help="master seed of the LFSR bank")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    s = sub.add_parser("sample", help="draw visible samples")
    s.add_argument("--model", required=True)
    s.add_argument("--engine", choices=("float", "fixed"), default="float")
    s.add_argument("--clamp", help="pins such as 'p0=1,p1=0'")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--discard", type=int, default=0)
    s.add_argument("--seed", type=int, default=None,
                   help="float: RNG seed (default 0); fixed: master seed (default: the model's bank)")
    s.add_argument("--out", help="CSV path, or .bin for a packed stream (default: CSV on stdout)")
    s.set_defaults(func=cmd_sample)

    def common_task(sp):
        sp.add_argument("--engine", choices=("float", "fixed"), default="float")
        sp.add_argument("--samples", type=int, default=10000)
        sp.add_argument("--checkpoints", help="comma-separated sample counts")
        sp.add_argument("--discard", type=int, default=0)
        sp.add_argument("--repeats", type=int, default=1, help="independent chains per instance")
        sp.add_argument("--early-stop", action="store_true", help="also run verified early stopping")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="CSV path (default: stdout)")

    f = sub.add_parser("factor", help="factor products with a multiplier model")
    f.add_argument("--model", required=True)
    f.add_argument("--product", type=int, nargs="*")
    f.add_argument("--instances", help="instance file (one instance per line)")
    f.add_argument("--circuit", help="circuit text whose constants to pin (default: model metadata)")
    common_task(f)
    f.set_defaults(func=cmd_factor)

    st = sub.add_parser("sat", help="solve a 3SAT instance with composed gate models")
    st.add_argument("--clauses", help="clauses like '1,-2,3/2,3,-4'")
    st.add_argument("--cnf", help="DIMACS-style file of 3-literal clauses")
    st.add_argument("--n-vars", type=int, default=None)
    st.add_argument("--library", help="directory with not/or3/and models (default: fixtures)")
    st.add_argument("--bits", type=int, default=8, help="grid width for --engine fixed")
    common_task(st)
    st.set_defaults(func=cmd_sat)

    b = sub.add_parser("bench", help="throughput, p_correct curves, hitting histograms, scaling")
    b.add_argument("kind", choices=("throughput", "curves", "hitting", "scaling"))
    b.add_argument("--model", default="mult2_fx8", help="model for curves/hitting")
    b.add_argument("--engine", choices=("float", "fixed", "both"), default="both")
    b.add_argument("--product", type=int, nargs="*")
    b.add_argument("--samples", type=int, default=10000)
    b.add_argument("--checkpoints")
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--target", type=float, default=0.7)
    b.add_argument("--visible", type=int, default=64)
    b.add_argument("--hidden", type=int, default=256)
    b.add_argument("--chains", default="1,16")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="CSV path (default: stdout)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        category, msg = "io", str(exc)
    except FormatError as exc:
        category, msg = "format", str(exc)
    except (DimensionError, EnumerationLimitError) as exc:
        category, msg = "model", str(exc)
    except (CircuitError, MergeError) as exc:
        category, msg = "circuit", str(exc)
    except TaskError as exc:
        category, msg = "task", str(exc)
    except Exception as exc:  # noqa: BLE001 - keep the exit-code contract
        if os.environ.get("RBMSOLVE_DEBUG"):
            raise
        category, msg = "internal", f"{type(exc).__name__}: {exc}"
    print(f"error[{category}]: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
