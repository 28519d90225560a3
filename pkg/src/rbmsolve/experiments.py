"""Experiment drivers behind ``rbmsolve bench`` and the demos.

Each driver returns plain row dicts; ``write_csv`` emits them with a
``# key=value`` header carrying the config and seeds needed for replay.
"""

from __future__ import annotations

import csv
import json
import time
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fixsim import FixedEngine
from .model import Rbm
from .quantize import FixedRbm, LutConfig, QuantGrid, quantize_model
from .sampler import GibbsChains
from .tasks import BatchRun, TaskInstance, run_instances, verify_early_stop, encode, instance_predicate


def write_csv(path, rows: Sequence[Mapping], config: Mapping | None = None) -> None:
    """CSV with a comment header; ``path`` of ``-`` writes to stdout."""
    import sys

    fields: list[str] = []
    for row in rows:
        fields += [k for k in row if k not in fields]
    fh = sys.stdout if str(path) == "-" else open(path, "w", newline="")
    try:
        for k, v in (config or {}).items():
            fh.write(f"# {k}={json.dumps(v) if not isinstance(v, str) else v}\n")
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def read_csv(path) -> tuple[list[dict], dict]:
    """Inverse of ``write_csv``: rows as strings plus the header config."""
    config, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                k, _, v = line[2:].rstrip("\n").partition("=")
                config[k] = v
            else:
                lines.append(line)
    return list(csv.DictReader(lines)), config


# ---------------------------------------------------------------------------
# throughput

def _time(fn, n_samples: int, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(n_samples)
        best = min(best, time.perf_counter() - t0)
    return best


def throughput(n_visible: int = 64, n_hidden: int = 256, n_samples: int = 20000,
               n_chains: Iterable[int] = (1,), seed: int = 0, repeats: int = 3,
               total_bits: int = 8) -> list[dict]:
    """Samples per second of the float reference and the fixed engine.

    Both run the same random model (the fixed one is its quantization) with
    the same number of chains; a sample is one full visible vector of one chain.
    """
    model = Rbm.random(n_visible, n_hidden, seed, scale=0.5)
    grid = QuantGrid.for_max_weight(total_bits, 4.0)
    fixed = quantize_model(model, grid, LutConfig(grid.frac_bits), seed=seed)
    rows = []
    for nc in n_chains:
        chains = GibbsChains(model, None, seed=seed, n_chains=nc)

        def float_run(k):
            for _ in range(k):
                chains.step()

        engines = {"float": float_run}
        for backend in ("numba", "numpy"):
            eng = FixedEngine(fixed, None, n_chains=nc, backend=backend)
            eng.run_block(2)  # compile / warm up
            engines[f"fixed-{backend}"] = eng.run_block
        for name, fn in engines.items():
            k = n_samples if name != "fixed-numpy" else max(1, n_samples // 10)
            dt = _time(fn, k, repeats)
            rows.append({"engine": name, "n_visible": n_visible, "n_hidden": n_hidden,
                         "n_chains": nc, "samples": k * nc, "seconds": dt,
                         "samples_per_sec": k * nc / dt, "seed": seed})
    return rows


# ---------------------------------------------------------------------------
# task curves

def curve_rows(run: BatchRun, label: str, seed, n_instances: int) -> list[dict]:
    return [{"model": label, "samples": k, "p_correct": v, "n_instances": n_instances, "seed": seed}
            for k, v in run.p_correct().items()]


def p_correct_curve(model, instances: Sequence[TaskInstance], checkpoints: Sequence[int],
                    engine: str = "float", seed: int = 0, consts=None, label: str = "",
                    tie_model: Rbm | None = None) -> tuple[list[dict], BatchRun]:
    run = run_instances(model, instances, max(checkpoints), checkpoints, engine, seed,
                        consts, tie_model=tie_model)
    return curve_rows(run, label or engine, seed, len(instances)), run


def hitting_histogram(run: BatchRun, bins: Sequence[int] | None = None) -> list[dict]:
    """Histogram of first-hit indices on log-spaced bins; misses are counted separately."""
    n = run.n_samples
    if bins is None:
        bins = np.unique(np.round(np.logspace(0, np.log10(max(n, 2)), 25)).astype(int))
    bins = np.concatenate([[0], np.asarray(bins, dtype=np.int64)])
    hits = run.first_hit[run.first_hit >= 0]
    counts, edges = np.histogram(hits, bins=bins)
    rows = [{"bin_lo": int(lo), "bin_hi": int(hi), "count": int(c)}
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
    rows.append({"bin_lo": n, "bin_hi": "", "count": int((run.first_hit < 0).sum())})
    return rows


def hitting_vs_mixing(run: BatchRun) -> dict:
    """Medians of hitting time and mode-stabilization time over the runs.

    A chain that never hits is assigned the full run length.
    """
    hit = np.where(run.first_hit >= 0, run.first_hit + 1, run.n_samples)
    return {"runs": int(hit.size), "median_hitting": float(np.median(hit)),
            "median_stabilization": float(np.median(run.stabilized)),
            "mean_hitting": float(hit.mean()), "mean_stabilization": float(run.stabilized.mean())}


def samples_to_accuracy(curve: Mapping[int, float], target: float = 0.7) -> int | None:
    """Smallest measured sample count whose p_correct reaches ``target``."""
    for k in sorted(curve):
        if curve[k] >= target:
            return k
    return None


def early_stop_comparison(model, instances: Sequence[TaskInstance], max_samples: int,
                          seed: int = 0, consts=None, engine: str = "float") -> dict:
    """Samples each method spends to deliver a correct answer.

    Early stopping ends at the first verified sample. A plain run is charged
    its mode-stabilization time when the stable mode is correct. Either method
    is charged ``max_samples`` when it ends without a correct answer. The raw
    stabilization mean, correct or not, is reported as ``stabilization_mean``.
    """
    plain = run_instances(model, instances, max_samples, (), engine, seed, consts)
    ok = plain.correct[max_samples]
    plain_cost = np.where(ok, plain.stabilized, max_samples)
    used, verified = [], 0
    labels = model.visible_labels
    for i, inst in enumerate(instances):
        res = verify_early_stop(model, encode(inst, labels, consts),
                                lambda v, p=instance_predicate(inst, labels): bool(p(v)),
                                max_samples, seed=seed + i, engine=engine)
        used.append(res.samples_used if res.verified else max_samples)
        verified += res.verified
    return {"instances": len(instances), "max_samples": max_samples,
            "early_stop_mean": float(np.mean(used)), "plain_mean": float(plain_cost.mean()),
            "stabilization_mean": float(plain.stabilized.mean()),
            "plain_correct": float(ok.mean()), "verified": verified, "seed": seed}


def scaling(models: Mapping[int, object], instance_sets: Mapping[int, Sequence[TaskInstance]],
            checkpoints: Sequence[int], target: float = 0.7, seed: int = 0,
            consts: Mapping[int, Mapping[str, int] | None] | None = None) -> list[dict]:
    """Samples needed to reach ``target`` p_correct per factor width."""
    rows = []
    for width, model in sorted(models.items()):
        c = (consts or {}).get(width)
        run = run_instances(model, instance_sets[width], max(checkpoints), checkpoints,
                            "float", seed, c)
        curve = run.p_correct()
        rows.append({"factor_bits": 2 * width, "n_visible": model.n_visible,
                     "n_hidden": model.n_hidden, "instances": len(instance_sets[width]),
                     "samples_to_target": samples_to_accuracy(curve, target),
                     "target": target, "seed": seed,
                     "curve": json.dumps({str(k): round(v, 4) for k, v in curve.items()})})
    return rows
