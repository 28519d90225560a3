"""Acceptance criteria 1-9 at their stated tolerances.

Each test records one PASS/FAIL line, shown in the terminal summary.
"""

import numpy as np
import pytest

from rbmsolve.experiments import early_stop_comparison, hitting_vs_mixing, throughput
from rbmsolve.fixsim import TAPS, leap, leap_tables, lfsr_period, run
from rbmsolve.fixtures import GOLDEN_SAMPLES, fixture_dir, load_circuit, load_fixture
from rbmsolve.merge import MergeSpec, merge
from rbmsolve.model import ClampPattern, Rbm, empirical_distribution, exact_distribution, total_variation
from rbmsolve.modelio import read_stream
from rbmsolve.sampler import GibbsChains
from rbmsolve.tasks import factor_instance, run_instances, valid_products

from conftest import report
from test_merge import additivity_gap, product_tv, random_pair_and_spec

SUITE_CHECKPOINTS = [10, 30, 100, 300, 1000, 3000, 10000]


def suite(width=2, repeats=40, products=None):
    return [factor_instance(p, width) for p in (products or valid_products(width)) for _ in range(repeats)]


def fmt_curve(curve):
    return " ".join(f"{k}:{v:.3f}" for k, v in curve.items())


def test_criterion_1_merge_algebra():
    rng = np.random.default_rng(1)
    worst_e, worst_tv = 0.0, 0.0
    for _ in range(100):
        a, b, spec = random_pair_and_spec(rng, 4, 3)
        m = merge(a, b, spec)
        worst_e = max(worst_e, additivity_gap(a, b, spec, m, rng))
        worst_tv = max(worst_tv, product_tv(a, b, spec, m))
    ok = worst_e <= 1e-12 and worst_tv <= 1e-10
    report(1, ok, f"100 pairs, max energy gap {worst_e:.2e} (<=1e-12), max TV {worst_tv:.2e} (<=1e-10)")
    assert ok


def test_criterion_2_sampler_correctness():
    rng = np.random.default_rng(2)
    tvs = []
    for i in range(20):
        nv = int(rng.integers(2, 13))
        nh = int(rng.integers(1, 9))
        model = Rbm.random(nv, nh, rng, scale=1.0)
        # pin the units beyond ten so at most ten stay free
        clamps = ClampPattern({j: int(rng.integers(0, 2)) for j in range(10, nv)})
        chains = GibbsChains(model, clamps, seed=100 + i, n_chains=10)
        for _ in range(1000):
            chains.step()
        samples = np.concatenate([chains.step() for _ in range(100_000)])
        tvs.append(total_variation(empirical_distribution(samples), exact_distribution(model, clamps)))
    ok = max(tvs) < 0.02
    report(2, ok, f"20 models, 1e6 samples each (10 chains x 1e5 after 1e3 discarded), "
                  f"max TV {max(tvs):.4f} (<0.02)")
    assert ok


def test_criterion_3_desk_scale_factorization():
    model = load_fixture("mult2")
    composites = [p for p in valid_products(2) if p not in (2, 3)]
    insts = suite(2, 34, composites)
    curve = run_instances(model, insts, 10**5, [100, 1000, 10**4], seed=3).p_correct()
    ok = (model.n_visible, model.n_hidden) == (8, 16) and curve[10**5] >= 0.9
    report(3, ok, f"mult2 8x16, products {composites} x 34 chains, p_correct {fmt_curve(curve)} "
                  f"(>=0.9 at 1e5)")
    assert ok


@pytest.fixture(scope="module")
def mult4_runs():
    spec = load_circuit("mult4_circuit")
    consts = dict(spec.consts)
    insts = suite(4, 3)
    cps = [10, 30, 100, 300, 1000, 3000, 10000, 20000]
    runs = {stage: run_instances(load_fixture(f"mult4_{stage}"), insts, 20000, cps, seed=5, consts=consts)
            for stage in ("merged", "retrained")}
    return insts, consts, runs


def test_criterion_4_merge_retrain_advantage(mult4_runs):
    insts, _, runs = mult4_runs
    merged, retrained = runs["merged"].p_correct(), runs["retrained"].p_correct()
    ok = len(insts) >= 50 and all(retrained[k] >= merged[k] for k in merged)
    report(4, ok, f"8-bit factoring, {len(insts)} instances; merged {fmt_curve(merged)}; "
                  f"retrained {fmt_curve(retrained)}")
    assert ok


@pytest.fixture(scope="module")
def suite_curves():
    insts = suite()
    curves = {"float": run_instances(load_fixture("mult2"), insts, 10000, SUITE_CHECKPOINTS, seed=6).p_correct()}
    for name in ("mult2_fx8", "mult2_fx6"):
        fx = load_fixture(name)
        curves[name] = run_instances(fx, insts, 10000, SUITE_CHECKPOINTS, engine="fixed", seed=6,
                                     tie_model=fx.dequantize()).p_correct()
    return len(insts), curves


def test_criterion_5_quantization_robustness(suite_curves):
    n, curves = suite_curves
    loss = {name: max(curves["float"][k] - curves[name][k] for k in SUITE_CHECKPOINTS)
            for name in ("mult2_fx8", "mult2_fx6")}
    ok = all(v <= 0.10 for v in loss.values())
    report(5, ok, f"{n} instances; max p_correct loss vs float: 8-bit {loss['mult2_fx8']:.3f}, "
                  f"6-bit QAT {loss['mult2_fx6']:.3f} (<=0.10)")
    assert ok


def test_criterion_6_fixed_engine_fidelity(suite_curves):
    n, curves = suite_curves
    gap = max(abs(curves["float"][k] - curves["mult2_fx8"][k]) for k in SUITE_CHECKPOINTS)
    fx = load_fixture("mult2_fx8")
    golden, _ = read_stream(fixture_dir() / "mult2_fx8_golden.bin")
    exact = all(np.array_equal(run(fx, None, GOLDEN_SAMPLES, backend=b), golden) for b in ("numba", "numpy"))
    ok = gap <= 0.10 and exact
    report(6, ok, f"{n} instances; max |float - fixed| {gap:.3f} (<=0.10); float {fmt_curve(curves['float'])}; "
                  f"fixed {fmt_curve(curves['mult2_fx8'])}; golden trace bit-exact: {exact}")
    assert ok


def test_criterion_7_lfsr_quality():
    periods = {lfsr_period(s, 8) for s in range(1, 256)}
    fx = load_fixture("mult2_fx8")
    regs = fx.lfsr_seeds.astype(np.uint64).copy()
    tables = leap_tables(32, TAPS[32], 1)
    n = 100_000
    bits = np.empty((n, regs.size))
    for t in range(n):
        regs = leap(regs, tables)
        bits[t] = (regs >> np.uint64(31)) & np.uint64(1)
    r = np.corrcoef(bits.T)
    np.fill_diagonal(r, 0)
    worst = float(np.abs(r).max())
    ok = periods == {255} and worst < 0.01
    report(7, ok, f"8-bit periods {sorted(periods)} over all 255 seeds; {regs.size}-unit bank, "
                  f"1e5 clocks, max |r| {worst:.4f} (<0.01)")
    assert ok


def test_criterion_8_hitting_vs_mixing(mult4_runs):
    insts, consts, runs = mult4_runs
    stats = hitting_vs_mixing(runs["retrained"])
    model = load_fixture("mult4_retrained")
    es = early_stop_comparison(model, suite(4, 1), 20000, seed=8, consts=consts)
    ok = (stats["runs"] >= 200 and stats["median_hitting"] < stats["median_stabilization"]
          and es["early_stop_mean"] <= es["plain_mean"])
    report(8, ok, f"{stats['runs']} runs, median hitting {stats['median_hitting']:.0f} < median "
                  f"stabilization {stats['median_stabilization']:.0f}; early stop mean "
                  f"{es['early_stop_mean']:.0f} <= plain {es['plain_mean']:.0f} over {es['instances']} instances "
                  f"(plain runs correct {es['plain_correct']:.2f}, raw stabilization mean {es['stabilization_mean']:.0f})")
    assert ok


def test_criterion_9_throughput():
    rows = throughput(64, 256, n_samples=20000, n_chains=(1, 16), seed=9)
    rate = {(r["engine"], r["n_chains"]): r["samples_per_sec"] for r in rows}
    ratio = rate[("fixed-numba", 1)] / rate[("float", 1)]
    ok = ratio >= 1.0
    report(9, ok, f"64x256, 1 chain: fixed {rate[('fixed-numba', 1)]:.0f}/s vs float {rate[('float', 1)]:.0f}/s "
                  f"(x{ratio:.2f}, >=1); 16 chains: fixed {rate[('fixed-numba', 16)]:.0f}/s vs float "
                  f"{rate[('float', 16)]:.0f}/s; hardware speed and power figures not reproduced")
    assert ok
