import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from rbmsolve.fixsim import (TAPS, FixedEngine, LfsrState, chain_seeds, leap, leap_tables,
                             lfsr_period, lfsr_shift, lfsr_step, masked_accumulate, node_update, run,
                             transition_matrix)
from rbmsolve.fixtures import GOLDEN_SAMPLES, fixture_dir, load_fixture
from rbmsolve.model import ClampPattern, DimensionError, Rbm, empirical_distribution, exact_distribution, total_variation
from rbmsolve.modelio import read_stream
from rbmsolve.quantize import LutConfig, QuantGrid, build_sigmoid_lut, derive_seeds, quantize_model
from rbmsolve.sampler import GibbsChains
from rbmsolve.tasks import AnswerCodec, RunStats, decode_mode, factor_instance, encode

from conftest import random_model


def gf2_matmul(a, b):
    return (a.astype(np.int64) @ b.astype(np.int64)) % 2


def gf2_power(m, e):
    out = np.eye(m.shape[0], dtype=np.int64)
    base = m.astype(np.int64)
    while e:
        if e & 1:
            out = gf2_matmul(out, base)
        base = gf2_matmul(base, base)
        e >>= 1
    return out


def prime_factors(n):
    out, p = set(), 2
    while p * p <= n:
        while n % p == 0:
            out.add(p)
            n //= p
        p += 1
    if n > 1:
        out.add(n)
    return out


class TestLfsr:
    def test_8bit_period_exhaustive(self):
        for seed in range(1, 256):
            assert lfsr_period(seed, 8) == 255

    def test_8bit_orbit_covers_all_nonzero_states(self):
        reg, seen = 1, set()
        for _ in range(255):
            seen.add(reg)
            reg = lfsr_shift(reg, 8, TAPS[8])
        assert seen == set(range(1, 256))

    @pytest.mark.parametrize("width", [8, 16, 24, 32])
    def test_maximal_length_by_matrix_order(self, width):
        # the transition matrix has multiplicative order exactly 2^w - 1
        m = transition_matrix(width, TAPS[width])
        order = 2**width - 1
        eye = np.eye(width, dtype=np.int64)
        assert np.array_equal(gf2_power(m, order), eye)
        for p in prime_factors(order):
            assert not np.array_equal(gf2_power(m, order // p), eye)

    def test_matrix_matches_shift(self, rng):
        m = transition_matrix(32, TAPS[32])
        for reg in rng.integers(1, 2**32, 20):
            bits = (int(reg) >> np.arange(32)) & 1
            nxt = gf2_matmul(m, bits[:, None])[:, 0]
            assert int(nxt @ (1 << np.arange(32, dtype=np.int64))) == lfsr_shift(int(reg))

    def test_seed_one_against_bitwise_oracle(self):
        b = [0] * 32
        b[0] = 1
        words = []
        for _ in range(3):
            for _ in range(16):
                fb = b[31] ^ b[21] ^ b[1] ^ b[0]
                b = [fb] + b[:31]
            words.append(sum(bit << (i - 16) for i, bit in enumerate(b) if i >= 16))
        state = LfsrState(1)
        for w in words:
            state, out = lfsr_step(state, 16, shifts=16)
            assert out == w
        # single clock: 1 -> 3, top word still zero
        s1, w1 = lfsr_step(LfsrState(1), 16)
        assert (s1.register, w1) == (3, 0)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            LfsrState(0)
        with pytest.raises(ValueError):
            LfsrState(256, width=8, taps=TAPS[8])

    @settings(max_examples=50)
    @given(st.integers(1, 2**32 - 1))
    def test_never_zero_and_bijective(self, reg):
        nxt = lfsr_shift(reg)
        assert nxt != 0
        # invert: the dropped top bit is recovered from the feedback bit
        fb = nxt & 1
        prev = nxt >> 1
        top = fb ^ ((prev >> 21) & 1) ^ ((prev >> 1) & 1) ^ (prev & 1)
        assert prev | (top << 31) == reg

    @pytest.mark.parametrize("shifts", [1, 7, 16])
    def test_leap_tables_match_repeated_shifts(self, rng, shifts):
        regs = rng.integers(1, 2**32, 64).astype(np.uint64)
        got = leap(regs, leap_tables(32, TAPS[32], shifts))
        for r, g in zip(regs, got):
            want = int(r)
            for _ in range(shifts):
                want = lfsr_shift(want)
            assert int(g) == want

    def test_bank_streams_uncorrelated_at_draw_rate(self):
        # firing bits at zero pre-activation, one per leap-forward draw; the
        # bound is five standard errors of r, which covers every pair
        fx = load_fixture("mult2_fx8")
        regs = fx.lfsr_seeds.astype(np.uint64).copy()
        tables = leap_tables(32, TAPS[32], 16)
        n = 20000
        bits = np.empty((n, regs.size))
        for t in range(n):
            regs = leap(regs, tables)
            bits[t] = (regs >> np.uint64(31)) & np.uint64(1)
        r = np.corrcoef(bits.T)
        np.fill_diagonal(r, 0)
        assert np.abs(r).max() < 5 / np.sqrt(n)


class TestAccumulate:
    def test_zero_and_all_ones(self):
        w = np.array([3, -7, 12, 5])
        assert masked_accumulate(w, [0, 0, 0, 0]) == 0
        assert masked_accumulate(w, [1, 1, 1, 1]) == 13

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(-2**15, 2**15 - 1), st.integers(0, 1)), min_size=1, max_size=300))
    def test_big_int_oracle(self, pairs):
        w = [p[0] for p in pairs]
        m = [p[1] for p in pairs]
        assert masked_accumulate(w, m) == sum(int(a) * int(b) for a, b in zip(w, m))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            masked_accumulate([1, 2, 3], [1, 0])

    def test_no_overflow_at_extremes(self):
        g = QuantGrid(8, 5)
        m = Rbm(np.full((64, 256), g.min_value), np.full(64, g.min_value), np.full(256, g.min_value))
        fx = quantize_model(m, g)
        eng = FixedEngine(fx, None, backend="numpy")
        ones = np.ones(64, dtype=eng._dtype)
        acc = (ones @ eng._w).astype(np.int64) + fx.hidden_bias
        assert np.all(acc == 64 * g.int_min + g.int_min)
        assert acc.min() >= -(2 ** (fx.accumulator_bits - 1))


class TestNodeUpdate:
    lut = build_sigmoid_lut(LutConfig(5, 16))

    def test_advances_lfsr_by_one_draw(self):
        s = LfsrState(12345)
        _, nxt = node_update([1, 2], 0, [1, 0], self.lut, s)
        assert nxt.register == lfsr_step(s, 16, 16)[0].register

    def test_threshold_semantics(self):
        s = LfsrState(99)
        for w, bias in ((0, 0), (64, 0), (-64, 10), (10**4, 0)):
            bit, nxt = node_update([w], bias, [1], self.lut, s)
            _, word = lfsr_step(s, 16, 16)
            assert bit == int(word < self.lut.threshold(w + bias))

    def _firing_rate(self, pre, n):
        regs = derive_seeds(77, 1000).astype(np.uint64)
        tables = leap_tables(32, TAPS[32], 16)
        thr = int(self.lut.threshold(pre))
        fired = 0
        for _ in range(n // regs.size):
            regs = leap(regs, tables)
            fired += int(((regs >> np.uint64(16)).astype(np.int64) < thr).sum())
        return fired / n

    def test_rate_at_zero(self):
        assert abs(self._firing_rate(0, 10**5) - 0.5) < 0.01

    @pytest.mark.parametrize("x", [-3.0, -0.5, 1.25, 4.0])
    def test_rate_matches_sigmoid(self, x):
        n = 10**6
        pre = int(round(x * 32))
        rate = self._firing_rate(pre, n)
        p = expit(pre / 32)
        lut_err = 2.0**-16
        assert abs(rate - p) <= lut_err + 3 * np.sqrt(p * (1 - p) / n)


class TestEngine:
    def _model(self, rng, nv=6, nh=5, bits=8):
        g = QuantGrid.for_max_weight(bits, 4.0)
        labels = [f"v{i}" for i in range(nv)]
        return quantize_model(Rbm.random(nv, nh, rng, 1.5, labels), g, LutConfig(g.frac_bits), seed=11)

    def test_backends_bit_identical(self, rng):
        fx = self._model(rng)
        clamps = [ClampPattern({0: 1, 3: 0}), ClampPattern(), ClampPattern({5: 1})]
        a = FixedEngine(fx, clamps, backend="numpy").run_block(300)
        b = FixedEngine(fx, clamps, backend="numba").run_block(300)
        assert np.array_equal(a, b)

    def test_backends_identical_8bit_lfsr(self, rng):
        g = QuantGrid(8, 5)
        fx = quantize_model(Rbm.random(3, 3, rng), g, LutConfig(5, 8), seed=4, lfsr_bits=8)
        a = FixedEngine(fx, None, n_chains=2, backend="numpy").run_block(200)
        b = FixedEngine(fx, None, n_chains=2, backend="numba").run_block(200)
        assert np.array_equal(a, b)

    def test_fully_clamped_constant(self, rng):
        fx = self._model(rng)
        pins = {i: i % 2 for i in range(6)}
        out = run(fx, ClampPattern(pins), 100)
        assert np.all(out == [i % 2 for i in range(6)])

    def test_deterministic(self, rng):
        fx = self._model(rng)
        assert np.array_equal(run(fx, None, 500), run(fx, None, 500))
        seeds = derive_seeds(5, 11)
        assert np.array_equal(run(fx, None, 50, seeds), run(fx, None, 50, seeds))
        assert not np.array_equal(run(fx, None, 500), run(fx, None, 500, seeds))

    def test_chain_zero_uses_model_bank(self, rng):
        fx = self._model(rng)
        banks = chain_seeds(fx, 3)
        assert np.array_equal(banks[0], fx.lfsr_seeds)
        assert np.unique(banks).size == banks.size

    def test_blocks_compose(self, rng):
        fx = self._model(rng)
        e1 = FixedEngine(fx, None)
        e2 = FixedEngine(fx, None)
        whole = e1.run_block(100)
        parts = np.concatenate([e2.run_block(37), e2.run_block(63)])
        assert np.array_equal(whole, parts)
        assert e2.count == 100

    def test_errors(self, rng):
        fx = self._model(rng)
        with pytest.raises(ValueError):
            run(fx, None, 0)
        with pytest.raises(ValueError):
            FixedEngine(fx, None, backend="verilog")


class TestFixtures:
    def test_golden_trace_replays(self):
        fx = load_fixture("mult2_fx8")
        golden, seed = read_stream(fixture_dir() / "mult2_fx8_golden.bin")
        assert seed == fx.master_seed
        assert golden.shape == (GOLDEN_SAMPLES, 8)
        for backend in ("numba", "numpy"):
            assert np.array_equal(run(fx, None, GOLDEN_SAMPLES, backend=backend), golden)

    def test_factor_nine_mode(self):
        fx = load_fixture("mult2_fx8")
        inst = factor_instance(9, 2)
        stream = run(fx, encode(inst, fx.visible_labels), 10**6)
        codec = AnswerCodec(inst, fx.visible_labels)
        mode = codec.answer(decode_mode(RunStats.from_samples(stream, codec)))
        assert mode == (3, 3)
        exact = exact_distribution(fx.dequantize(), encode(inst, fx.visible_labels))
        assert codec.answer(int(codec.code(exact.argmax()))) == mode

    def test_statistical_agreement_with_float_engine(self):
        # a LUT saturating at +-8 biases this fixture (a quarter of its hidden
        # pre-activations lie beyond 8), so the float comparison uses +-16
        g = QuantGrid.for_max_weight(8, 4.0)
        fx = quantize_model(load_fixture("mult2"), g, LutConfig(g.frac_bits, 16, 16.0), seed=5)
        deq = fx.dequantize()
        fixed = FixedEngine(fx, None, n_chains=10).run_block(10**5).reshape(-1, 8)
        chains = GibbsChains(deq, None, seed=3, n_chains=100)
        flt = np.concatenate([chains.step() for _ in range(10**4)])
        p_fixed, p_float = empirical_distribution(fixed), empirical_distribution(flt)
        assert total_variation(p_fixed, p_float) < 0.03
        assert total_variation(p_fixed, exact_distribution(deq)) < 0.03


def lut_chain_stationary(fx):
    """Exact stationary distribution of block Gibbs with LUT firing probabilities."""
    from rbmsolve.model import all_bit_vectors

    V = all_bit_vectors(fx.n_visible).astype(float)
    H = all_bit_vectors(fx.n_hidden).astype(float)
    prob = lambda pre: np.clip(fx.lut.probability(pre), 1e-300, 1 - 1e-16)

    def layer(states, p):
        return np.exp(np.log(p) @ states.T + np.log1p(-p) @ (1 - states.T))

    ph = prob(V.astype(np.int64) @ fx.weights + fx.hidden_bias)
    pv = prob(H.astype(np.int64) @ fx.weights.T + fx.visible_bias)
    T = layer(H, ph) @ layer(V, pv)
    w, vec = np.linalg.eig(T.T)
    pi = np.real(vec[:, np.argmin(np.abs(w - 1))])
    return V.astype(np.uint8), pi / pi.sum()


def test_engine_matches_its_lut_chain(rng):
    # weights large enough that many pre-activations saturate the table
    g = QuantGrid.for_max_weight(8, 4.0)
    m = Rbm.random(6, 8, rng, scale=3.0, labels=[f"v{i}" for i in range(6)])
    fx = quantize_model(m, g, LutConfig(g.frac_bits), seed=9)
    V, pi = lut_chain_stationary(fx)
    samples = FixedEngine(fx, None, n_chains=10).run_block(10**5)[100:].reshape(-1, 6)
    emp = empirical_distribution(samples).as_dict()
    tv = 0.5 * sum(abs(emp.get(tuple(v), 0.0) - p) for v, p in zip(V, pi))
    assert tv < 0.03
