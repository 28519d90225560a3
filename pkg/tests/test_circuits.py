import numpy as np
import pytest

from rbmsolve.circuits import (adder, from_bits, generate_truth_table, lookup, multiplier,
                               sat_clause_value, to_bits)


def test_and_truth_table():
    ds = generate_truth_table(lookup("and"))
    assert sorted(map(tuple, ds.rows.tolist())) == [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 1)]
    assert ds.labels == ("x", "y", "out")


@pytest.mark.parametrize("name,rows", [("or", [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 1)]),
                                       ("xor", [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)]),
                                       ("not", [(0, 1), (1, 0)])])
def test_gate_tables(name, rows):
    assert sorted(map(tuple, generate_truth_table(lookup(name)).rows.tolist())) == rows


def test_mult2_table_arithmetic():
    ds = generate_truth_table(multiplier(2))
    assert ds.rows.shape == (16, 8)
    a, b, p = from_bits(ds.rows[:, :2]), from_bits(ds.rows[:, 2:4]), from_bits(ds.rows[:, 4:])
    assert np.array_equal(a * b, p)
    assert sorted(zip(a.tolist(), b.tolist())) == [(i, j) for i in range(4) for j in range(4)]


def test_adder_layout_matches_sizing():
    # a(n) + b(n) + cin + s(n+1) = 3n + 2 visible units
    for n in (1, 2, 4):
        assert len(adder(n).labels) == 3 * n + 2


def test_sampled_16bit_adder_rows_are_valid():
    circ = adder(16)
    ds = generate_truth_table(circ, max_rows=10**6, seed=5)
    assert ds.rows.shape == (10**6, 50)
    a, b = from_bits(ds.rows[:, :16]), from_bits(ds.rows[:, 16:32])
    cin, s = ds.rows[:, 32].astype(np.int64), from_bits(ds.rows[:, 33:])
    assert np.array_equal(a + b + cin, s)
    assert "sampled" in ds.description


def test_sampling_is_seeded():
    a = generate_truth_table(adder(8), max_rows=100, seed=1).rows
    b = generate_truth_table(adder(8), max_rows=100, seed=1).rows
    c = generate_truth_table(adder(8), max_rows=100, seed=2).rows
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_every_generated_row_is_valid():
    for name in ("and", "or", "xor", "not", "or3", "half_adder", "add1", "add3", "mult2", "mult3"):
        circ = lookup(name)
        assert circ.is_valid(generate_truth_table(circ).rows).all()


def test_is_valid_detects_bad_rows():
    assert not lookup("and").is_valid([[1, 1, 0]])[0]


def test_lookup_unknown():
    with pytest.raises(KeyError):
        lookup("mux")


def test_bits_round_trip():
    assert to_bits(6, 4).tolist() == [0, 1, 1, 0]
    assert from_bits([0, 1, 1, 0]) == 6
    with pytest.raises(ValueError):
        to_bits(16, 4)


def test_sat_clause_value():
    clauses = [(1, -2, 3), (-1, 2, 3)]
    assert sat_clause_value(clauses, [0, 0, 0])
    assert not sat_clause_value(clauses, [1, 0, 0])
