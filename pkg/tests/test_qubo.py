import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqopt.qubo import (
    QuboFormatError,
    QuboProblem,
    brute_force_min,
    build_factoring_143,
    build_maxcut,
    build_tsp,
    decode_factors,
    factoring_143_clauses,
    factoring_143_polynomial,
    format_ising,
    format_qubo,
    parse_ising,
    parse_qubo,
    qubo_to_ising,
    tsp_variable,
)
from vqopt.quantum import ground_space

GRAPH = [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)]
WEIGHTS = [[0, 48, 91], [48, 0, 63], [91, 63, 0]]


def _bits(n):
    return [np.array(x, dtype=float) for x in itertools.product((0, 1), repeat=n)]


def cut_size(edges, x):
    return sum(x[i] != x[j] for i, j in edges)


def tsp_cost(x, w, penalty):
    """Direct evaluation: tour length over consecutive positions plus squared one-hot violations."""
    m = len(w)
    X = np.asarray(x).reshape(m, m)  # rows cities, columns positions
    length = sum(w[i][j] * X[i, p] * X[j, (p + 1) % m] for i in range(m) for j in range(m) if i != j for p in range(m))
    viol = sum((1 - X[:, p].sum()) ** 2 for p in range(m)) + sum((1 - X[i, :].sum()) ** 2 for i in range(m))
    return length + penalty * viol


def test_maxcut_qubo_is_negated_cut():
    q = build_maxcut(GRAPH)
    for x in _bits(4):
        assert q.cost(x) == pytest.approx(-cut_size(GRAPH, x))


def test_maxcut_ising_diagonal_and_optimum():
    q = build_maxcut(GRAPH)
    obs = qubo_to_ising(q)
    assert obs.is_diagonal()
    diag = np.real(np.diag(obs.matrix()))
    assert np.allclose(diag, [-cut_size(GRAPH, x) for x in _bits(4)])
    e0, argmin = brute_force_min(q)
    assert e0 == -4
    assert sorted(argmin) == ["0101", "1010"]


def test_tsp_diagonal_matches_direct_cost():
    q = build_tsp(WEIGHTS, 10000.0)
    diag = qubo_to_ising(q).diagonal()
    ref = np.array([tsp_cost(x, WEIGHTS, 10000.0) for x in _bits(9)])
    assert np.allclose(diag, ref)
    assert np.allclose(q.costs(np.array(_bits(9))), ref)


@pytest.mark.parametrize("penalty,constant", [(1e4, 60303.0), (1e5, 600303.0)])
def test_tsp_constant_term(penalty, constant):
    listing = format_ising(qubo_to_ising(build_tsp(WEIGHTS, penalty)))
    assert listing.splitlines()[-1] == f"{constant!r}  I"


def test_tsp_optimum_is_a_tour():
    e0, argmin = brute_force_min(build_tsp(WEIGHTS, 1e4))
    assert e0 == 48 + 63 + 91
    assert len(argmin) == 6  # three rotations times two directions
    for s in argmin:
        X = np.array([int(c) for c in s]).reshape(3, 3)
        assert (X.sum(axis=0) == 1).all() and (X.sum(axis=1) == 1).all()


def test_tsp_variable_index():
    assert [tsp_variable(1, 1), tsp_variable(1, 3), tsp_variable(3, 3)] == [0, 2, 8]


def test_factoring_ground_space():
    obs = build_factoring_143()
    e0, basis = ground_space(obs)
    assert e0 == pytest.approx(-5.0)
    assert len(basis) == 2
    support = sorted(int(np.argmax(np.abs(b.amplitudes))) for b in basis)
    assert support == [0b0110, 0b1001]
    assert {decode_factors(f"{k:04b}") for k in support} == {(11, 13), (13, 11)}


def test_factoring_diagonal_matches_clauses():
    poly = factoring_143_polynomial()
    diag = build_factoring_143().diagonal()
    for k, x in enumerate(_bits(4)):
        p1, p2, q1, q2 = x
        p, qq = 9 + 2 * p1 + 4 * p2, 9 + 2 * q1 + 4 * q2
        assert diag[k] == pytest.approx(poly.evaluate(x) - 5)
        # reduced and unreduced forms share their zero set: exactly the factorizations
        assert (factoring_143_clauses().evaluate(x) == 0) == (p * qq == 143)
        assert (abs(diag[k] + 5) < 1e-9) == (p * qq == 143)


def test_single_variable_listing():
    assert format_ising(qubo_to_ising(parse_qubo("1\n0 0 1\n"))) == "-0.5  Z0\n0.5  I\n"


qubo_mats = st.integers(1, 5).flatmap(
    lambda n: st.lists(st.integers(-9, 9), min_size=n * n, max_size=n * n).map(lambda v: np.array(v, float).reshape(n, n))
)


@settings(deadline=None, max_examples=40)
@given(qubo_mats, st.integers(-5, 5))
def test_ising_diagonal_equals_qubo_cost(m, const):
    q = QuboProblem(m + m.T, float(const))
    diag = qubo_to_ising(q).diagonal()
    assert np.allclose(diag, [q.cost(x) for x in _bits(q.n)])


@settings(deadline=None, max_examples=40)
@given(qubo_mats, st.integers(-5, 5))
def test_format_parse_round_trips(m, const):
    q = QuboProblem(m + m.T, float(const))
    again = parse_qubo(format_qubo(q))
    assert np.allclose(again.Q, q.Q) and again.constant == q.constant
    obs = qubo_to_ising(q)
    assert np.allclose(parse_ising(format_ising(obs), q.n).diagonal(), obs.diagonal())


@pytest.mark.parametrize(
    "text,line",
    [("", None), ("2\n0 2 1\n", 2), ("2\n0 1\n", 2), ("x\n", 1), ("2\n# c\nconst\n", 3)],
)
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(QuboFormatError) as err:
        parse_qubo(text)
    if line is not None:
        assert f"line {line}" in str(err.value)


def test_maxcut_validation():
    with pytest.raises(ValueError):
        build_maxcut([(0, 0)])
    with pytest.raises(ValueError):
        build_maxcut([(0, 1), (1, 0)])
