import math
from itertools import accumulate

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dynperc.model import (
    Direction,
    EdgeId,
    ModelParams,
    direction_cdf,
    directions,
    jump_probabilities,
    sample_direction,
    step,
    z_lambda,
)

params_st = st.builds(
    ModelParams,
    d=st.integers(1, 6),
    p=st.floats(0.01, 0.99),
    mu=st.floats(0.01, 10.0),
    lam=st.floats(0.0, 30.0),
)


@pytest.mark.parametrize("d,lam,expected", [(1, 0.0, 2.0), (2, 0.0, 4.0), (2, math.log(2), 4.5)])
def test_z_lambda_values(d, lam, expected):
    assert z_lambda(ModelParams(d, 0.5, 1.0, lam)) == pytest.approx(expected, abs=1e-14)


def test_jump_probabilities_symmetric_2d():
    probs = jump_probabilities(ModelParams(2, 0.5, 1.0, 0.0))
    assert len(probs) == 4
    assert all(v == pytest.approx(0.25) for v in probs.values())


def test_jump_probabilities_ln2():
    probs = jump_probabilities(ModelParams(2, 0.5, 1.0, math.log(2)))
    assert probs[Direction(1, 1)] == pytest.approx(2 / 4.5, abs=1e-14)
    assert probs[Direction(1, -1)] == pytest.approx(0.5 / 4.5, abs=1e-14)
    assert probs[Direction(2, 1)] == pytest.approx(1 / 4.5, abs=1e-14)
    assert probs[Direction(2, -1)] == pytest.approx(1 / 4.5, abs=1e-14)


def test_jump_probabilities_large_bias_1d():
    probs = jump_probabilities(ModelParams(1, 0.5, 1.0, 20.0))
    assert probs[Direction(1, -1)] < 1e-17
    assert probs[Direction(1, 1)] == pytest.approx(1.0)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        ModelParams(2, 0.5, 1.0, -0.1)


@pytest.mark.parametrize("kw", [dict(d=0), dict(p=0.0), dict(p=1.0), dict(mu=0.0), dict(d=1.5)])
def test_invalid_params(kw):
    base = dict(d=2, p=0.5, mu=1.0, lam=0.0)
    base.update(kw)
    with pytest.raises(ValueError):
        ModelParams(**base)


def _enumerated_cdf(params):
    # independent route: cumulative sums of the closed-form masses in index order
    z = math.exp(params.lam) + math.exp(-params.lam) + 2 * params.d - 2
    masses = [math.exp(params.lam) / z, math.exp(-params.lam) / z] + [1 / z] * (2 * params.d - 2)
    return list(accumulate(masses))


def _oracle_direction(params, u):
    for k, c in enumerate(_enumerated_cdf(params)):
        if u < c:
            return Direction.from_index(k)
    return Direction.from_index(2 * params.d - 1)


@pytest.mark.parametrize("lam,u,expected", [
    (0.0, 0.10, Direction(1, 1)),
    (0.0, 0.30, Direction(1, -1)),
    (math.log(2), 0.50, Direction(1, -1)),
])
def test_sample_direction_examples(lam, u, expected):
    prm = ModelParams(2, 0.5, 1.0, lam)
    assert sample_direction(prm, u) == expected
    assert _oracle_direction(prm, u) == expected


def test_sample_direction_rejects_out_of_range():
    prm = ModelParams(2, 0.5, 1.0)
    for u in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            sample_direction(prm, u)


@given(params_st, st.floats(0.0, 1.0, exclude_max=True))
def test_sample_direction_matches_enumeration(prm, u):
    c = _enumerated_cdf(prm)
    # skip draws within rounding distance of a cut point
    if min(abs(u - x) for x in c) < 1e-12:
        return
    assert sample_direction(prm, u) == _oracle_direction(prm, u)


@given(params_st)
def test_probabilities_positive_and_normalized(prm):
    probs = jump_probabilities(prm)
    assert len(probs) == 2 * prm.d
    assert all(v >= 0 for v in probs.values())
    if prm.lam < 18:
        assert all(v > 0 for v in probs.values())
    assert abs(sum(probs.values()) - 1.0) < 1e-12


@given(params_st, st.lists(st.floats(0.0, 1.0, exclude_max=True), min_size=2, max_size=20))
def test_sample_direction_monotone(prm, us):
    idx = [sample_direction(prm, u).index for u in sorted(us)]
    assert idx == sorted(idx)


@given(params_st)
def test_z_even(prm):
    assert z_lambda(prm, -prm.lam) == z_lambda(prm, prm.lam)


def test_sample_direction_chi_square():
    prm = ModelParams(3, 0.5, 1.0, 0.7)
    u = np.random.default_rng(1).random(10_000_000)
    # vectorized push-forward through the same CDF, checked against the scalar path
    idx = np.searchsorted(direction_cdf(prm.d, prm.lam), u, side="right")
    assert all(sample_direction(prm, x).index == k for x, k in zip(u[:2000], idx[:2000]))
    counts = np.bincount(idx, minlength=2 * prm.d)
    w = np.array(list(jump_probabilities(prm).values()))
    assert stats.chisquare(counts, w * u.size).pvalue > 0.001


def test_directions_distinct():
    for d in range(1, 6):
        ds = directions(d)
        assert len(set(ds)) == 2 * d
        assert [x.index for x in ds] == list(range(2 * d))


sites = st.lists(st.integers(-50, 50), min_size=3, max_size=3).map(tuple)


@given(sites, st.integers(0, 5))
def test_edge_canonical(x, k):
    dirn = Direction.from_index(k)
    y = step(x, dirn)
    e = EdgeId.at(x, dirn)
    assert e == EdgeId.between(x, y) == EdgeId.between(y, x)
    assert e == EdgeId.at(y, Direction(dirn.axis, -dirn.sign))


@given(sites, st.integers(0, 5), sites, st.integers(0, 5))
def test_edges_never_alias(x, k, y, j):
    a = frozenset({x, step(x, Direction.from_index(k))})
    b = frozenset({y, step(y, Direction.from_index(j))})
    same = EdgeId.at(x, Direction.from_index(k)) == EdgeId.at(y, Direction.from_index(j))
    assert same == (a == b)


def test_between_rejects_non_neighbours():
    with pytest.raises(ValueError):
        EdgeId.between((0, 0), (1, 1))
    with pytest.raises(ValueError):
        EdgeId.between((0, 0), (2, 0))
