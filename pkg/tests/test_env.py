import math

import numpy as np
import pytest
from scipy import stats

from dynperc import env
from dynperc.model import EdgeId

E0 = EdgeId((0, 0), 1)
E1 = EdgeId((0, 0), 2)
E2 = EdgeId((-1, 0), 1)


def test_first_examination_is_stationary(rng):
    st = env.EnvStore(0.6, 1.0)
    opens = 0
    n = 20000
    for _ in range(n):
        env.reset(st)
        opens += env.examine(st, E0, 0.0, rng)
    assert abs(opens / n - 0.6) < 3 * math.sqrt(0.24 / n)


def test_managed_edge_is_frozen(rng):
    st = env.EnvStore(0.5, 5.0)
    for _ in range(200):
        env.reset(st)
        first = env.examine(st, E0, 0.1, rng)
        env.mark_managed(st, E0)
        assert env.examine(st, E0, 3.0, rng) == first
        assert env.examine(st, E0, 9.0, rng) == first


def test_forced_refresh_is_fresh_bernoulli(rng):
    st = env.EnvStore(0.3, 1e-9)
    n, opens = 20000, 0
    for _ in range(n):
        env.reset(st)
        st.records[E0] = env.EdgeRecord(state=True, determined_at=0.0)
        env.mark_managed(st, E0)
        env.apply_forced_refresh(st, E0, 0.5)
        opens += env.examine(st, E0, 0.6, rng)
        assert st.records[E0].pending_forced_refresh_at is None
    assert abs(opens / n - 0.3) < 3 * math.sqrt(0.21 / n)


def test_contract_violations():
    st = env.EnvStore(0.5, 1.0)
    rng = np.random.default_rng(0)
    with pytest.raises(env.EnvironmentFault):
        env.apply_forced_refresh(st, E0, 1.0)
    with pytest.raises(env.EnvironmentFault):
        env.mark_managed(st, E0)
    env.examine(st, E0, 1.0, rng)
    env.mark_managed(st, E0)
    with pytest.raises(env.EnvironmentFault):
        env.mark_managed(st, E0)
    with pytest.raises(env.EnvironmentFault):
        env.examine(st, E0, 0.5, rng)


def test_reset_idempotent(rng):
    st = env.EnvStore(0.5, 1.0)
    env.examine(st, E0, 2.0, rng)
    env.reset(st)
    env.reset(st)
    assert st.records == {} and st.clock == 0.0


def test_reset_then_examine_creates_record(rng):
    st = env.EnvStore(0.5, 1.0)
    env.examine(st, E0, 2.0, rng)
    env.reset(st)
    env.examine(st, E0, 0.0, rng)
    assert st.records[E0].determined_at == 0.0


def test_keep_probability_against_explicit_events():
    """Open at s, looked at again at s + 3/mu."""
    p, mu, n = 0.4, 2.0, 1_000_000
    dt = 3.0 / mu
    rng = np.random.default_rng(7)
    st = env.EnvStore(p, mu)
    lazy = 0
    for _ in range(n):
        st.records = {E0: env.EdgeRecord(state=True, determined_at=0.0)}
        st.clock = 0.0
        lazy += env.examine(st, E0, dt, rng)
    # explicit oracle: Poisson number of refreshes; state is the last refresh's draw
    orng = np.random.default_rng(8)
    k = orng.poisson(mu * dt, n)
    oracle = np.where(k == 0, True, orng.random(n) < p).sum()
    expected = math.exp(-3) + (1 - math.exp(-3)) * p
    assert math.exp(-3) == pytest.approx(0.0498, abs=1e-4)
    se = math.sqrt(expected * (1 - expected) / n)
    assert abs(lazy / n - expected) < 4 * se
    assert abs(oracle / n - expected) < 4 * se
    assert stats.chi2_contingency([[lazy, n - lazy], [oracle, n - oracle]])[1] > 0.001


# (time, op, edge index); ops: "x" examine, "m" mark managed, "r" copy-1 removal
SCHEDULE = [
    (0.3, "x", 1), (0.5, "x", 0), (0.5, "m", 0), (0.9, "x", 0), (1.0, "x", 1),
    (1.2, "r", 0), (1.6, "x", 2), (2.0, "x", 0), (2.2, "x", 2),
]
EDGES = [E0, E1, E2]


def _lazy_sequences(p, mu, n, seed):
    rng = np.random.default_rng(seed)
    st = env.EnvStore(p, mu)
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        env.reset(st)
        code = 0
        for t, op, e in SCHEDULE:
            if op == "x":
                code = 2 * code + env.examine(st, EDGES[e], t, rng)
            elif op == "m":
                env.mark_managed(st, EDGES[e])
            else:
                env.apply_forced_refresh(st, EDGES[e], t)
        out[i] = code
    return out


def _explicit_sequences(p, mu, n, seed):
    """Every edge carries a rate-mu refresh clock from time 0, suppressed
    while managed; a removal forces one refresh."""
    rng = np.random.default_rng(seed)
    state = rng.random((3, n)) < p  # stationary at time 0
    last = np.zeros(3)
    managed = [False] * 3
    code = np.zeros(n, dtype=np.int64)
    for t, op, e in SCHEDULE:
        if not managed[e]:
            fired = rng.poisson(mu * (t - last[e]), n) > 0
            state[e] = np.where(fired, rng.random(n) < p, state[e])
        last[e] = t
        if op == "x":
            code = 2 * code + state[e]
        elif op == "m":
            managed[e] = True
        else:
            managed[e] = False
            state[e] = rng.random(n) < p
    return code


def test_state_sequences_match_explicit_oracle():
    p, mu, n = 0.45, 1.3, 1_000_000
    lazy = np.bincount(_lazy_sequences(p, mu, n, 11), minlength=64)
    oracle = np.bincount(_explicit_sequences(p, mu, n, 12), minlength=64)
    keep = (lazy + oracle) > 0
    assert stats.chi2_contingency(np.stack([lazy[keep], oracle[keep]]))[1] > 0.001


def test_records_bounded_by_examinations(rng):
    st = env.EnvStore(0.5, 1.0)
    looks = 0
    for t in np.sort(rng.random(50)) * 10:
        env.examine(st, EDGES[rng.integers(3)], float(t), rng)
        looks += 1
        assert len(st.records) <= looks
