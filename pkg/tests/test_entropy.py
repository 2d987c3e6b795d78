import math

import numpy as np
import pytest

from geoequiv.entropy import (
    entropy_report,
    lyapunov_estimate,
    pseudonorm_estimate,
    random_delta,
    threshold,
)
from geoequiv.errors import PreconditionError
from geoequiv.integrals import PhaseState, random_states, unit_speed, velocity


def one_state(model, seed):
    s = random_states(model, 1, np.random.default_rng(seed))
    return PhaseState(s.x[0], s.p[0])


def test_threshold():
    assert threshold(1e4) == pytest.approx(5 * math.log(1e4) / 1e4)


def test_flat_growth_is_linear(flat):
    T = 1000.0
    est = lyapunov_estimate(flat, one_state(flat, 0), random_delta(2, np.random.default_rng(1)), T)
    assert 0 <= est.exponent <= 3 * math.log(T) / T
    assert est.exponent == pytest.approx(np.sum(est.growth_log) / T)


def test_neutral_direction(m2):
    s = unit_speed(m2, one_state(m2, 2))
    d = np.r_[velocity(m2, s), 0.0, 0.0]
    est = lyapunov_estimate(m2, s, d, 1000.0)
    assert abs(est.exponent) < threshold(1000.0)


def test_modes_interval_and_reversal_agree(m2):
    s = one_state(m2, 3)
    d = random_delta(2, np.random.default_rng(4))
    base = lyapunov_estimate(m2, s, d, 1000.0).exponent
    for kw in ({"mode": "two_orbit"}, {"renorm_interval": 0.5}, {"reverse": True}):
        assert lyapunov_estimate(m2, s, d, 1000.0, **kw).exponent == pytest.approx(base, rel=0.1)


def test_exponent_decays(m2):
    s = one_state(m2, 5)
    est = lyapunov_estimate(m2, s, random_delta(2, np.random.default_rng(6)), 2000.0)
    assert est.exponent_at(2000.0) < est.exponent_at(100.0) / 4


def test_lyapunov_preconditions(m2):
    s = one_state(m2, 0)
    with pytest.raises(PreconditionError):
        lyapunov_estimate(m2, s, np.zeros(4), 10.0)
    with pytest.raises(PreconditionError):
        lyapunov_estimate(m2, s, np.ones(4), 10.0, renorm_interval=0.015)


def test_report_small_ensemble(m2):
    rep = entropy_report(m2, 3, 500.0, seed=1)
    assert rep.verdict == "CONSISTENT_WITH_ZERO_ENTROPY"
    assert len(rep.members) == 3 and rep.max_exponent < rep.threshold
    assert all(m.rank == 2 for m in rep.members)


def test_report_broken_pair(broken):
    rep = entropy_report(broken, 2, 100.0, seed=1)
    assert rep.verdict == "NOT_INTEGRABLE_INPUT"
    assert rep.members == []


def test_report_needs_members(m2):
    with pytest.raises(PreconditionError):
        entropy_report(m2, 0, 100.0, seed=0)


def test_pseudonorm(m2, flat):
    est = pseudonorm_estimate(m2, [1.0, 1.0], [0.0, 1.0], 1000.0)
    assert est.below_threshold
    lin = pseudonorm_estimate(flat, [1.0, 0.0], [0.0, 1.0], 1000.0)
    assert lin.exponent <= 3 * math.log(1000.0) / 1000.0
    with pytest.raises(PreconditionError):
        pseudonorm_estimate(m2, [0.0, 0.0], [0.0, 1.0], 100.0)
    with pytest.raises(PreconditionError):
        pseudonorm_estimate(m2, [1.0, 1.0], [1.0, 1.0], 100.0)
