import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoequiv.errors import PreconditionError
from geoequiv.integrals import (
    PhaseState,
    combination_observable,
    eval_I,
    eval_I_lc,
    eval_I_prime,
    exact_coefficients,
    fd_gradient,
    grad_I,
    hamiltonian_observable,
    independence_rank,
    integral_observable,
    poisson_bracket,
    poly_coefficients,
    random_states,
    unit_speed,
)
from geoequiv.flow import hamiltonian

ORIGIN = np.zeros(2)


def at_origin(m2, xi):
    return PhaseState.from_velocity(m2, ORIGIN, xi)


def test_hamiltonian_examples(m2):
    s = PhaseState(ORIGIN, [1.3, 0.0])
    assert hamiltonian(m2, s) == pytest.approx(0.65, abs=1e-15)
    assert hamiltonian(m2, PhaseState(ORIGIN, [0.0, 0.0])) == 0.0


def test_eval_I_examples(m2):
    s = at_origin(m2, [1.0, 0.0])
    for t in (-1.0, 0.0, 0.5, 3.0):
        assert eval_I(m2, s, t) == pytest.approx(1.3 * (2.3 - t), abs=1e-14)
    assert eval_I(m2, s, 0.0) == pytest.approx(2.99, abs=1e-14)
    # at t = lam_1 the family reduces to p_1^2 with p_1 = 1.3
    assert eval_I(m2, s, 1.0) == pytest.approx(1.69, abs=1e-14)
    assert eval_I(m2, at_origin(m2, [0.0, 0.0]), 1.7) == 0.0


def test_eval_I_prime_examples(m2):
    s = at_origin(m2, [1.0, 0.0])
    for t in (0.0, 1.0, 2.5):
        assert eval_I_prime(m2, s, t) == pytest.approx(-1.3, abs=1e-12)
    assert eval_I_prime(m2, at_origin(m2, [0.0, 0.0]), 0.3) == 0.0


def test_poly_coefficients_examples(m2):
    fam = poly_coefficients(m2, at_origin(m2, [1.0, 1.0]))
    np.testing.assert_allclose(fam.coefficients, [4.29, -2.6], atol=1e-12)
    assert fam.residual < 1e-10
    np.testing.assert_allclose(poly_coefficients(m2, at_origin(m2, [1.0, 0.0])).coefficients, [2.99, -1.3], atol=1e-12)


def test_fitted_and_exact_coefficients_agree(m3, rng):
    s = random_states(m3, 50, rng)
    fam = poly_coefficients(m3, s)
    assert fam.residual < 1e-10
    np.testing.assert_allclose(fam.coefficients, exact_coefficients(m3, s), atol=1e-10)


def test_leading_coefficient(m2, rng):
    # for n = 2 the t-coefficient of Pi_i is -1, so c_1 = -sum_i |Pi_i| xi_i^2 = -g(xi, xi)
    s = random_states(m2, 20, rng)
    c = exact_coefficients(m2, s)
    xi = np.linalg.solve(m2.g.value(s.x), s.p[..., None])[..., 0]
    np.testing.assert_allclose(c[:, 1], -np.einsum("ni,ni->n", xi, s.p), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-2.0, 5.0))
def test_adjugate_route_matches_closed_form(seed, t):
    from geoequiv.models import trig3

    m = trig3()
    s = random_states(m, 20, np.random.default_rng(seed))
    assert np.abs(eval_I(m, s, t) - eval_I_lc(m, s, t)).max() < 1e-10


def test_I_at_eigenvalue(m3, rng):
    s = random_states(m3, 1000, rng)
    lam = m3.profiles.values(s.x)
    for i in range(3):
        assert np.abs(eval_I(m3, s, lam[:, i]) - (-1) ** i * s.p[:, i] ** 2).max() < 1e-10


def test_analytic_gradient_matches_fd(m3, rng):
    s = random_states(m3, 1, rng)
    s = PhaseState(s.x[0], s.p[0])
    for t in (0.0, 1.5, 2.7):
        gx, gp = grad_I(m3, s, t, "analytic")
        fx, fp = grad_I(m3, s, t, "fd")
        assert max(np.abs(gx - fx).max(), np.abs(gp - fp).max()) < 1e-5


def test_frozen_gradient_sparsity(m2):
    # t frozen at lam_1: p-part has the single entry 2 p_1, x-part the single entry -I' lam_1'
    x = np.array([0.8, 2.1])
    s = PhaseState(x, [0.4, -0.9])
    lam1 = m2.profiles.values(x)[0]
    gx, gp = grad_I(m2, s, lam1, "analytic")
    np.testing.assert_allclose(gp, [0.8, 0.0], atol=1e-14)
    assert gx[1] == pytest.approx(0.0, abs=1e-14)
    Iprime = eval_I_prime(m2, s, lam1)
    assert abs(gx[0]) == pytest.approx(abs(Iprime * m2.profiles.derivatives(x)[0]), rel=1e-10)
    # at x_1 = pi/2 with p_1 = 0 the whole differential vanishes
    gx, gp = grad_I(m2, PhaseState([math.pi / 2, 0.3], [0.0, 1.0]), 1.3, "analytic")
    assert np.abs(np.r_[gx, gp]).max() < 1e-15


def test_zero_momentum_gradient(m2):
    gx, gp = grad_I(m2, PhaseState([0.5, 0.5], [0.0, 0.0]), 0.7)
    assert not gx.any() and not gp.any()


def test_brackets_vanish(m2, m3, rng):
    for m in (m2, m3):
        s = random_states(m, 100, rng)
        obs = [hamiltonian_observable(m)] + [integral_observable(m, t) for t in (0.0, 1.0, 2.5)]
        for f in obs:
            assert np.abs(poisson_bracket(f, f, s)).max() == 0.0
            for g in obs:
                assert np.abs(poisson_bracket(f, g, s)).max() < 1e-9


def test_fd_brackets_within_fd_tolerance(m2, rng):
    s = random_states(m2, 10, rng)
    a = integral_observable(m2, 0.0, "fd")
    b = integral_observable(m2, 1.0, "fd")
    assert np.abs(poisson_bracket(a, b, s)).max() < 1e-6


def test_broken_pair_brackets_do_not_vanish(broken, rng):
    s = random_states(broken, 10, rng)
    a, b = integral_observable(broken, 0.3), integral_observable(broken, 2.8)
    assert np.abs(poisson_bracket(a, b, s)).max() > 1e-3


def test_independence_rank_examples(m2, rng):
    s = PhaseState([1.0, 2.0], [0.5, 0.7])
    assert independence_rank(m2, s, [0.0, 1.0]) == 2
    assert independence_rank(m2, PhaseState([math.pi / 2, 0.4], [0.0, 1.0]), [0.0, 1.0]) == 1
    assert independence_rank(m2, PhaseState([1.0, 2.0], [0.0, 0.0]), [0.0, 1.0]) == 0
    with pytest.raises(PreconditionError):
        independence_rank(m2, s, [1.0, 1.0])


def test_independence_almost_everywhere(m3, rng):
    s = random_states(m3, 2000, rng)
    assert np.mean(independence_rank(m3, s) == 3) >= 0.99


def test_unit_speed(m3, rng):
    s = random_states(m3, 10, rng)
    s2 = PhaseState(s.x, 3.7 * s.p)
    np.testing.assert_allclose(hamiltonian(m3, unit_speed(m3, s2)), 0.5, rtol=1e-14)


def test_combination_observable_is_linear(m3, rng):
    s = random_states(m3, 10, rng)
    c = combination_observable(m3, [2.0, -1.0], [0.0, 1.0], hamiltonian_weight=0.5)
    ref = 2 * eval_I(m3, s, 0.0) - eval_I(m3, s, 1.0) + 0.5 * hamiltonian(m3, s)
    np.testing.assert_allclose(c.value(s), ref, atol=1e-12)


def test_fd_gradient_of_quadratic():
    def f(st):
        return st.x[..., 0] ** 2 * st.p[..., 1]

    gx, gp = fd_gradient(f, PhaseState([1.5, 0.0], [0.0, 2.0]))
    np.testing.assert_allclose(gx, [6.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(gp, [0.0, 2.25], atol=1e-8)
