import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoequiv.errors import DomainError, PreconditionError, ProfileError
from geoequiv.metric_core import (
    Profile,
    christoffel,
    lc_diagonals,
    lc_generate,
    metric_eval,
    raw_model,
    spd_check,
)

TWO_PI = 2 * math.pi


def test_trig2_metrics_at_origin(m2):
    G, dG = metric_eval(m2, "g", [0.0, 0.0])
    np.testing.assert_allclose(G, np.diag([1.3, 1.3]), atol=1e-15)
    Gb, _ = metric_eval(m2, "gbar", [0.0, 0.0])
    # rho = (1 / (1 * 2.3 * 1), 1 / (1 * 2.3 * 2.3))
    np.testing.assert_allclose(Gb, np.diag([1.3 / 2.3, 1.3 / 5.29]), atol=1e-15)
    assert dG[0, 0, 0] == pytest.approx(-0.3, abs=1e-15)


def test_flat_pair_metrics(flat):
    G, dG = metric_eval(flat, "g", [0.3, 4.0])
    Gb, _ = metric_eval(flat, "gbar", [0.3, 4.0])
    np.testing.assert_allclose(G, np.eye(2))
    np.testing.assert_allclose(Gb, np.diag([0.5, 0.25]))
    assert np.all(dG == 0)


def test_periodic_wrap(m2):
    a, _ = metric_eval(m2, "g", [0.0, 0.0])
    b, _ = metric_eval(m2, "g", [0.0, TWO_PI])
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_overlapping_ranges_rejected():
    with pytest.raises(ProfileError, match=r"overlapping ranges \(1,2\)"):
        lc_generate(
            [Profile("sin", 1.0, 0.3), Profile("cos", 1.75, 0.55)],
            [(0, TWO_PI)] * 2,
            [True, True],
        )


def test_declared_ranges_audited():
    with pytest.raises(ProfileError, match=r"overlapping ranges \(1,2\)"):
        lc_generate([Profile("sin", 1.0, 0.3), Profile("cos", 2.0, 0.3)], [(0, TWO_PI)] * 2,
                    [True, True], ranges=[(0.7, 1.3), (1.2, 2.3)])
    with pytest.raises(ProfileError, match="leaves its declared range"):
        lc_generate([Profile("sin", 1.0, 0.3), Profile("cos", 2.0, 0.3)], [(0, TWO_PI)] * 2,
                    [True, True], ranges=[(0.8, 1.3), (1.7, 2.3)])


def test_nonpositive_and_nonperiodic_profiles_rejected():
    with pytest.raises(ProfileError, match="non-positive"):
        lc_generate([Profile("sin", 0.1, 0.3), Profile.constant(2.0)], [(0, TWO_PI)] * 2, [True, True])
    with pytest.raises(ProfileError, match="not periodic"):
        lc_generate([Profile("sin", 1.0, 0.3, frequency=0.5), Profile.constant(2.0)],
                    [(0, TWO_PI)] * 2, [True, True])


def test_touching_ranges_need_contact_flag():
    prof = [Profile("sin", 1.0, 0.5), Profile("cos", 2.0, 0.5)]
    with pytest.raises(ProfileError):
        lc_generate(prof, [(0, TWO_PI)] * 2, [True, True])
    m = lc_generate(prof, [(0, TWO_PI)] * 2, [True, True], allow_contact=True)
    assert m.profiles.ranges == ((0.5, 1.5), (1.5, 2.5))


def test_domain_error_outside_nonperiodic_bound():
    m = lc_generate([Profile("affine", 1.0, 0.1), Profile.constant(3.0)], [(0, 1), (0, 1)], [False, False])
    with pytest.raises(DomainError, match="x1"):
        metric_eval(m, "g", [1.5, 0.5])


def test_christoffel_value_and_symmetry(m2, rng):
    Gam = christoffel(m2, "g", [0.0, 0.0])
    assert Gam[0, 0, 0] == pytest.approx(0.5 / 1.3 * -0.3, abs=1e-14)
    pts = m2.sample_points(100, rng)
    Gam = christoffel(m2, "g", pts)
    assert np.array_equal(Gam, np.swapaxes(Gam, -1, -2))


def test_christoffel_flat(flat):
    assert np.all(christoffel(flat, "g", [1.0, 2.0]) == 0)


def test_spd_check(m2):
    res = spd_check(m2, "g", 10_000, seed=1)
    assert res.ok and res.worst_eigenvalue >= 0.4 - 1e-12
    indef = raw_model(lambda x: np.broadcast_to(np.diag([1.0, -1.0]), x.shape[:-1] + (2, 2)),
                      lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)),
                      [(0, 1), (0, 1)], [False, False])
    assert not spd_check(indef, "g", 10).ok
    with pytest.raises(PreconditionError):
        spd_check(m2, "g", 0)


def test_rho_ratio_exact(m3, rng):
    pts = m3.sample_points(1000, rng)
    G, Gb = m3.g.value(pts), m3.gbar.value(pts)
    lam = m3.profiles.values(pts)
    _, rho = lc_diagonals(lam)
    ratio = np.diagonal(Gb, axis1=-2, axis2=-1) / np.diagonal(G, axis1=-2, axis2=-1)
    np.testing.assert_allclose(ratio, rho, rtol=1e-14)
    off = G - np.einsum("...ii->...i", G)[..., None] * np.eye(3)
    assert np.all(off == 0)


def test_fd_derivative_matches_analytic(m3, rng):
    pts = m3.sample_points(50, rng)
    for ev in (m3.g, m3.gbar):
        err = np.abs(ev.fd_derivative(pts) - ev.derivative(pts)).max()
        assert err < 10 * ev.h_fd ** 2


@settings(max_examples=40, deadline=None)
@given(
    a1=st.floats(0.0, 0.45), a2=st.floats(0.0, 0.45), a3=st.floats(0.0, 0.45),
    x=st.lists(st.floats(0, TWO_PI), min_size=3, max_size=3),
)
def test_lc_generate_always_spd(a1, a2, a3, x):
    m = lc_generate([Profile("sin", 1.0, a1), Profile("cos", 2.0, a2), Profile("sin", 3.0, a3)],
                    [(0, TWO_PI)] * 3, [True] * 3)
    for which in ("g", "gbar"):
        G = m.evaluator(which).value(np.array(x))
        assert np.all(np.linalg.eigvalsh(G) > 0)
