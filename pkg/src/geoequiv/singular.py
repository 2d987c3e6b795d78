"""Singular phase points, Killing fields of constant eigenvalues, ordering and confinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, PreconditionError
from .flow import IntegratorConfig, integrate
from .integrals import (
    PhaseState,
    default_t_list,
    grad_I,
    independence_rank,
    unit_speed,
    velocity,
)
from .metric_core import ChartModel, lc_diagonals
from .projective_tensor import compute_L, spectrum

TOL_SINGULAR = 1e-7
TOL_BIFURCATION = 1e-9
TOL_ORDER = 1e-9
TOL_CONFINE = 1e-8

COND_DERIVATIVE = "p_i = 0 & lam_i' = 0"
COND_FAMILY = "p_i = 0 & I'_{lam_i} = 0"
COND_REMOVABLE = "removable (J_i regular)"


def _require_lc(model: ChartModel):
    if not model.is_lc:
        raise PreconditionError("unsupported: needs a Levi-Civita model")


def frozen_gradient(model: ChartModel, state: PhaseState, i: int):
    """(dI_t/dx, dI_t/dp) with t frozen at lam_i(x), and dI_t/dt there."""
    lam = model.profiles.values(state.x)
    t = float(lam[i])
    gx, gp = grad_I(model, state, t, method="analytic")
    # d/dt of sum_k Pi_k(t) p_k^2 / |Pi_k(lam_k)|
    b, _ = lc_diagonals(lam)
    dpi = _pi_products_derivative(lam, t)
    prime = float(np.sum(dpi * state.p ** 2 / b))
    return gx, gp, prime


def _pi_products_derivative(lam: np.ndarray, t: float) -> np.ndarray:
    n = lam.shape[-1]
    out = np.zeros(n)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for k in others:
            out[i] -= np.prod([lam[j] - t for j in others if j != k])
    return out


@dataclass
class Witness:
    i: int  # 0-based
    condition: str
    grad_norm: float
    p_i: float
    derivative: float
    family_derivative: float

    def to_dict(self):
        return {
            "i": self.i + 1,
            "condition": self.condition,
            "grad_norm": self.grad_norm,
            "p_i": self.p_i,
            "lam_i_prime": self.derivative,
            "I_prime": self.family_derivative,
        }


@dataclass
class SingularReport:
    state: PhaseState
    rank: int
    dependent: bool
    witnesses: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "state": {"x": self.state.x.tolist(), "p": self.state.p.tolist()},
            "rank": self.rank,
            "dependent": self.dependent,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "residuals": self.residuals,
        }


def classify_singular(model: ChartModel, state: PhaseState, tol: float = TOL_SINGULAR,
                      t_list=None) -> SingularReport:
    """Rank of the integral differentials and the indices whose frozen differential vanishes.

    The state is rescaled to unit speed first (p = 0 is kept as is).
    """
    _require_lc(model)
    x = model.check(state.x)
    p = np.asarray(state.p, dtype=float)
    if np.any(p != 0):
        s = unit_speed(model, PhaseState(x, p))
    else:
        s = PhaseState(x, p)
    t_list = default_t_list(model) if t_list is None else t_list
    rank = int(independence_rank(model, s, t_list))
    deriv = model.profiles.derivatives(s.x)
    consts = model.profiles.constant_flags()
    rep = SingularReport(s, rank, rank < model.dim)
    worst_p = 0.0
    for i in range(model.dim):
        gx, gp, prime = frozen_gradient(model, s, i)
        gn = float(np.sqrt(np.sum(gx ** 2) + np.sum(gp ** 2)))
        if gn >= tol:
            continue
        worst_p = max(worst_p, abs(float(s.p[i])))
        if consts[i]:
            cond = COND_REMOVABLE
        elif abs(deriv[i]) < tol:
            cond = COND_DERIVATIVE
        elif abs(prime) < tol:
            cond = COND_FAMILY
        else:
            cond = "unexplained"
        rep.witnesses.append(Witness(i, cond, gn, float(s.p[i]), float(deriv[i]), prime))
    rep.residuals = {"max_abs_p_witnessed": worst_p}
    return rep


# --- constant eigenvalues -----------------------------------------------------


def killing_field(model: ChartModel, x, i: int, tol: float = TOL_BIFURCATION) -> np.ndarray:
    """Eigenvector of L for the constant eigenvalue lam_i with g(v, v) = |Pi_i(lam_i)|.

    The sign makes the i-th component positive.
    """
    _require_lc(model)
    if not 0 <= i < model.dim:
        raise PreconditionError(f"index {i + 1} out of range")
    if not model.profiles.constant_flags()[i]:
        raise PreconditionError(f"eigenvalue {i + 1} is not constant")
    x = model.check(np.asarray(x, dtype=float))
    lam_i = float(model.profiles.functions[i].offset)
    pi = float(np.prod(np.delete(model.profiles.values(x), i) - lam_i))
    if abs(pi) < tol:
        raise DomainError(f"degenerate point: |Pi_{i + 1}(lam_{i + 1})| = {abs(pi):.3g}")
    Lv = compute_L(model, x)
    k = int(np.argmin(np.abs(Lv.eigenvalues - lam_i)))
    v = Lv.eigenbasis[:, k]  # g-orthonormal
    v = v * np.sqrt(abs(pi))
    return v if v[i] > 0 else -v


def linear_integral_J(model: ChartModel, state: PhaseState, i: int) -> float:
    """J_i = g(v_i, xi), which is v_i . p."""
    v = killing_field(model, state.x, i)
    return float(v @ np.asarray(state.p, dtype=float))


def lie_derivative_residual(model: ChartModel, x, i: int, h: float = 1e-5) -> float:
    """max |(Lie_v g)_ab| with v the Killing field of index i, by centred differences."""
    x = model.check(np.asarray(x, dtype=float), margin=h)
    n = model.dim
    v = killing_field(model, x, i)
    G = model.g.value(x)
    dG = model.g.derivative(x)  # [c, a, b]
    dv = np.empty((n, n))  # [a, c] = d_a v^c
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        dv[a] = (killing_field(model, x + e, i) - killing_field(model, x - e, i)) / (2 * h)
    lie = np.einsum("c,cab->ab", v, dG) + np.einsum("cb,ac->ab", G, dv) + np.einsum("ac,bc->ab", G, dv)
    return float(np.abs(lie).max())


# --- global ordering ----------------------------------------------------------


@dataclass
class OrderingAudit:
    ok: bool
    margins: np.ndarray  # min lam_{i+1} - max lam_i
    samples: int


def ordering_audit(model: ChartModel, samples: int, seed: int, tol: float = TOL_ORDER) -> OrderingAudit:
    if samples < 2:
        raise PreconditionError("samples must be >= 2")
    pts = model.sample_points(samples, np.random.default_rng(seed))
    lam = spectrum(model, pts).eigenvalues
    margins = lam[:, 1:].min(axis=0) - lam[:, :-1].max(axis=0)
    return OrderingAudit(bool(np.all(margins >= -tol)), margins, samples)


# --- confinement --------------------------------------------------------------


@dataclass
class ConfinementResult:
    max_abs_xi: float
    passed: bool
    singular_start: bool  # lam_i'(basepoint) == 0
    steps: int
    error: Optional[str] = None


def confinement_hypothesis(model: ChartModel, i: int, y) -> None:
    """max lam_{i-1} < lam_i(y) < min lam_{i+1} from the declared ranges."""
    _require_lc(model)
    lam = model.profiles.values(np.asarray(y, dtype=float))
    ranges = model.profiles.ranges
    li = float(lam[i])
    if i > 0 and not ranges[i - 1][1] < li:
        raise PreconditionError(
            f"hypothesis fails: max lam_{i} = {ranges[i - 1][1]!r} < lam_{i + 1}(y) = {li!r}"
        )
    if i < model.dim - 1 and not li < ranges[i + 1][0]:
        raise PreconditionError(
            f"hypothesis fails: lam_{i + 1}(y) = {li!r} < min lam_{i + 2} = {ranges[i + 1][0]!r}"
        )


def confinement_test(model: ChartModel, i: int, basepoint, xi0, steps: int = 100_000,
                     config: IntegratorConfig = IntegratorConfig(), tol: float = TOL_CONFINE,
                     derivative_tol: float = TOL_SINGULAR) -> ConfinementResult:
    """Largest |xi_i| along the g-geodesic from (basepoint, xi0) with xi0_i = 0."""
    _require_lc(model)
    if not 0 <= i < model.dim:
        raise PreconditionError(f"index {i + 1} out of range")
    y = model.check(np.asarray(basepoint, dtype=float))
    confinement_hypothesis(model, i, y)
    xi0 = np.asarray(xi0, dtype=float)
    if xi0[i] != 0.0:
        raise PreconditionError(f"initial xi_{i + 1} must be 0")
    singular_start = bool(abs(model.profiles.derivatives(y)[i]) < derivative_tol)
    s0 = PhaseState.from_velocity(model, y, xi0)
    tr = integrate(model, s0, IntegratorConfig(h=config.h, steps=steps, tol=config.tol,
                                               max_iter=config.max_iter, record_stride=1))
    xi = velocity(model, tr.states())
    m = float(np.abs(xi[:, i]).max())
    return ConfinementResult(m, m < tol, singular_start, tr.steps_done, tr.error)
