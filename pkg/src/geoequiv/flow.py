"""Implicit midpoint integration of geodesic and integral flows.

All dynamics run in cotangent coordinates (x, p).  Periodic coordinates are
left unwrapped along a trajectory so that curves stay continuous; the metric
evaluators wrap on the fly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import PreconditionError, StepFailure
from .integrals import (
    Observable,
    PhaseState,
    combination_observable,
    fd_gradient,
    hamiltonian_observable,
)
from .metric_core import ChartModel
from .metric_core import christoffel as _christoffel


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-3
    steps: int = 100_000
    tol: float = 1e-13
    max_iter: int = 50
    record_stride: int = 100

    def __post_init__(self):
        if not self.h > 0:
            raise PreconditionError("step size must be positive")
        if not self.tol > 0:
            raise PreconditionError("fixed-point tolerance must be positive")
        if self.steps < 0:
            raise PreconditionError("steps must be >= 0")
        if self.record_stride < 1 or self.max_iter < 1:
            raise PreconditionError("record_stride and max_iter must be >= 1")


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    values: dict = field(default_factory=dict)
    final: Optional[PhaseState] = None
    steps_done: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def states(self) -> PhaseState:
        return PhaseState(self.x, self.p)


def hamiltonian(model: ChartModel, state: PhaseState) -> np.ndarray:
    """H = 1/2 p . g^-1(x) p."""
    return hamiltonian_observable(model).value(state)


def _uses_kernel(model: ChartModel, obs: Observable) -> bool:
    if obs.quad is None:
        return False
    ev = model.gbar if obs.quad.bar else model.g
    return ev.lc is not None


def _generic_step(obs: Observable, x, p, h, tol, max_iter):
    gx, gp = obs.grad(PhaseState(x, p))
    x1 = x + h * gp
    p1 = p - h * gx
    for it in range(max_iter):
        gx, gp = obs.grad(PhaseState(0.5 * (x + x1), 0.5 * (p + p1)))
        xn = x + h * gp
        pn = p - h * gx
        done = (np.all(np.abs(xn - x1) <= tol * (1 + np.abs(xn)))
                and np.all(np.abs(pn - p1) <= tol * (1 + np.abs(pn))))
        x1, p1 = xn, pn
        if done:
            return x1, p1, it + 1
    raise StepFailure(f"fixed point not reached in {max_iter} sweeps", PhaseState(x, p), max_iter)


def symplectic_step(model: ChartModel, obs: Observable, state: PhaseState, h: float,
                    config: IntegratorConfig = IntegratorConfig()) -> PhaseState:
    """One implicit midpoint step of the Hamiltonian flow of ``obs`` (h may be negative)."""
    x = np.array(state.x, dtype=float)
    p = np.array(state.p, dtype=float)
    if _uses_kernel(model, obs):
        x1 = np.empty_like(x)
        p1 = np.empty_like(p)
        it = K.midpoint_step(*obs.quad.args(model), x, p, float(h), config.tol,
                             config.max_iter, x1, p1)
        if it < 0:
            raise StepFailure(f"fixed point not reached in {config.max_iter} sweeps",
                              PhaseState(x, p), config.max_iter)
        return PhaseState(x1, p1)
    x1, p1, _ = _generic_step(obs, x, p, float(h), config.tol, config.max_iter)
    return PhaseState(x1, p1)


def integrate(
    model: ChartModel,
    state0: PhaseState,
    config: IntegratorConfig = IntegratorConfig(),
    observables: Sequence[Observable] = (),
    generator: Optional[Observable] = None,
    reverse: bool = False,
) -> Trajectory:
    """Integrate the flow of ``generator`` (default: the geodesic Hamiltonian of g).

    States are recorded every ``record_stride`` steps; a step failure ends the
    run early and is reported through ``Trajectory.error``.
    """
    gen = generator if generator is not None else hamiltonian_observable(model)
    x0 = np.array(state0.x, dtype=float)
    p0 = np.array(state0.p, dtype=float)
    n = x0.shape[-1]
    h = -config.h if reverse else config.h
    stride = config.record_stride
    nrec = config.steps // stride + 1
    X = np.zeros((nrec, n))
    P = np.zeros((nrec, n))
    error = None
    if _uses_kernel(model, gen):
        xf = np.empty(n)
        pf = np.empty(n)
        done = K.run(*gen.quad.args(model), x0, p0, h, config.steps, stride,
                     config.tol, config.max_iter, X, P, xf, pf)
        final = PhaseState(xf, pf)
    else:
        X[0], P[0] = x0, p0
        x, p = x0, p0
        done = 0
        r = 1
        try:
            for s in range(config.steps):
                x, p, _ = _generic_step(gen, x, p, h, config.tol, config.max_iter)
                done = s + 1
                if done % stride == 0:
                    X[r], P[r] = x, p
                    r += 1
        except StepFailure:
            pass
        final = PhaseState(x, p)
    if done < config.steps:
        error = f"step failure after {done} steps"
    kept = done // stride + 1
    X, P = X[:kept], P[:kept]
    traj = Trajectory(
        times=np.arange(kept) * stride * h,
        x=X,
        p=P,
        final=final,
        steps_done=done,
        error=error,
    )
    states = PhaseState(X, P)
    for obs in observables:
        traj.values[obs.name] = np.asarray(obs.value(states), dtype=float)
    return traj


def combined_flow(
    model: ChartModel,
    state0: PhaseState,
    a: Sequence[float],
    t_list: Sequence[float],
    time: float,
    config: IntegratorConfig = IntegratorConfig(),
    hamiltonian_weight: float = 0.0,
) -> PhaseState:
    """Time-``time`` map of the flow of sum_j a_j I_{t_j} (+ hamiltonian_weight * H)."""
    t_list = [float(t) for t in t_list]
    if len(set(t_list)) != len(t_list):
        raise PreconditionError("t_list values must be pairwise distinct")
    if len(a) != len(t_list):
        raise PreconditionError("a and t_list differ in length")
    if time == 0 or (not np.any(np.asarray(a, dtype=float)) and hamiltonian_weight == 0):
        return PhaseState(np.array(state0.x, dtype=float), np.array(state0.p, dtype=float))
    gen = combination_observable(model, a, t_list, hamiltonian_weight)
    steps = max(1, int(round(abs(time) / config.h)))
    cfg = replace(config, h=abs(time) / steps, steps=steps, record_stride=steps)
    traj = integrate(model, state0, cfg, generator=gen, reverse=time < 0)
    if not traj.ok:
        raise StepFailure(traj.error, traj.final, config.max_iter)
    return traj.final


# --- curves -------------------------------------------------------------------


@dataclass(frozen=True)
class ReparamResult:
    max_residual: float
    residuals: np.ndarray
    rejected: int


def reparam_residual(model: ChartModel, which: str, positions, min_speed: float = 1e-14) -> ReparamResult:
    """Acceleration transverse to the velocity, relative to |velocity|^2.

    Uses centred differences on uniformly spaced samples, so it is invariant
    under affine reparameterisation and zero for unparameterised geodesics up
    to discretisation error.
    """
    X = np.asarray(positions, dtype=float)
    if X.shape[0] < 3:
        raise PreconditionError("need at least three samples")
    v = 0.5 * (X[2:] - X[:-2])
    acc = X[2:] - 2 * X[1:-1] + X[:-2]
    pts = X[1:-1]
    Gam = _christoffel(model, which, pts)
    cov = acc + np.einsum("...kij,...i,...j->...k", Gam, v, v)
    G = model.evaluator(which).value(model.wrap(pts))
    vv = np.einsum("...i,...ij,...j->...", v, G, v)
    bad = vv <= min_speed ** 2
    vv_safe = np.where(bad, 1.0, vv)
    along = np.einsum("...i,...ij,...j->...", cov, G, v) / vv_safe
    trans = cov - along[..., None] * v
    tn = np.sqrt(np.abs(np.einsum("...i,...ij,...j->...", trans, G, trans)))
    res = np.where(bad, np.nan, tn / vv_safe)
    good = res[~bad]
    return ReparamResult(
        max_residual=float(good.max()) if good.size else float("nan"),
        residuals=res,
        rejected=int(bad.sum()),
    )


def geodesic(model: ChartModel, which: str, state0: PhaseState, steps: int, h: float = 1e-3,
             config: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """Geodesic of the chosen metric recorded at every step; ``state0.p`` is a covector of that metric."""
    gen = hamiltonian_observable(model, which)
    cfg = replace(config, h=h, steps=steps, record_stride=1)
    return integrate(model, state0, cfg, generator=gen)


# --- tangent flow -------------------------------------------------------------


def _hessian_fd(obs: Observable, x, p, h=1e-6):
    n = x.shape[-1]
    Hm = np.empty((2 * n, 2 * n))
    for c in range(2 * n):
        e = np.zeros(2 * n)
        e[c] = h
        gxp, gpp = obs.grad(PhaseState(x + e[:n], p + e[n:]))
        gxm, gpm = obs.grad(PhaseState(x - e[:n], p - e[n:]))
        Hm[:, c] = np.concatenate([gxp - gxm, gpp - gpm]) / (2 * h)
    return 0.5 * (Hm + Hm.T)


def _cayley(Hm, h):
    n = Hm.shape[0] // 2
    A = np.vstack([Hm[n:], -Hm[:n]])
    eye = np.eye(2 * n)
    return np.linalg.solve(eye - 0.5 * h * A, eye + 0.5 * h * A)


def tangent_step(model: ChartModel, obs: Observable, state: PhaseState, delta, h: float,
                 config: IntegratorConfig = IntegratorConfig(), mode: str = "jacobian",
                 eps: float = 1e-7):
    """Advance (state, delta) by one step.

    ``jacobian`` applies the exact derivative of the midpoint map;
    ``two_orbit`` differences a companion orbit started at state + eps * delta.
    """
    delta = np.asarray(delta, dtype=float)
    x = np.array(state.x, dtype=float)
    p = np.array(state.p, dtype=float)
    n = x.shape[-1]
    if mode == "two_orbit":
        s1 = symplectic_step(model, obs, state, h, config)
        s2 = symplectic_step(model, obs, PhaseState(x + eps * delta[:n], p + eps * delta[n:]), h, config)
        d = np.concatenate([s2.x - s1.x, s2.p - s1.p]) / eps
        return s1, d
    if mode != "jacobian":
        raise PreconditionError(f"unknown tangent mode {mode!r}")
    if _uses_kernel(model, obs):
        x1, p1, d1 = np.empty(n), np.empty(n), np.empty(2 * n)
        it = K.tangent_step(*obs.quad.args(model), x, p, delta, float(h), config.tol,
                            config.max_iter, x1, p1, d1)
        if it < 0:
            raise StepFailure("fixed point not reached", PhaseState(x, p), config.max_iter)
        return PhaseState(x1, p1), d1
    x1, p1, _ = _generic_step(obs, x, p, float(h), config.tol, config.max_iter)
    Hm = _hessian_fd(obs, 0.5 * (x + x1), 0.5 * (p + p1))
    return PhaseState(x1, p1), _cayley(Hm, h) @ delta


def step_jacobian(model: ChartModel, obs: Observable, state: PhaseState, h: float,
                  config: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    n = np.asarray(state.x).shape[-1]
    cols = [tangent_step(model, obs, state, e, h, config)[1] for e in np.eye(2 * n)]
    return np.stack(cols, axis=1)


def symplecticity_defect(model: ChartModel, obs: Observable, state: PhaseState, h: float,
                         config: IntegratorConfig = IntegratorConfig()) -> float:
    """max |M^T J M - J| for the one-step Jacobian M."""
    M = step_jacobian(model, obs, state, h, config)
    n = M.shape[0] // 2
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return float(np.abs(M.T @ J @ M - J).max())


# --- output -------------------------------------------------------------------


def trajectory_csv(traj: Trajectory, columns: Sequence[tuple]) -> str:
    """CSV with header ``t,x1..xn,p1..pn`` followed by ``columns`` = [(header, key), ...].

    Floats are written with 17 significant digits.
    """
    n = traj.x.shape[-1]
    head = ["t"] + [f"x{k + 1}" for k in range(n)] + [f"p{k + 1}" for k in range(n)]
    head += [h for h, _ in columns]
    rows = [",".join(head)]
    cols = [traj.times[:, None], traj.x, traj.p] + [traj.values[k][:, None] for _, k in columns]
    data = np.hstack(cols)
    for row in data:
        rows.append(",".join(format(float(v), ".17g") for v in row))
    return "\n".join(rows) + "\n"
