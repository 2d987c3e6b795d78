"""Finite-time Lyapunov exponents as a surrogate for vanishing entropy."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import PreconditionError, StepFailure
from .flow import IntegratorConfig, _uses_kernel, tangent_step
from .integrals import (
    Observable,
    PhaseState,
    combination_observable,
    default_t_list,
    hamiltonian_observable,
    independence_rank,
    integral_observable,
    random_states,
    unit_speed,
)
from .metric_core import ChartModel

# tangent flows are long; the default step is coarser than for trajectories
ENTROPY_CONFIG = IntegratorConfig(h=1e-2)
TWO_ORBIT_EPS = 1e-7
DRIFT_TOL = 1e-5  # at h = 1e-3; scaled by (h / 1e-3)^2 for other steps


def threshold(T: float) -> float:
    """5 log(T) / T."""
    return 5.0 * math.log(T) / T


@dataclass
class LyapunovEstimate:
    horizon: float
    renorm_interval: float
    exponent: float
    growth_log: np.ndarray
    final: Optional[PhaseState] = None
    orbit_x: Optional[np.ndarray] = None
    orbit_p: Optional[np.ndarray] = None

    def exponent_at(self, T: float) -> float:
        """Exponent over the prefix [0, T] of the same run."""
        k = int(round(T / self.renorm_interval))
        if not 1 <= k <= len(self.growth_log):
            raise PreconditionError(f"T={T} is outside the recorded horizon")
        return float(np.sum(self.growth_log[:k]) / (k * self.renorm_interval))


def lyapunov_estimate(
    model: ChartModel,
    state0: PhaseState,
    delta0,
    T: float,
    renorm_interval: float = 1.0,
    config: IntegratorConfig = ENTROPY_CONFIG,
    generator: Optional[Observable] = None,
    mode: str = "jacobian",
    reverse: bool = False,
    normalize: bool = True,
) -> LyapunovEstimate:
    """Growth rate of a tangent vector under the flow of ``generator`` (default: geodesic flow).

    The state is rescaled to unit speed first.  delta0 is renormalised to
    unit length after every ``renorm_interval`` of flow time.
    """
    if not T > 0 or not renorm_interval > 0:
        raise PreconditionError("T and renorm_interval must be positive")
    per = int(round(renorm_interval / config.h))
    nint = int(round(T / renorm_interval))
    if per < 1 or nint < 1:
        raise PreconditionError("renorm_interval must cover at least one step and T one interval")
    if abs(per * config.h - renorm_interval) > 1e-9 * renorm_interval:
        raise PreconditionError("renorm_interval must be a multiple of the step size")
    gen = generator if generator is not None else hamiltonian_observable(model)
    s = unit_speed(model, state0) if normalize else state0
    x0 = np.array(s.x, dtype=float)
    p0 = np.array(s.p, dtype=float)
    n = x0.shape[-1]
    d0 = np.asarray(delta0, dtype=float)
    if d0.shape != (2 * n,) or not np.linalg.norm(d0) > 0:
        raise PreconditionError("delta0 must be a nonzero 2n-vector")
    d0 = d0 / np.linalg.norm(d0)
    h = -config.h if reverse else config.h
    logs = np.zeros(nint)
    XS = np.zeros((nint, n))
    PS = np.zeros((nint, n))
    if _uses_kernel(model, gen):
        args = gen.quad.args(model)
        if mode == "jacobian":
            done = K.run_tangent(*args, x0, p0, d0, h, per, nint, config.tol, config.max_iter,
                                 logs, XS, PS)
        elif mode == "two_orbit":
            done = K.run_two_orbit(*args, x0, p0, d0, TWO_ORBIT_EPS, h, per, nint, config.tol,
                                   config.max_iter, logs, XS, PS)
        else:
            raise PreconditionError(f"unknown tangent mode {mode!r}")
        if done < nint:
            raise StepFailure(f"tangent flow failed in interval {done + 1}",
                              PhaseState(XS[max(done - 1, 0)], PS[max(done - 1, 0)]), config.max_iter)
    else:
        st, d = PhaseState(x0, p0), d0
        for k in range(nint):
            for _ in range(per):
                st, d = tangent_step(model, gen, st, d, h, config, mode, TWO_ORBIT_EPS)
            nrm = np.linalg.norm(d)
            logs[k] = math.log(nrm)
            d = d / nrm
            XS[k], PS[k] = st.x, st.p
    Tn = nint * per * config.h
    return LyapunovEstimate(
        horizon=Tn,
        renorm_interval=per * config.h,
        exponent=float(logs.sum() / Tn),
        growth_log=logs,
        final=PhaseState(XS[-1], PS[-1]),
        orbit_x=XS,
        orbit_p=PS,
    )


def random_delta(n: int, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal(2 * n)
    return d / np.linalg.norm(d)


# --- reports ------------------------------------------------------------------


@dataclass
class MemberResult:
    index: int
    x0: list
    p0: list
    exponent: float
    early_exponent: float
    drift: float
    rank: int

    def to_dict(self):
        return asdict(self)


@dataclass
class EntropyReport:
    model: str
    verdict: str
    threshold: float
    horizon: float
    members: list = field(default_factory=list)
    failing_member: Optional[int] = None
    gate: Optional[dict] = None
    config: dict = field(default_factory=dict)

    @property
    def max_exponent(self) -> float:
        return max((m.exponent for m in self.members), default=float("nan"))

    def to_dict(self):
        return {
            "model": self.model,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "horizon": self.horizon,
            "max_exponent": self.max_exponent,
            "failing_member": self.failing_member,
            "gate": self.gate,
            "config": self.config,
            "members": [m.to_dict() for m in self.members],
        }


def _orbit_drift(model: ChartModel, est: LyapunovEstimate, state0: PhaseState, t_list) -> float:
    """Largest relative drift of H and I_t over the renormalisation samples."""
    obs = [hamiltonian_observable(model)] + [integral_observable(model, t) for t in t_list]
    s0 = unit_speed(model, state0)
    orbit = PhaseState(est.orbit_x, est.orbit_p)
    worst = 0.0
    for o in obs:
        v0 = float(o.value(s0))
        v = o.value(orbit)
        worst = max(worst, float(np.abs(v - v0).max()) / max(abs(v0), 1e-12))
    return worst


def entropy_report(
    model: ChartModel,
    ensemble_size: int,
    T: float,
    seed: int,
    config: IntegratorConfig = ENTROPY_CONFIG,
    renorm_interval: float = 1.0,
    early_T: float = 100.0,
    drift_tol: Optional[float] = None,
    gate_depth: str = "quick",
) -> EntropyReport:
    """Ensemble exponents against threshold(T), gated by the integrability battery."""
    from .verification import run_battery

    if ensemble_size < 1:
        raise PreconditionError("ensemble_size must be >= 1")
    thr = threshold(T)
    if drift_tol is None:
        drift_tol = DRIFT_TOL * max(1.0, (config.h / 1e-3) ** 2)
    echo = {"ensemble_size": ensemble_size, "T": T, "seed": seed, "h": config.h,
            "renorm_interval": renorm_interval, "early_T": early_T, "drift_tol": drift_tol}
    gate = run_battery(model, seed, gate_depth, only=("brackets", "conservation"))
    rep = EntropyReport(model.name, "", thr, float(T), gate=gate.to_dict(), config=echo)
    if not gate.passed:
        rep.verdict = "NOT_INTEGRABLE_INPUT"
        return rep
    rng = np.random.default_rng(seed)
    states = random_states(model, ensemble_size, rng)
    t_list = default_t_list(model)
    for k in range(ensemble_size):
        s = PhaseState(states.x[k], states.p[k])
        est = lyapunov_estimate(model, s, random_delta(model.dim, rng), T, renorm_interval, config)
        early = est.exponent_at(min(early_T, est.horizon))
        rank = int(independence_rank(model, s, t_list))
        rep.members.append(MemberResult(k, s.x.tolist(), s.p.tolist(), est.exponent, early,
                                        _orbit_drift(model, est, s, t_list), rank))
    for m in rep.members:
        if not (m.exponent < thr and m.drift < drift_tol):
            rep.verdict = "INCONSISTENT"
            rep.failing_member = m.index
            return rep
    rep.verdict = "CONSISTENT_WITH_ZERO_ENTROPY"
    return rep


@dataclass
class PseudonormEstimate:
    exponent: float
    threshold: float
    below_threshold: bool
    estimate: LyapunovEstimate


def pseudonorm_estimate(
    model: ChartModel,
    a: Sequence[float],
    t_list: Sequence[float],
    T: float,
    config: IntegratorConfig = ENTROPY_CONFIG,
    seed: int = 0,
    state0: Optional[PhaseState] = None,
    renorm_interval: float = 1.0,
) -> PseudonormEstimate:
    """Lyapunov exponent along the flow of sum_j a_j I_{t_j}."""
    a = np.asarray(a, dtype=float)
    t_list = [float(t) for t in t_list]
    if not np.any(a):
        raise PreconditionError("a must be nonzero")
    if len(set(t_list)) != len(t_list):
        raise PreconditionError("t_list values must be pairwise distinct")
    rng = np.random.default_rng(seed)
    if state0 is None:
        s = random_states(model, 1, rng)
        state0 = PhaseState(s.x[0], s.p[0])
    gen = combination_observable(model, a, t_list)
    est = lyapunov_estimate(model, state0, random_delta(model.dim, rng), T, renorm_interval,
                            config, generator=gen)
    thr = threshold(T)
    return PseudonormEstimate(est.exponent, thr, est.exponent < thr, est)
