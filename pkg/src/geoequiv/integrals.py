"""The integral family I_t, its polynomial structure, gradients and brackets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import PreconditionError
from .metric_core import ChartModel, pi_products, lc_diagonals
from .projective_tensor import adjugate_S, compute_L

H_GRAD = 1e-6
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class PhaseState:
    """Cotangent point; ``x`` and ``p`` may carry matching leading batch axes."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @classmethod
    def from_velocity(cls, model: ChartModel, x, xi) -> "PhaseState":
        x = np.asarray(x, dtype=float)
        G = model.g.value(model.wrap(x))
        return cls(x, np.einsum("...ij,...j->...i", G, np.asarray(xi, dtype=float)))

    def flat(self):
        n = self.x.shape[-1]
        return self.x.reshape(-1, n), self.p.reshape(-1, n), self.x.shape[:-1]


def velocity(model: ChartModel, state: PhaseState, which: str = "g") -> np.ndarray:
    G = model.evaluator(which).value(model.wrap(state.x))
    return np.linalg.solve(G, state.p[..., None])[..., 0]


def unit_speed(model: ChartModel, state: PhaseState, which: str = "g") -> PhaseState:
    """Rescale momenta so that the Hamiltonian of the chosen metric is 1/2."""
    xi = velocity(model, state, which)
    speed2 = np.einsum("...i,...i->...", state.p, xi)
    return PhaseState(state.x, state.p / np.sqrt(speed2)[..., None])


def random_states(model: ChartModel, count: int, rng: np.random.Generator) -> PhaseState:
    """Uniform base points with isotropic unit-speed velocities."""
    x = model.sample_points(count, rng)
    xi = rng.standard_normal((count, model.dim))
    st = PhaseState.from_velocity(model, x, xi)
    return unit_speed(model, st)


def reference_interval(model: ChartModel) -> tuple:
    """[min lam - 1, max lam + 1] from declared ranges (or a spectrum sample)."""
    if model.is_lc:
        ranges = model.profiles.ranges
    elif "reference_ranges" in model.meta:
        ranges = model.meta["reference_ranges"]
    else:
        pts = model.sample_points(256, np.random.default_rng(0))
        lam = compute_L(model, pts).eigenvalues
        return (float(lam.min()) - 1.0, float(lam.max()) + 1.0)
    return (min(r[0] for r in ranges) - 1.0, max(r[1] for r in ranges) + 1.0)


def chebyshev_nodes(count: int, lo: float, hi: float) -> np.ndarray:
    k = np.arange(count)
    nodes = np.cos((2 * k + 1) * np.pi / (2 * count))[::-1]
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes


def default_t_list(model: ChartModel) -> np.ndarray:
    return chebyshev_nodes(model.dim, *reference_interval(model))


def eval_I(model: ChartModel, state: PhaseState, t) -> np.ndarray:
    """I_t = g(S_t xi, xi) with S_t the adjugate of L - t Id."""
    x = model.check(state.x)
    G = model.g.value(x)
    xi = np.linalg.solve(G, state.p[..., None])[..., 0]
    S = adjugate_S(model, x, t)
    return np.einsum("...i,...ij,...jk,...k->...", xi, G, S, xi)


def eval_I_lc(model: ChartModel, state: PhaseState, t) -> np.ndarray:
    """Closed form sum_i |Pi_i(lam_i)| Pi_i(t) xi_i^2 in Levi-Civita coordinates."""
    if not model.is_lc:
        raise PreconditionError("closed form needs a Levi-Civita model")
    lam = model.profiles.values(state.x)
    b, _ = lc_diagonals(lam)
    xi = state.p / b
    return np.sum(b * pi_products(lam, t) * xi * xi, axis=-1)


@dataclass(frozen=True)
class IntegralFamily:
    """I_t = sum_k coefficients[..., k] t^k at fixed (x, xi)."""

    coefficients: np.ndarray
    residual: float
    nodes: np.ndarray

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, np.moveaxis(self.coefficients, -1, 0))

    def derivative(self, t):
        d = np.polynomial.polynomial.polyder(np.moveaxis(self.coefficients, -1, 0))
        return np.polynomial.polynomial.polyval(t, d)


def poly_coefficients(model: ChartModel, state: PhaseState) -> IntegralFamily:
    """Fit the degree n-1 polynomial t -> I_t through n Chebyshev nodes.

    The residual is measured at n + 1 interleaved check points against a
    fresh adjugate evaluation, relative to the largest |I| seen.
    """
    n = model.dim
    lo, hi = reference_interval(model)
    nodes = chebyshev_nodes(n, lo, hi)
    V = np.vander(nodes, n, increasing=True)
    if np.linalg.cond(V) > 1e10:
        warnings.warn(f"ill-conditioned Vandermonde fit (cond={np.linalg.cond(V):.3g})",
                      RuntimeWarning, stacklevel=2)
    vals = np.stack([eval_I(model, state, t) for t in nodes], axis=-1)
    coef = np.linalg.solve(V, vals[..., None])[..., 0] if vals.ndim > 1 else np.linalg.solve(V, vals)
    fam = IntegralFamily(coef, 0.0, nodes)
    check = chebyshev_nodes(n + 1, lo, hi)
    ref = np.stack([eval_I(model, state, t) for t in check], axis=-1)
    scale = max(float(np.abs(vals).max(initial=0.0)), float(np.abs(ref).max(initial=0.0)), 1e-300)
    fitted = np.stack([fam(t) for t in check], axis=-1)
    residual = float(np.abs(fitted - ref).max() / scale)
    return IntegralFamily(coef, residual, nodes)


def exact_coefficients(model: ChartModel, state: PhaseState) -> np.ndarray:
    """Coefficients from the characteristic expansion of adj(L - t Id)."""
    from .projective_tensor import adjugate_poly

    x = model.check(state.x)
    G = model.g.value(x)
    xi = np.linalg.solve(G, state.p[..., None])[..., 0]
    B = adjugate_poly(compute_L(model, x).matrix)
    return np.stack(
        [np.einsum("...i,...ij,...jk,...k->...", xi, G, B[k], xi) for k in range(model.dim)],
        axis=-1,
    )


def eval_I_prime(model: ChartModel, state: PhaseState, t) -> np.ndarray:
    """dI_t/dt from the fitted coefficients."""
    return poly_coefficients(model, state).derivative(t)


# --- observables --------------------------------------------------------------


@dataclass(frozen=True)
class QuadSpec:
    """Weights of a combination a_h H + sum_j w_j I_{t_j} (``bar`` selects gbar's H)."""

    hamiltonian_weight: float
    weights: tuple
    ts: tuple
    bar: bool = False

    def args(self, model: ChartModel):
        return (
            (model.gbar.lc if self.bar else model.g.lc)[0],
            float(self.hamiltonian_weight),
            np.asarray(self.weights, dtype=float),
            np.asarray(self.ts, dtype=float),
            bool(self.bar),
        )


@dataclass(frozen=True)
class Observable:
    """A phase-space function carrying its own gradient.

    ``grad`` returns (dF/dx, dF/dp).  ``quad`` is set when the compiled
    kernels can evaluate and integrate it directly.
    """

    name: str
    value: Callable
    grad: Callable
    quad: Optional[QuadSpec] = None
    method: str = "analytic"


def _kernel_observable(model: ChartModel, name: str, spec: QuadSpec) -> Observable:
    args = spec.args(model)

    def value(state: PhaseState):
        X, P, shape = state.flat()
        return K.value_batch(*args, np.ascontiguousarray(X), np.ascontiguousarray(P)).reshape(shape)

    def grad(state: PhaseState):
        X, P, shape = state.flat()
        GX, GP = K.grad_batch(*args, np.ascontiguousarray(X), np.ascontiguousarray(P))
        n = X.shape[-1]
        return GX.reshape(shape + (n,)), GP.reshape(shape + (n,))

    return Observable(name, value, grad, spec, "analytic")


def fd_gradient(fun: Callable, state: PhaseState, h: float = H_GRAD, check: bool = True):
    """Centred differences in x and p; warns if steps h and 2h disagree badly."""
    x, p = state.x, state.p
    n = x.shape[-1]

    def partial(which, k, step):
        e = np.zeros(n)
        e[k] = step
        if which == 0:
            return (fun(PhaseState(x + e, p)) - fun(PhaseState(x - e, p))) / (2 * step)
        return (fun(PhaseState(x, p + e)) - fun(PhaseState(x, p - e))) / (2 * step)

    gx = np.stack([partial(0, k, h) for k in range(n)], axis=-1)
    gp = np.stack([partial(1, k, h) for k in range(n)], axis=-1)
    if check:
        cx = np.stack([partial(0, k, 2 * h) for k in range(n)], axis=-1)
        cp = np.stack([partial(1, k, 2 * h) for k in range(n)], axis=-1)
        scale = max(np.abs(gx).max(initial=0.0), np.abs(gp).max(initial=0.0), 1.0)
        gap = max(np.abs(gx - cx).max(initial=0.0), np.abs(gp - cp).max(initial=0.0))
        if gap > 1e-5 * scale:
            warnings.warn(f"finite-difference gradient unstable (h vs 2h gap {gap:.3g})",
                          RuntimeWarning, stacklevel=2)
    return gx, gp


def hamiltonian_observable(model: ChartModel, which: str = "g") -> Observable:
    """H = 1/2 p . g^-1 p for the chosen metric."""
    ev = model.evaluator(which)
    if ev.lc is not None:
        return _kernel_observable(model, f"H[{which}]", QuadSpec(1.0, (), (), bar=ev.lc[1]))

    def value(state: PhaseState):
        G = ev.value(model.wrap(state.x))
        xi = np.linalg.solve(G, state.p[..., None])[..., 0]
        return 0.5 * np.einsum("...i,...i->...", state.p, xi)

    def grad(state: PhaseState):
        x = model.wrap(state.x)
        G = ev.value(x)
        xi = np.linalg.solve(G, state.p[..., None])[..., 0]
        dG = ev.derivative(x)
        gx = -0.5 * np.einsum("...i,...kij,...j->...k", xi, dG, xi)
        return gx, xi

    return Observable(f"H[{which}]", value, grad, None, "analytic")


def combination_observable(
    model: ChartModel,
    weights: Sequence[float],
    t_list: Sequence[float],
    hamiltonian_weight: float = 0.0,
    method: str = "auto",
) -> Observable:
    """F = hamiltonian_weight * H + sum_j weights[j] * I_{t_list[j]}."""
    weights = tuple(float(a) for a in weights)
    t_list = tuple(float(t) for t in t_list)
    if len(weights) != len(t_list):
        raise PreconditionError("weights and t_list differ in length")
    name = "+".join([f"{a:g}*I[{t:g}]" for a, t in zip(weights, t_list)]
                    + ([f"{hamiltonian_weight:g}*H"] if hamiltonian_weight else [])) or "0"
    if method == "auto":
        method = "analytic" if model.is_lc else "fd"
    if method == "analytic":
        if not model.is_lc:
            raise PreconditionError("analytic gradients need a Levi-Civita model")
        return _kernel_observable(model, name, QuadSpec(hamiltonian_weight, weights, t_list))

    H = hamiltonian_observable(model) if hamiltonian_weight else None

    def value(state: PhaseState):
        out = sum(a * eval_I(model, state, t) for a, t in zip(weights, t_list))
        if H is not None:
            out = out + hamiltonian_weight * H.value(state)
        return out + 0.0 * state.p[..., 0]

    def grad(state: PhaseState):
        return fd_gradient(value, state)

    return Observable(name, value, grad, None, "fd")


def integral_observable(model: ChartModel, t: float, method: str = "auto") -> Observable:
    obs = combination_observable(model, [1.0], [t], method=method)
    return Observable(f"I[{float(t):g}]", obs.value, obs.grad, obs.quad, obs.method)


def grad_I(model: ChartModel, state: PhaseState, t, method: str = "auto"):
    """(dI_t/dx, dI_t/dp) in canonical coordinates."""
    if method == "auto":
        method = "analytic" if model.is_lc else "fd"
    if method == "fd":
        model.check(state.x, margin=2 * H_GRAD)
    return integral_observable(model, t, method).grad(state)


def poisson_bracket(f: Observable, g: Observable, state: PhaseState) -> np.ndarray:
    fx, fp = f.grad(state)
    gx, gp = g.grad(state)
    return np.sum(fx * gp - fp * gx, axis=-1)


def gradient_matrix(model: ChartModel, state: PhaseState, t_list, method: str = "auto") -> np.ndarray:
    """Rows dI_{t_j} as (..., len(t_list), 2n)."""
    rows = []
    for t in t_list:
        gx, gp = grad_I(model, state, t, method)
        rows.append(np.concatenate([gx, gp], axis=-1))
    return np.stack(rows, axis=-2)


def independence_rank(model: ChartModel, state: PhaseState, t_list=None, method: str = "auto",
                      rtol: float = RANK_RTOL) -> np.ndarray:
    """Numerical rank of the differentials dI_{t_j}; singular values below rtol * max drop out."""
    t_list = default_t_list(model) if t_list is None else np.asarray(t_list, dtype=float)
    if len(set(t_list.tolist())) != len(t_list):
        raise PreconditionError("t_list values must be pairwise distinct")
    M = gradient_matrix(model, state, t_list, method)
    s = np.linalg.svd(M, compute_uv=False)
    top = s[..., :1]
    return np.where(top[..., 0] > 0, np.sum(s > rtol * top, axis=-1), 0)
