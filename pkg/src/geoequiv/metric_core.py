"""Metrics on coordinate charts and Levi-Civita pair generation.

Points are arrays of shape ``(..., n)``; metric values come back as
``(..., n, n)`` and derivatives as ``(..., n, n, n)`` indexed ``[k, i, j]`` for
the partial derivative of g_ij along x_k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import KIND_CODES
from .errors import DomainError, PreconditionError, ProfileError

H_FD = 1e-5
WHICH = ("g", "gbar")


@dataclass(frozen=True)
class Profile:
    """Scalar eigenvalue function of one coordinate.

    ``constant`` uses ``offset`` as its value; ``affine`` is
    ``offset + amplitude * x``; ``sin``/``cos`` are
    ``offset + amplitude * sin(frequency * x + phase)`` (resp. cos).
    """

    kind: str
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ProfileError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls("constant", offset=float(value))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def packed(self) -> list:
        return [KIND_CODES[self.kind], self.offset, self.amplitude, self.frequency, self.phase]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.offset)
        if self.kind == "affine":
            return self.offset + self.amplitude * x
        arg = self.frequency * x + self.phase
        if self.kind == "sin":
            return self.offset + self.amplitude * np.sin(arg)
        return self.offset + self.amplitude * np.cos(arg)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "affine":
            return np.full_like(x, self.amplitude)
        arg = self.frequency * x + self.phase
        if self.kind == "sin":
            return self.amplitude * self.frequency * np.cos(arg)
        return -self.amplitude * self.frequency * np.sin(arg)

    def natural_range(self, lo: float, hi: float) -> tuple:
        """Exact image of [lo, hi]."""
        if self.kind == "constant":
            return (self.offset, self.offset)
        if self.kind == "affine":
            a, b = sorted((float(self.value(lo)), float(self.value(hi))))
            return (a, b)
        amp = abs(self.amplitude)
        if self.frequency == 0.0:
            v = float(self.value(lo))
            return (v, v)
        if abs(self.frequency) * (hi - lo) >= 2 * math.pi:
            return (self.offset - amp, self.offset + amp)
        cand = [lo, hi]
        # critical points: frequency * x + phase = pi/2 + k pi (sin) or k pi (cos)
        base = math.pi / 2 if self.kind == "sin" else 0.0
        f = self.frequency
        kmin = math.floor((min(f * lo, f * hi) + self.phase - base) / math.pi) - 1
        kmax = math.ceil((max(f * lo, f * hi) + self.phase - base) / math.pi) + 1
        for k in range(kmin, kmax + 1):
            xc = (base + k * math.pi - self.phase) / f
            if lo <= xc <= hi:
                cand.append(xc)
        vals = self.value(np.array(cand))
        return (float(vals.min()), float(vals.max()))


@dataclass(frozen=True)
class LCProfile:
    """Per-axis eigenvalue profiles with declared ranges [m_i, M_i]."""

    functions: tuple
    ranges: tuple

    @property
    def dim(self) -> int:
        return len(self.functions)

    def packed(self) -> np.ndarray:
        return np.array([f.packed() for f in self.functions], dtype=float)

    def constant_flags(self) -> tuple:
        return tuple(f.is_constant for f in self.functions)

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([f.value(x[..., i]) for i, f in enumerate(self.functions)], axis=-1)

    def derivatives(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([f.derivative(x[..., i]) for i, f in enumerate(self.functions)], axis=-1)


def pi_products(lam: np.ndarray, t) -> np.ndarray:
    """Pi_i(t) = prod_{j != i} (lam_j - t), broadcast over leading axes of ``lam``."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    n = lam.shape[-1]
    diff = lam - t
    out = np.ones(np.broadcast_shapes(diff.shape))
    for i in range(n):
        for j in range(n):
            if j != i:
                out[..., i] *= diff[..., j]
    return out


def lc_diagonals(lam: np.ndarray):
    """|Pi_i(lam_i)| and rho_i for each axis."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    b = np.ones_like(lam)
    for i in range(n):
        for j in range(n):
            if j != i:
                b[..., i] *= np.abs(lam[..., j] - lam[..., i])
    rho = 1.0 / (np.prod(lam, axis=-1, keepdims=True) * lam)
    return b, rho


def _log_diag_grad(lam: np.ndarray, bar: bool) -> np.ndarray:
    # D[..., i, k] = d log(diag_i) / d lam_k
    n = lam.shape[-1]
    D = np.zeros(lam.shape + (n,))
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            inv = 1.0 / (lam[..., j] - lam[..., i])
            D[..., i, j] += inv
            D[..., i, i] -= inv
        if bar:
            D[..., i, :] -= 1.0 / lam
            D[..., i, i] -= 1.0 / lam[..., i]
    return D


@dataclass(frozen=True)
class MetricEvaluator:
    """Symmetric metric field with analytic or finite-difference derivative.

    ``lc`` is ``(packed_profiles, bar)`` when the metric is one of a
    Levi-Civita pair, which lets the compiled integrator take over.
    """

    value_fn: Callable
    derivative_fn: Optional[Callable] = None
    h_fd: float = H_FD
    lc: Optional[tuple] = None

    def value(self, x) -> np.ndarray:
        return self.value_fn(np.asarray(x, dtype=float))

    def derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.derivative_fn is not None:
            return self.derivative_fn(x)
        return self.fd_derivative(x)

    def fd_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        parts = []
        for k in range(n):
            e = np.zeros(n)
            e[k] = self.h_fd
            parts.append((self.value_fn(x + e) - self.value_fn(x - e)) / (2 * self.h_fd))
        return np.stack(parts, axis=-3)

    def scaled(self, factor: float) -> "MetricEvaluator":
        vf, dfn = self.value_fn, self.derivative_fn
        if dfn is None:
            return MetricEvaluator(lambda x: factor * vf(x), h_fd=self.h_fd)
        return MetricEvaluator(lambda x: factor * vf(x), lambda x: factor * dfn(x), self.h_fd)


@dataclass(frozen=True)
class ChartModel:
    """A coordinate box carrying two metrics.

    ``profiles`` is set only for pairs built by :func:`lc_generate`.
    """

    dim: int
    bounds: tuple
    periodic: tuple
    g: MetricEvaluator
    gbar: MetricEvaluator
    profiles: Optional[LCProfile] = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def is_lc(self) -> bool:
        return self.profiles is not None

    def lows(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    def highs(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)

    def wrap(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        lo, hi = self.lows(), self.highs()
        for k in range(self.dim):
            if self.periodic[k]:
                x[..., k] = lo[k] + np.mod(x[..., k] - lo[k], hi[k] - lo[k])
        return x

    def check(self, x, margin: float = 0.0) -> np.ndarray:
        """Wrap periodic axes; raise DomainError outside non-periodic bounds."""
        x = self.wrap(x)
        if x.shape[-1] != self.dim:
            raise DomainError(f"point has {x.shape[-1]} coordinates, chart has {self.dim}")
        lo, hi = self.lows(), self.highs()
        for k in range(self.dim):
            if self.periodic[k]:
                continue
            xk = x[..., k]
            if np.any(xk - margin < lo[k]) or np.any(xk + margin > hi[k]):
                raise DomainError(
                    f"coordinate x{k + 1} outside [{lo[k]}, {hi[k]}]"
                    + (f" with stencil margin {margin}" if margin else "")
                )
        return x

    def evaluator(self, which: str) -> MetricEvaluator:
        if which not in WHICH:
            raise PreconditionError(f"metric must be one of {WHICH}, got {which!r}")
        return self.g if which == "g" else self.gbar

    def sample_points(self, count: int, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
        lo, hi = self.lows(), self.highs()
        for k in range(self.dim):
            if not self.periodic[k]:
                lo[k] += margin
                hi[k] -= margin
        return lo + (hi - lo) * rng.random((count, self.dim))


def _lc_evaluator(lcp: LCProfile, bar: bool) -> MetricEvaluator:
    def value(x):
        lam = lcp.values(x)
        b, rho = lc_diagonals(lam)
        diag = b * rho if bar else b
        n = lam.shape[-1]
        out = np.zeros(lam.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = diag
        return out

    def derivative(x):
        lam = lcp.values(x)
        dlam = lcp.derivatives(x)
        b, rho = lc_diagonals(lam)
        diag = b * rho if bar else b
        D = _log_diag_grad(lam, bar)
        n = lam.shape[-1]
        out = np.zeros(lam.shape + (n, n))
        idx = np.arange(n)
        # d_k g_ii = lam_k' * g_ii * D[i, k]
        dd = dlam[..., None, :] * diag[..., :, None] * D
        out[..., :, idx, idx] = np.swapaxes(dd, -1, -2)
        return out

    return MetricEvaluator(value, derivative, lc=(lcp.packed(), bar))


def _as_bounds(bounds, n):
    if len(bounds) != n:
        raise PreconditionError(f"{len(bounds)} bounds given for dimension {n}")
    out = []
    for k, (lo, hi) in enumerate(bounds):
        if not hi > lo:
            raise PreconditionError(f"bound x{k + 1} is empty: [{lo}, {hi}]")
        out.append((float(lo), float(hi)))
    return tuple(out)


def lc_generate(
    profiles: Sequence[Profile] | LCProfile,
    bounds,
    periodic,
    ranges=None,
    *,
    allow_contact: bool = False,
    audit_samples: int = 10_000,
    name: str = "",
) -> ChartModel:
    """Build a geodesically equivalent pair in Levi-Civita form.

    g_ii = |Pi_i(lam_i)| and gbar_ii = rho_i |Pi_i(lam_i)| with
    rho_i = 1 / (lam_1 ... lam_n lam_i).  Declared ranges are audited by
    sampling each axis; when absent the exact image of the bound is used.
    ``allow_contact`` admits touching ranges M_i == m_{i+1} (a bifurcation
    model); overlap is always rejected.
    """
    if isinstance(profiles, LCProfile):
        ranges = profiles.ranges if ranges is None else ranges
        functions = tuple(profiles.functions)
    else:
        functions = tuple(profiles)
    n = len(functions)
    if n < 1:
        raise PreconditionError("need at least one profile")
    bounds = _as_bounds(bounds, n)
    periodic = tuple(bool(b) for b in periodic)
    if len(periodic) != n:
        raise PreconditionError(f"{len(periodic)} periodic flags given for dimension {n}")

    for k, f in enumerate(functions):
        if not periodic[k] or f.is_constant:
            continue
        period = bounds[k][1] - bounds[k][0]
        if f.kind == "affine" and f.amplitude != 0.0:
            raise ProfileError(f"profile {k + 1} is affine on periodic axis x{k + 1}")
        if f.kind in ("sin", "cos"):
            cycles = f.frequency * period / (2 * math.pi)
            if abs(cycles - round(cycles)) > 1e-9:
                raise ProfileError(f"profile {k + 1} is not periodic on axis x{k + 1}")

    if ranges is None:
        ranges = tuple(f.natural_range(*bounds[k]) for k, f in enumerate(functions))
    else:
        ranges = tuple((float(a), float(b)) for a, b in ranges)
        if len(ranges) != n:
            raise PreconditionError(f"{len(ranges)} ranges declared for dimension {n}")
        for k, f in enumerate(functions):
            lo, hi = bounds[k]
            xs = np.linspace(lo, hi, audit_samples)
            vals = f.value(xs)
            m, M = ranges[k]
            slack = 1e-12 * max(1.0, abs(m), abs(M))
            if vals.min() < m - slack or vals.max() > M + slack:
                raise ProfileError(
                    f"profile {k + 1} leaves its declared range [{m}, {M}]: "
                    f"sampled [{vals.min()}, {vals.max()}]"
                )

    for k in range(n):
        if ranges[k][0] <= 0.0:
            raise ProfileError(f"non-positive eigenvalue: profile {k + 1} reaches {ranges[k][0]}")
    for k in range(n - 1):
        M, m = ranges[k][1], ranges[k + 1][0]
        touching_ok = allow_contact or functions[k].is_constant or functions[k + 1].is_constant
        if M > m or (M == m and not touching_ok):
            raise ProfileError(f"overlapping ranges ({k + 1},{k + 2})")

    lcp = LCProfile(functions, ranges)
    return ChartModel(
        dim=n,
        bounds=bounds,
        periodic=periodic,
        g=_lc_evaluator(lcp, bar=False),
        gbar=_lc_evaluator(lcp, bar=True),
        profiles=lcp,
        name=name,
    )


def metric_eval(model: ChartModel, which: str, x):
    """Metric matrix and coordinate derivatives at ``x`` (wrapped)."""
    ev = model.evaluator(which)
    x = model.check(x)
    return ev.value(x), ev.derivative(x)


def christoffel(model: ChartModel, which: str, x) -> np.ndarray:
    """Gamma[..., k, i, j] of the Levi-Civita connection."""
    G, dG = metric_eval(model, which, x)
    # lowered[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
    lowered = (
        np.swapaxes(dG, -3, -2)
        + np.moveaxis(np.swapaxes(dG, -3, -2), -1, -2)
        - dG
    )
    Ginv = np.linalg.inv(G)
    return 0.5 * np.einsum("...kl,...lij->...kij", Ginv, lowered)


@dataclass(frozen=True)
class SPDResult:
    ok: bool
    worst_eigenvalue: float
    samples: int


def spd_check(model: ChartModel, which: str, samples: int, seed: int = 0) -> SPDResult:
    if samples < 1:
        raise PreconditionError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = model.sample_points(samples, rng)
    G = model.evaluator(which).value(pts)
    sym = 0.5 * (G + np.swapaxes(G, -1, -2))
    worst = float(np.linalg.eigvalsh(sym).min())
    return SPDResult(ok=bool(worst > 0.0), worst_eigenvalue=worst, samples=samples)


def raw_model(g_fn, gbar_fn, bounds, periodic, *, g_derivative=None, gbar_derivative=None,
              name: str = "") -> ChartModel:
    """Pair from arbitrary matrix-valued callables (derivatives by finite differences)."""
    n = len(bounds)
    return ChartModel(
        dim=n,
        bounds=_as_bounds(bounds, n),
        periodic=tuple(bool(b) for b in periodic),
        g=MetricEvaluator(g_fn, g_derivative),
        gbar=MetricEvaluator(gbar_fn, gbar_derivative),
        name=name,
    )
