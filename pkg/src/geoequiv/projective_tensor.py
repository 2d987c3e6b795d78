"""The (1,1)-tensor L of a metric pair, its spectrum, adjugates and torsion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .metric_core import ChartModel, MetricEvaluator

TOL_MULT = 1e-9
TOL_SYM = 1e-10
H_TORSION = 1e-5


@dataclass(frozen=True)
class LTensorValue:
    matrix: np.ndarray  # (..., n, n), acts on column vectors
    eigenvalues: np.ndarray  # (..., n) ascending
    eigenbasis: np.ndarray  # (..., n, n), columns g-orthonormal
    scale: np.ndarray  # (det gbar / det g) ** (1 / (n + 1))


@dataclass(frozen=True)
class SpectrumSample:
    point: np.ndarray
    eigenvalues: np.ndarray
    multiple: np.ndarray  # (..., n - 1) flags for |lam_i - lam_{i+1}| < tol

    @property
    def simple(self):
        return ~np.any(self.multiple, axis=-1)


def _L_from_metrics(G: np.ndarray, Gb: np.ndarray) -> LTensorValue:
    n = G.shape[-1]
    ratio = np.linalg.det(Gb) / np.linalg.det(G)
    if np.any(~(ratio > 0)):
        raise ArithmeticError("det(gbar)/det(g) is not positive")
    c = ratio ** (1.0 / (n + 1))
    L = c[..., None, None] * np.linalg.solve(Gb, G)
    # congruence with the Cholesky factor of g gives a symmetric problem
    C = np.linalg.cholesky(G)
    Ls = c[..., None, None] * (np.swapaxes(C, -1, -2) @ np.linalg.solve(Gb, C))
    Ls = 0.5 * (Ls + np.swapaxes(Ls, -1, -2))
    w, V = np.linalg.eigh(Ls)
    E = np.linalg.solve(np.swapaxes(C, -1, -2), V)
    return LTensorValue(matrix=L, eigenvalues=w, eigenbasis=E, scale=c)


def compute_L(model: ChartModel, x) -> LTensorValue:
    x = model.check(x)
    return _L_from_metrics(model.g.value(x), model.gbar.value(x))


def self_adjoint_residual(model: ChartModel, x) -> np.ndarray:
    """max |g L - (g L)^T| per point."""
    x = model.check(x)
    G = model.g.value(x)
    gL = G @ compute_L(model, x).matrix
    return np.abs(gL - np.swapaxes(gL, -1, -2)).max(axis=(-1, -2))


def spectrum(model: ChartModel, x, tol_mult: float = TOL_MULT) -> SpectrumSample:
    x = model.check(x)
    lam = compute_L(model, x).eigenvalues
    return SpectrumSample(point=x, eigenvalues=lam, multiple=np.diff(lam, axis=-1) < tol_mult)


def _cofactor_adjugate(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    if n == 1:
        return np.ones_like(A)
    out = np.empty_like(A)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(A, i, axis=-2), j, axis=-1)
            # adj[j, i] is the (i, j) cofactor
            out[..., j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


def faddeev_leverrier(A: np.ndarray):
    """Matrices M_1..M_n and characteristic coefficients of ``A``.

    adj(t I - A) = sum_k M_k t^(n-k) and adj(A) = (-1)^(n+1) M_n.
    """
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    Ms = []
    M = np.zeros_like(A)
    coef = np.ones(A.shape[:-2])
    for k in range(1, n + 1):
        M = A @ M + coef[..., None, None] * eye
        Ms.append(M)
        coef = -np.trace(A @ M, axis1=-2, axis2=-1) / k
    return Ms


def adjugate(A) -> np.ndarray:
    """Adjugate (transposed cofactor matrix), exact for singular input."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if n <= 4:
        return _cofactor_adjugate(A)
    return (-1) ** (n + 1) * faddeev_leverrier(A)[-1]


def adjugate_poly(Lmat) -> np.ndarray:
    """Coefficients B_0..B_{n-1} with adj(L - t Id) = sum_k t^k B_k; shape (n, ..., n, n)."""
    Lmat = np.asarray(Lmat, dtype=float)
    n = Lmat.shape[-1]
    Ms = faddeev_leverrier(Lmat)
    sign = (-1) ** (n - 1)
    return np.stack([sign * Ms[n - 1 - k] for k in range(n)])


def adjugate_S(model: ChartModel, x, t) -> np.ndarray:
    Lmat = compute_L(model, x).matrix
    n = model.dim
    t = np.asarray(t, dtype=float)[..., None, None]
    return adjugate(Lmat - t * np.eye(n))


def torsion_components(model: ChartModel, x, h: float = H_TORSION) -> np.ndarray:
    """N[..., k, i, j] = N_L(d_i, d_j)^k by centred differences of L."""
    x = model.check(x, margin=h)
    n = model.dim
    L = compute_L(model, x).matrix
    dL = []
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        dL.append((compute_L(model, x + e).matrix - compute_L(model, x - e).matrix) / (2 * h))
    dL = np.stack(dL, axis=-3)  # [..., a, k, i] = d_a L^k_i
    # [LX, LY] part: L^a_i d_a L^k_j - L^a_j d_a L^k_i
    t1 = np.einsum("...ai,...akj->...kij", L, dL)
    t1 = t1 - np.swapaxes(t1, -1, -2)
    # -L[LX, Y] - L[X, LY] part: L^k_a (d_j L^a_i - d_i L^a_j)
    djLai = np.einsum("...jai->...aij", dL)
    t2 = np.einsum("...ka,...aij->...kij", L, djLai - np.swapaxes(djLai, -1, -2))
    return t1 + t2


def nijenhuis_torsion(model: ChartModel, x, h: float = H_TORSION):
    """Largest absolute torsion component at each point."""
    N = torsion_components(model, x, h)
    return np.abs(N).max(axis=(-3, -2, -1))


@dataclass(frozen=True)
class NonProportionality:
    strict: np.ndarray
    roots: np.ndarray  # roots of det(g - t gbar), ascending
    gaps: np.ndarray


def strict_nonprop(model: ChartModel, x, tol_mult: float = TOL_MULT) -> NonProportionality:
    """Simple roots of det(g - t gbar) at ``x``.

    The roots are lam_i / scale; simplicity is decided on the L spectrum so
    that the verdict coincides with :func:`spectrum` multiplicity flags.
    """
    Lv = compute_L(model, x)
    roots = Lv.eigenvalues / Lv.scale[..., None]
    multiple = np.diff(Lv.eigenvalues, axis=-1) < tol_mult
    return NonProportionality(
        strict=~np.any(multiple, axis=-1), roots=roots, gaps=np.diff(roots, axis=-1)
    )


@dataclass(frozen=True)
class LeafRestriction:
    model: ChartModel
    indices: tuple
    basepoint: np.ndarray
    C: float
    expected_spectrum: np.ndarray


def _restricted(ev: MetricEvaluator, base: np.ndarray, idx: np.ndarray) -> MetricEvaluator:
    def embed(y):
        y = np.asarray(y, dtype=float)
        full = np.broadcast_to(base, y.shape[:-1] + base.shape).copy()
        full[..., idx] = y
        return full

    def value(y):
        G = ev.value(embed(y))
        return G[..., idx[:, None], idx[None, :]]

    def derivative(y):
        dG = ev.derivative(embed(y))
        return dG[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]]

    return MetricEvaluator(value, derivative)


def leaf_restriction(model: ChartModel, A: Sequence[int], x, tol_mult: float = TOL_MULT) -> LeafRestriction:
    """Restrict the pair to the plaque {x_j = const, j not in A} through ``x``.

    Indices are 0-based.  The predicted spectrum of the restricted L is
    C^(1/(m+1)) (lam_a)_{a in A} with C the product of the frozen eigenvalues.
    """
    if not model.is_lc:
        raise PreconditionError("leaf restriction needs a Levi-Civita model")
    n = model.dim
    idx = np.array(sorted(set(int(a) for a in A)), dtype=int)
    if idx.size == 0 or idx.size == n:
        raise PreconditionError("index set must be a non-empty proper subset")
    if idx.min() < 0 or idx.max() >= n:
        raise PreconditionError(f"indices out of range for dimension {n}")
    x = model.check(np.asarray(x, dtype=float))
    lam = model.profiles.values(x)
    rest = np.array([j for j in range(n) if j not in set(idx.tolist())])
    for a in idx:
        for j in rest:
            if abs(lam[a] - lam[j]) < tol_mult:
                raise PreconditionError(
                    f"eigenvalue {a + 1} meets eigenvalue {j + 1} at the basepoint"
                )
    m = idx.size
    C = float(np.prod(lam[rest]))
    sub = ChartModel(
        dim=m,
        bounds=tuple(model.bounds[a] for a in idx),
        periodic=tuple(model.periodic[a] for a in idx),
        g=_restricted(model.g, x, idx),
        gbar=_restricted(model.gbar, x, idx),
        name=f"{model.name}|A={tuple(int(a) + 1 for a in idx)}",
    )
    expected = np.sort(C ** (1.0 / (m + 1)) * lam[idx])
    return LeafRestriction(sub, tuple(int(a) for a in idx), x, C, expected)
