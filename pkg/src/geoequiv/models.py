"""Canonical test models and deliberately defective pairs."""

from __future__ import annotations

import math

import numpy as np

from .metric_core import (
    ChartModel,
    MetricEvaluator,
    Profile,
    lc_diagonals,
    lc_generate,
)

TWO_PI = 2 * math.pi


def trig2() -> ChartModel:
    """lam_1 = 1 + 0.3 sin x1, lam_2 = 2 + 0.3 cos x2 on the periodic box [0, 2pi)^2."""
    return lc_generate(
        [Profile("sin", 1.0, 0.3), Profile("cos", 2.0, 0.3)],
        [(0.0, TWO_PI)] * 2,
        [True, True],
        name="TRIG2",
    )


def trig3() -> ChartModel:
    return lc_generate(
        [Profile("sin", float(i), 0.2) for i in (1, 2, 3)],
        [(0.0, TWO_PI)] * 3,
        [True] * 3,
        name="TRIG3",
    )


def const2() -> ChartModel:
    """lam_1 constant, so d/dx1 is a Killing field of g."""
    return lc_generate(
        [Profile.constant(1.0), Profile("cos", 2.0, 0.3)],
        [(0.0, TWO_PI)] * 2,
        [True, True],
        name="CONST2",
    )


def flat_pair(values=(1.0, 2.0)) -> ChartModel:
    """Constant profiles give constant (flat) metrics."""
    n = len(values)
    return lc_generate(
        [Profile.constant(v) for v in values],
        [(0.0, TWO_PI)] * n,
        [True] * n,
        name="FLAT",
    )


def broken_pair(model: ChartModel, index: int = 0) -> ChartModel:
    """Replace rho_index by 1 in gbar; g is untouched, the pair is no longer equivalent."""
    lcp = model.profiles
    n = model.dim

    def gbar(x):
        lam = lcp.values(x)
        b, rho = lc_diagonals(lam)
        rho = rho.copy()
        rho[..., index] = 1.0
        out = np.zeros(lam.shape + (n,))
        idx = np.arange(n)
        out[..., idx, idx] = b * rho
        return out

    return ChartModel(
        dim=n,
        bounds=model.bounds,
        periodic=model.periodic,
        g=model.g,
        gbar=MetricEvaluator(gbar),
        name=f"{model.name}-broken",
        meta={"reference_ranges": lcp.ranges},
    )


def proportional_pair(model: ChartModel, factor: float = 2.0) -> ChartModel:
    """gbar = factor * g: trivially equivalent, nowhere strictly non-proportional."""
    return ChartModel(
        dim=model.dim,
        bounds=model.bounds,
        periodic=model.periodic,
        g=model.g,
        gbar=model.g.scaled(factor),
        name=f"{model.name}-proportional",
    )
