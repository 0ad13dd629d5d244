"""Calibration of the noisy simulator against the HEOM reference.

Given a post-processed quantum trace, find the bath coupling and tunneling
(lambda_H, J_H) whose HEOM dynamics match it best: coarse grid scan, then
derivative-free simplex refinement.  The fitted lambda_H values across a
sweep of identity-gate frequencies delta_Q fall on a near-straight line,
which can be inverted to pick the delta_Q emulating a target coupling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .circuit import PopulationTrace
from .heom import BathParams, HeomConfig, heom_population_trace
from .qdyn import SystemParams


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchGrid:
    """Coarse (lambda_H, J_H) grid for the HEOM fit."""

    lambda_min: float = 0.05
    lambda_max: float = 2.0
    lambda_points: int = 8
    j_min: float = 0.5
    j_max: float = 1.5
    j_points: int = 8

    def lambdas(self) -> np.ndarray:
        return np.linspace(self.lambda_min, self.lambda_max, self.lambda_points)

    def js(self) -> np.ndarray:
        return np.linspace(self.j_min, self.j_max, self.j_points)


@dataclass
class HeomFitResult:
    lambda_h: float
    j_h: float
    residual: float
    grid_diagnostics: list[tuple[float, float, float]] = field(default_factory=list)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def trace_distance_l2(a: PopulationTrace, b: PopulationTrace) -> float:
    """Root-mean-square distance between the p1 channels of two traces."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise ValueError("traces must share an identical time grid")
    return float(np.sqrt(np.mean((a.p1 - b.p1) ** 2)))


def _worker_count() -> int:
    env = os.environ.get("DIMERLAB_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def fit_heom_params(qtrace: PopulationTrace, fixed: tuple[float, float, float],
                    search: SearchGrid = SearchGrid(),
                    heom_cfg: HeomConfig = HeomConfig(depth=5, matsubara=3,
                                                      rel_tol=1e-6, abs_tol=1e-8),
                    refine_iters: int = 60) -> HeomFitResult:
    """Best-matching HEOM parameters (lambda_H, J_H) for a quantum trace.

    ``fixed`` holds (epsilon, gamma, kT).  Evaluates the coarse grid (in
    parallel, bounded by DIMERLAB_THREADS), then runs Nelder-Mead around the
    best grid point, clipped to the search domain.
    """
    epsilon, gamma, kT = fixed
    times = qtrace.times
    cache: dict[tuple[float, float], float] = {}

    def objective(lam: float, j: float) -> float:
        lam = float(np.clip(lam, search.lambda_min, search.lambda_max))
        j = float(np.clip(j, search.j_min, search.j_max))
        key = (round(lam, 12), round(j, 12))
        if key not in cache:
            href = heom_population_trace(
                SystemParams(epsilon=epsilon, j_coupling=j),
                BathParams(lam=lam, gamma=gamma, kT=kT), heom_cfg, times)
            cache[key] = trace_distance_l2(qtrace, href)
        return cache[key]

    points = [(lam, j) for lam in search.lambdas() for j in search.js()]
    diagnostics = []
    failures = []
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = [pool.submit(objective, lam, j) for lam, j in points]
        for (lam, j), fut in zip(points, futures):
            try:
                diagnostics.append((lam, j, fut.result()))
            except Exception as exc:  # noqa: BLE001 - collected and re-raised
                failures.append((lam, j, exc))
    if not diagnostics:
        raise CalibrationError(f"all HEOM evaluations failed: {failures[:3]}")

    best_lam, best_j, _ = min(diagnostics, key=lambda rec: rec[2])
    res = minimize(lambda x: objective(x[0], x[1]), x0=[best_lam, best_j],
                   method="Nelder-Mead",
                   options={"maxiter": refine_iters, "xatol": 1e-3,
                            "fatol": 1e-6})
    lam_fit = float(np.clip(res.x[0], search.lambda_min, search.lambda_max))
    j_fit = float(np.clip(res.x[1], search.j_min, search.j_max))
    return HeomFitResult(lambda_h=lam_fit, j_h=j_fit,
                         residual=objective(lam_fit, j_fit),
                         grid_diagnostics=diagnostics)


def linear_fit(pairs) -> LinearFit:
    """Ordinary least squares line through (delta_q, value) pairs."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("need at least two points")
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.ptp(x) == 0:
        raise ValueError("all delta_q values are equal; line is not determined")
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope=float(slope), intercept=float(intercept),
                     r_squared=float(r_squared))


def interpolate_delta(lambda_target: float, fit: LinearFit) -> float:
    """Invert the delta_Q -> lambda_H line at a target coupling."""
    if fit.slope == 0:
        raise ZeroDivisionError("fit slope is zero; line is not invertible")
    delta = (lambda_target - fit.intercept) / fit.slope
    if delta < 0:
        raise ValueError(f"interpolated delta_q {delta} is negative")
    return delta
