"""Thermodynamic feasibility checks used as optimization constraints.

Liquid-phase stability (convexity of the Gibbs energy of mixing, checked
on composition grids), isobaric azeotropy detection from the endpoint
slopes of the bubble curve, and the subcritical heuristic
T_crit ~ 1.5 * tsat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import vle

STABILITY_EPS = 0.0   # stability tolerance: incipient instability counts as stable
_HESS_STEP = 1e-5     # composition step for the ternary Hessian


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    min_margin: float      # smallest stability-expression value on the grid
    violations: tuple      # compositions where the expression went below eps


@dataclass(frozen=True)
class AzeotropeReport:
    exists: bool
    kind: str              # "maximum-boiling" | "minimum-boiling" | "none"
    endpoint_slopes: tuple  # dT/dx_i at x_i -> 0 and x_i -> 1, K


@dataclass(frozen=True)
class SubcriticalReport:
    passes: bool
    t_crit: tuple   # approximated critical temperatures, K
    margins: tuple  # t_crit_i minus the hottest temperature seen, K


def binary_stability_margins(model, grid_n=21, component=0):
    """The stability expression d ln(gamma_i)/dx_i + 1/x_i on a uniform
    interior grid; the Margules derivative is analytic."""
    if grid_n < 11:
        raise ValueError(f"grid_n must be at least 11, got {grid_n}")
    xs = np.linspace(0.0, 1.0, grid_n + 2)[1:-1]
    margins = np.empty_like(xs)
    for k, x1 in enumerate(xs):
        x = (x1, 1.0 - x1) if component == 0 else (1.0 - x1, x1)
        d = model.dln_gamma_dx(x)[component]
        margins[k] = d + 1.0 / x1
    return xs, margins


def binary_stability(model, grid_n=21, component=0):
    """Liquid-phase stability of a binary Margules mixture.

    The Gibbs-Duhem relation makes one component's check sufficient;
    ``component`` selects which one is evaluated.
    """
    xs, margins = binary_stability_margins(model, grid_n, component)
    bad = margins < STABILITY_EPS
    return StabilityReport(
        stable=not bool(bad.any()),
        min_margin=float(margins.min()),
        violations=tuple(float(x) for x in xs[bad]))


def mixing_gibbs(model, x):
    """Gibbs energy of mixing over RT: sum x ln x + sum x ln(gamma)."""
    total = 0.0
    lng = model.ln_gamma(x)
    for xi, lgi in zip(x, lng):
        if xi > 0.0:
            total += xi * (math.log(xi) + lgi)
    return total


def ternary_simplex_grid(grid_n=21):
    """Interior simplex grid with spacing 1/grid_n."""
    pts = []
    for i in range(1, grid_n):
        for j in range(1, grid_n - i):
            x1 = i / grid_n
            x2 = j / grid_n
            pts.append((x1, x2, 1.0 - x1 - x2))
    return pts


def ternary_hessian(model, x1, x2, h=_HESS_STEP):
    """Central-difference Hessian of the mixing Gibbs energy w.r.t.
    (x1, x2), the third fraction closing the simplex."""
    def g(a, b):
        return mixing_gibbs(model, (a, b, 1.0 - a - b))

    g0 = g(x1, x2)
    h11 = (g(x1 + h, x2) - 2.0 * g0 + g(x1 - h, x2)) / (h * h)
    h22 = (g(x1, x2 + h) - 2.0 * g0 + g(x1, x2 - h)) / (h * h)
    h12 = (g(x1 + h, x2 + h) - g(x1 + h, x2 - h)
           - g(x1 - h, x2 + h) + g(x1 - h, x2 - h)) / (4.0 * h * h)
    return h11, h22, h12


def ternary_stability_margins(model, grid_n=21):
    """Per grid point the two positive-definiteness margins of the Hessian:
    the leading principal minor and the determinant."""
    pts = ternary_simplex_grid(grid_n)
    minors = np.empty(len(pts))
    dets = np.empty(len(pts))
    for k, (x1, x2, _) in enumerate(pts):
        h11, h22, h12 = ternary_hessian(model, x1, x2)
        minors[k] = h11
        dets[k] = h11 * h22 - h12 * h12
    return pts, minors, dets


def ternary_stability(model, grid_n=21):
    """Liquid-phase stability of a ternary Margules mixture.

    Positive definiteness of the Hessian is required (determinant alone is
    also satisfied by negative-definite points).
    """
    pts, minors, dets = ternary_stability_margins(model, grid_n)
    margins = np.minimum(minors, dets)
    bad = margins < STABILITY_EPS
    return StabilityReport(
        stable=not bool(bad.any()),
        min_margin=float(margins.min()),
        violations=tuple(pts[k] for k in np.nonzero(bad)[0]))


def detect_azeotrope(pkg, i=0, j=1):
    """Existence and type of a binary azeotrope from the signs of the
    bubble-curve slopes at the composition limits."""
    s0, s1 = vle.dT_dx_at_endpoints(pkg, i, j)
    if s0 * s1 < 0.0:
        kind = "maximum-boiling" if (s0 > 0.0 and s1 < 0.0) else "minimum-boiling"
        return AzeotropeReport(exists=True, kind=kind, endpoint_slopes=(s0, s1))
    return AzeotropeReport(exists=False, kind="none", endpoint_slopes=(s0, s1))


def bubble_curve(pkg, i=0, j=1, n_points=101):
    """Isobaric bubble curve of the (i, j) binary: arrays (x_i, T, y_i)."""
    sub = pkg.binary_subsystem(i, j) if pkg.n_components != 2 or (i, j) != (0, 1) else pkg
    xs = np.linspace(0.0, 1.0, n_points)
    ts = np.empty(n_points)
    ys = np.empty(n_points)
    for k, x1 in enumerate(xs):
        pt = vle.bubble_point(sub, (x1, 1.0 - x1))
        ts[k] = pt.T
        ys[k] = pt.y[0]
    return xs, ts, ys


def azeotrope_grid_scan(pkg, i=0, j=1, n_points=101):
    """Grid-based azeotrope detection: locate an interior extremum of the
    bubble-temperature curve. Returns (exists, kind, t_extremum, x_at).

    Used to cross-check the endpoint-slope detector, which can fire on
    unphysical VLE shapes without a true interior extremum.
    """
    xs, ts, _ = bubble_curve(pkg, i, j, n_points)
    k = int(np.argmax(ts))
    if 0 < k < n_points - 1 and ts[k] > max(ts[0], ts[-1]):
        return True, "maximum-boiling", float(ts[k]), float(xs[k])
    k = int(np.argmin(ts))
    if 0 < k < n_points - 1 and ts[k] < min(ts[0], ts[-1]):
        return True, "minimum-boiling", float(ts[k]), float(xs[k])
    return False, "none", float("nan"), float("nan")


def approx_critical_temperature(tsat):
    """Critical-temperature heuristic T_crit ~ 1.5 * tsat."""
    return 1.5 * tsat


def subcritical_check(features, t_max_process):
    """The system stays subcritical if every temperature encountered (the
    hottest stage and every boiling point) is below every component's
    approximate critical temperature."""
    t_crit = tuple(approx_critical_temperature(t) for t in features.tsat)
    hottest = max(float(t_max_process), max(features.tsat))
    margins = tuple(tc - hottest for tc in t_crit)
    return SubcriticalReport(
        passes=all(m >= 0.0 for m in margins),
        t_crit=t_crit,
        margins=margins)
