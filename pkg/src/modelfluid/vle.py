"""Vapor-liquid equilibrium on extended Raoult's law.

Bubble and dew points, infinite-dilution VLE slopes and the
implicit-function-theorem sensitivities of the isobaric bubble curve at the
composition limits. Packages combining a Margules activity model with
simplified-Antoine vapor pressures take the fast kernel path; everything
else (NRTL, extended Antoine) is solved generically with a bisection
bracket and Newton polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NoBracketError, NonConvergenceError, SingularJacobianError, VleFailureError
from .thermo import (
    T_BRACKET,
    EnthalpyModel,
    ExtendedAntoine,
    MargulesBinary,
    MargulesTernary,
    SimplifiedAntoine,
    check_composition,
)

_GAMMA_DT_STEP = 1e-5  # K, finite-difference step for d(gamma)/dT (NRTL)


@dataclass(frozen=True)
class FluidPackage:
    """Everything needed to evaluate the VLE of one mixture at one pressure."""

    activity: object                 # Margules or NRTL model
    vapor_pressure: tuple            # one model per component
    enthalpy: EnthalpyModel
    pressure: float                  # Pa

    def __post_init__(self):
        n = self.activity.n_components
        if len(self.vapor_pressure) != n:
            raise ValueError(
                f"{len(self.vapor_pressure)} vapor-pressure models for {n} components")
        if self.enthalpy.n_components != n:
            raise ValueError("enthalpy model component count mismatch")
        if not (self.pressure > 0.0 and math.isfinite(self.pressure)):
            raise ValueError(f"pressure must be positive, got {self.pressure}")
        object.__setattr__(self, "vapor_pressure", tuple(self.vapor_pressure))

    @property
    def n_components(self):
        return self.activity.n_components

    @property
    def is_reduced_form(self):
        """True when the package runs on the fast Margules + two-parameter
        Antoine kernel path."""
        return (isinstance(self.activity, (MargulesBinary, MargulesTernary))
                and all(isinstance(vp, SimplifiedAntoine) for vp in self.vapor_pressure))

    def packed(self):
        """(theta1, theta2, a, c, p, dhvap) arrays for the kernel calls."""
        if not self.is_reduced_form:
            raise ValueError("package is not kernel-eligible")
        th1 = np.array([vp.theta1 for vp in self.vapor_pressure])
        th2 = np.array([vp.theta2 for vp in self.vapor_pressure])
        a = self.activity.a_matrix
        c = getattr(self.activity, "c", 0.0)
        dh = np.asarray(self.enthalpy.dhvap)
        return th1, th2, a, c, self.pressure, dh

    def ln_gamma(self, x, T):
        if self.activity.temperature_dependent:
            return self.activity.ln_gamma(x, T)
        return self.activity.ln_gamma(x)

    def psat(self, i, T):
        return self.vapor_pressure[i].psat(T)

    def tsat_pure(self, i):
        """Boiling temperature of pure component i at the package pressure."""
        return self.vapor_pressure[i].tsat(self.pressure)

    def binary_subsystem(self, i, j):
        """The binary (i, j) restriction of this package, components
        reindexed to (0, 1)."""
        from .thermo import NrtlBinary, NrtlModel

        n = self.n_components
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"invalid binary pair ({i}, {j})")
        if n == 2 and (i, j) == (0, 1):
            return self
        act = self.activity
        if isinstance(act, MargulesBinary):
            sub = MargulesBinary(a_12=act.ln_gamma_inf(i, j), a_21=act.ln_gamma_inf(j, i))
        elif isinstance(act, MargulesTernary):
            sub = act.binary_pair(i, j)
        elif isinstance(act, NrtlModel):
            lo, hi = min(i, j), max(i, j)
            b = next((b for (pi, pj, b) in act.pairs if (pi, pj) == (lo, hi)),
                     NrtlBinary())
            if (i, j) != (lo, hi):
                b = NrtlBinary(a_12=b.a_21, a_21=b.a_12,
                               b_12=b.b_21, b_21=b.b_12, alpha=b.alpha)
            sub = NrtlModel.from_pairs(2, {(0, 1): b})
        else:
            raise TypeError(f"unsupported activity model {type(act).__name__}")
        return FluidPackage(
            activity=sub,
            vapor_pressure=(self.vapor_pressure[i], self.vapor_pressure[j]),
            enthalpy=EnthalpyModel(dhvap=(self.enthalpy.dhvap[i], self.enthalpy.dhvap[j])),
            pressure=self.pressure)


@dataclass(frozen=True)
class VlePoint:
    """One converged equilibrium point."""

    x: np.ndarray  # liquid composition
    y: np.ndarray  # vapor composition
    T: float       # K
    p: float       # Pa

    def raoult_residual(self, pkg):
        """|sum_i x_i gamma_i psat_i(T) - p| / p for this point."""
        lng = pkg.ln_gamma(self.x, self.T)
        s = sum(self.x[i] * math.exp(lng[i]) * pkg.psat(i, self.T)
                for i in range(len(self.x)))
        return abs(s - self.p) / self.p


def _t_bracket(pkg):
    lo, hi = T_BRACKET
    for vp in pkg.vapor_pressure:
        if isinstance(vp, ExtendedAntoine):
            lo = max(lo, vp.t_min)
            hi = min(hi, vp.t_max)
    if lo >= hi:
        raise NoBracketError("empty temperature bracket from correlation ranges")
    return lo, hi


def bubble_point(pkg, x):
    """Temperature and vapor composition where liquid x starts to boil.

    Solves sum_i x_i gamma_i(x, T) psat_i(T) = p for T in [150, 1000] K
    (intersected with correlation ranges), then y_i from Raoult's law.
    """
    x = check_composition(x, pkg.n_components)
    if pkg.is_reduced_form:
        th1, th2, a, c, p, _ = pkg.packed()
        status, T, y = kernels.bubble_point(th1, th2, a, c, p, x)
        if status != kernels.OK:
            raise VleFailureError(f"bubble point failed for x={x}")
        if not (T_BRACKET[0] <= T <= T_BRACKET[1]):
            raise NoBracketError(
                f"bubble temperature {T:.2f} K outside [{T_BRACKET[0]}, {T_BRACKET[1]}] K")
        return VlePoint(x=x, y=y, T=T, p=pkg.pressure)

    lo, hi = _t_bracket(pkg)
    p = pkg.pressure

    def residual(T):
        lng = pkg.ln_gamma(x, T)
        return sum(float(x[i]) * math.exp(lng[i]) * pkg.psat(i, T)
                   for i in range(pkg.n_components)) - p

    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo > 0.0 or f_hi < 0.0:
        raise NoBracketError(
            f"no bubble temperature in [{lo:.1f}, {hi:.1f}] K "
            f"(residuals {f_lo:.3g}, {f_hi:.3g})")
    a_, b_ = lo, hi
    while b_ - a_ > 1e-3:
        mid = 0.5 * (a_ + b_)
        if residual(mid) <= 0.0:
            a_ = mid
        else:
            b_ = mid
    T = 0.5 * (a_ + b_)
    for _ in range(100):
        lng = pkg.ln_gamma(x, T)
        gam = np.exp(lng)
        r = sum(float(x[i]) * gam[i] * pkg.psat(i, T)
                for i in range(pkg.n_components)) - p
        drdT = sum(float(x[i]) * gam[i] * pkg.vapor_pressure[i].dpsat_dT(T)
                   for i in range(pkg.n_components))
        if pkg.activity.temperature_dependent:
            h = _GAMMA_DT_STEP
            lng2 = pkg.ln_gamma(x, T + h)
            dgam = (np.exp(lng2) - gam) / h
            drdT += sum(float(x[i]) * dgam[i] * pkg.psat(i, T)
                        for i in range(pkg.n_components))
        T_new = T - r / drdT
        T_new = min(max(T_new, lo), hi)
        if abs(T_new - T) <= 1e-10 * T_new:
            T = T_new
            break
        T = T_new
    else:
        raise NonConvergenceError("bubble-point Newton did not converge")
    lng = pkg.ln_gamma(x, T)
    y = np.array([float(x[i]) * math.exp(lng[i]) * pkg.psat(i, T) / p
                  for i in range(pkg.n_components)])
    y /= y.sum()
    return VlePoint(x=x, y=y, T=T, p=p)


def dew_point(pkg, y):
    """Liquid composition and temperature in equilibrium with vapor y.

    Successive substitution on x (damping 0.5, max 200 iterations, 1e-10
    inf-norm tolerance) with an inner temperature solve per iterate.
    """
    y = check_composition(y, pkg.n_components)
    if pkg.is_reduced_form:
        th1, th2, a, c, p, _ = pkg.packed()
        status, T, x = kernels.dew_point(th1, th2, a, c, p, y)
        if status != kernels.OK:
            raise NonConvergenceError(f"dew point did not converge for y={y}")
        return VlePoint(x=x, y=y, T=T, p=pkg.pressure)

    lo, hi = _t_bracket(pkg)
    p = pkg.pressure
    n = pkg.n_components
    x = np.array(y, dtype=float)
    T = 0.0

    def solve_t(x_cur, t_guess):
        def s(T):
            gam = np.exp(pkg.ln_gamma(x_cur, T))
            return sum(float(y[i]) * p / (gam[i] * pkg.psat(i, T))
                       for i in range(n)) - 1.0

        s_lo, s_hi = s(lo), s(hi)
        if s_lo < 0.0 or s_hi > 0.0:
            raise NoBracketError("no dew temperature in bracket")
        a_, b_ = lo, hi
        while b_ - a_ > 1e-6:
            mid = 0.5 * (a_ + b_)
            if s(mid) >= 0.0:
                a_ = mid
            else:
                b_ = mid
        return 0.5 * (a_ + b_)

    for it in range(200):
        T = solve_t(x, T)
        gam = np.exp(pkg.ln_gamma(x, T))
        x_new = np.array([float(y[i]) * p / (gam[i] * pkg.psat(i, T))
                          for i in range(n)])
        x_new /= x_new.sum()
        step = 0.5 * (x_new - x)
        x = x + step
        if np.max(np.abs(step)) <= 1e-10:
            break
    else:
        raise NonConvergenceError("dew-point substitution did not converge")
    T = solve_t(x, T)
    return VlePoint(x=x, y=y, T=T, p=p)


def infinite_dilution_slope(pkg, i, j):
    """d(y_i)/d(x_i) of the VLE at infinite dilution of i in j.

    Evaluated analytically at the exact limit:
    gamma_i_inf * psat_i(tsat_j) / p.
    """
    t_j = pkg.tsat_pure(j)
    if pkg.activity.temperature_dependent:
        lg = pkg.activity.ln_gamma_inf(i, j, t_j)
    else:
        lg = pkg.activity.ln_gamma_inf(i, j)
    return math.exp(lg) * pkg.psat(i, t_j) / pkg.pressure


def dT_dx_at_endpoints(pkg, i, j):
    """Slopes of the isobaric bubble curve T(x_i) at x_i -> 0 and x_i -> 1.

    Implicit function theorem on F = [y_i p - x_i gamma_i psat_i,
    (1-y_i) p - (1-x_i) gamma_j psat_j] with dependent (T, y_i): the
    dT/dx_i entry of -[dF/d(T,y)]^-1 [dF/d(p,x)]. At the composition
    limits the pure-component gamma is identically one for all T, so its
    temperature derivative vanishes exactly.
    """
    n = pkg.n_components
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValueError(f"invalid binary pair ({i}, {j})")
    p = pkg.pressure

    def slope_at_zero(ii, jj):
        # x_ii -> 0: bubble point of pure jj
        t0 = pkg.tsat_pure(jj)
        if pkg.activity.temperature_dependent:
            g_inf = math.exp(pkg.activity.ln_gamma_inf(ii, jj, t0))
        else:
            g_inf = math.exp(pkg.activity.ln_gamma_inf(ii, jj))
        p_ii = pkg.psat(ii, t0)
        dp_jj = pkg.vapor_pressure[jj].dpsat_dT(t0)
        # dF/d(T, y_i) at the limit; gamma_jj == 1 with zero T-derivative
        m = np.array([[0.0, p], [-dp_jj, -p]])
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-300:
            raise SingularJacobianError("singular VLE Jacobian at the composition limit")
        rhs = np.array([[0.0, -g_inf * p_ii], [1.0, p]])
        jac = -np.linalg.solve(m, rhs)
        return jac[0, 1]

    s0 = slope_at_zero(i, j)
    s1 = -slope_at_zero(j, i)  # dT/dx_i = -dT/dx_j at the x_i -> 1 end
    return s0, s1
