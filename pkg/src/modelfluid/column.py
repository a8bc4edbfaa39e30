"""Stage-to-stage distillation column simulation.

Temperature-independent molar enthalpies (liquid reference enthalpy zero,
vapor enthalpy = vaporization enthalpy) remove the per-stage temperature
iteration of rigorous methods: the column becomes an upward sweep from the
reboiler and a downward sweep from the condenser, matched at the feed
stage by root-finding on the bottoms composition.

Stage numbering: 0 is the reboiler, the feed stage is n_below + 1, the top
stage is n_total = n_below + 1 + n_above, the (total) condenser sits above
it. Duty closure: the trial bottoms fixes the distillate through the
column balance, V_top = (1 + RR) * L_D, the condenser energy balance gives
Q_con and the adiabatic whole-column balance Q_reb = -Q_con.

A "rigorous-enthalpy" variant re-evaluates the vaporization enthalpies at
the local stage temperature through a Watson-type correlation; it exists
for the simulation-error studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from . import kernels, vle
from .errors import (
    NegativeFlowError,
    NonConvergenceError,
    VleFailureError,
)
from .thermo import WatsonEnthalpy, check_composition

SPEC_BOUNDS = {
    "n_stages": (3, 96),
    "reflux_ratio": (0.1, 40.0),
    "split": (0.001, 0.999),
}

_XD_FLOOR = 1e-10
_XD_PENALTY = 1.0
_ROOT_TOL = 1e-9
_ROOT_MAX_ITER = 200
_FD_STEP = 1e-7


@dataclass(frozen=True)
class Stream:
    """A liquid stream: molar flow, composition and temperature."""

    flow: float      # mol/s
    x: np.ndarray    # mol/mol
    T: float         # K

    def __post_init__(self):
        if self.flow < 0.0:
            raise ValueError(f"stream flow must be non-negative, got {self.flow}")
        object.__setattr__(self, "x", check_composition(self.x))

    @classmethod
    def at_bubble_point(cls, pkg, flow, x):
        """Stream at its bubble temperature (streams outside columns)."""
        pt = vle.bubble_point(pkg, x)
        return cls(flow=flow, x=pt.x, T=pt.T)


@dataclass(frozen=True)
class ColumnSpec:
    """Geometry and operating point of one column."""

    n_below: int        # stages below the feed
    n_above: int        # stages above the feed
    reflux_ratio: float
    split: float        # bottoms fraction of the feed moles
    feed: Stream
    pressure: float     # Pa

    def __post_init__(self):
        lo, hi = SPEC_BOUNDS["n_stages"]
        for name, v in (("n_below", self.n_below), ("n_above", self.n_above)):
            if not (lo <= v <= hi) or int(v) != v:
                raise ValueError(f"{name}={v} outside integer range [{lo}, {hi}]")
        lo, hi = SPEC_BOUNDS["reflux_ratio"]
        if not (lo <= self.reflux_ratio <= hi):
            raise ValueError(f"reflux_ratio={self.reflux_ratio} outside [{lo}, {hi}]")
        lo, hi = SPEC_BOUNDS["split"]
        if not (lo <= self.split <= hi):
            raise ValueError(f"split={self.split} outside [{lo}, {hi}]")
        if self.pressure <= 0.0:
            raise ValueError("pressure must be positive")

    @property
    def n_total(self):
        return self.n_below + 1 + self.n_above

    @property
    def feed_stage(self):
        return self.n_below + 1


@dataclass(frozen=True)
class ColumnResult:
    """Converged column: products, duties and per-stage profiles."""

    bottoms: Stream
    distillate: Stream
    q_reb: float           # W
    q_con: float           # W
    boilup_ratio: float    # V(0) / L_bottoms
    profiles: dict         # arrays L, V, T (n_total+1,), x, y (n_total+1, nc)
    feed_residual: np.ndarray
    t_max: float           # hottest stage temperature, K
    iterations: int

    def mass_balance_error(self, feed):
        """Largest per-component feed vs products mismatch, relative to the
        feed flow."""
        fin = feed.flow * feed.x
        out = (self.bottoms.flow * self.bottoms.x
               + self.distillate.flow * self.distillate.x)
        return float(np.max(np.abs(fin - out)) / feed.flow)


def _enthalpy_arrays(pkg, correlation):
    dh = np.asarray(pkg.enthalpy.dhvap)
    n = len(dh)
    if correlation is None:
        return (dh, np.zeros(n), np.ones(n), 0.0, kernels.ENTH_CONSTANT)
    if not isinstance(correlation, WatsonEnthalpy):
        raise TypeError("enthalpy correlation must be a WatsonEnthalpy")
    if correlation.n_components != n:
        raise ValueError("enthalpy correlation component count mismatch")
    return (np.asarray(correlation.dh_ref),
            np.asarray(correlation.t_ref),
            np.asarray(correlation.t_crit),
            correlation.exponent,
            kernels.ENTH_WATSON)


def column_residual(spec, pkg, x_bottom, x_dist, correlation=None,
                    want_profiles=False):
    """One evaluation of the feed-match residual with trial bottoms and
    distillate compositions. Returns
    (status, f, q_reb, q_con, t_max, profiles)."""
    th1, th2, a, c, p, _ = pkg.packed()
    if abs(p - spec.pressure) > 1e-9 * p:
        raise ValueError("column and package pressures differ")
    dh_ref, t_ref, t_crit, w_exp, mode = _enthalpy_arrays(pkg, correlation)
    return kernels.column_sweeps(
        th1, th2, a, c, p, dh_ref, t_ref, t_crit, w_exp, mode,
        spec.n_below, spec.n_above, spec.split, spec.reflux_ratio,
        spec.feed.flow, spec.feed.x, np.asarray(x_bottom, dtype=float),
        np.asarray(x_dist, dtype=float), want_profiles)


def implied_distillate(spec, x_bottom):
    """Distillate composition from the overall column balance at a trial
    bottoms composition, clipped back to the simplex with the clip amount
    reported as a smooth penalty."""
    lb = spec.split * spec.feed.flow
    ld = spec.feed.flow - lb
    raw = (spec.feed.flow * spec.feed.x - lb * np.asarray(x_bottom)) / ld
    clipped = np.maximum(raw, _XD_FLOOR)
    xd = clipped / clipped.sum()
    penalty = xd - raw
    return xd, penalty


def _softmax_comp(z):
    full = np.append(z, 0.0)
    full -= full.max()
    e = np.exp(full)
    return e / e.sum()


def _status_error(status):
    return {
        kernels.ERR_BUBBLE: VleFailureError("bubble point failed on a stage"),
        kernels.ERR_DEW: NonConvergenceError("dew point failed on a stage"),
        kernels.ERR_FLOW: NegativeFlowError("internal flow went negative"),
        kernels.ERR_ENTHALPY: NegativeFlowError("vapor enthalpy became non-positive"),
    }[status]


def simulate_column(spec, pkg, x_bottom_guess, correlation=None):
    """Solve the column: find the bottoms composition whose upward and
    downward sweeps meet at the feed stage.

    Damped Newton on the logit-transformed free mole fractions
    (finite-difference Jacobian), falling back to a derivative-free hybrid
    solve; tolerance 1e-9 on the feed-match infinity norm.
    """
    if not pkg.is_reduced_form:
        raise ValueError("the tailored column simulation needs a Margules + "
                         "simplified-Antoine package")
    n = pkg.n_components
    x0 = check_composition(x_bottom_guess, n)
    if np.any(x0 <= 0.0):
        raise ValueError("bottoms guess must be strictly interior")
    z = np.log(x0[:-1] / x0[-1])
    evals = {"count": 0}

    def residual(zv):
        evals["count"] += 1
        xb = _softmax_comp(zv)
        xd, pen = implied_distillate(spec, xb)
        status, f, *_ = column_residual(spec, pkg, xb, xd, correlation)
        if status != kernels.OK:
            return None
        return f[:-1] + _XD_PENALTY * pen[:-1]

    f = residual(z)
    if f is None:
        xb = _softmax_comp(z)
        xd, _ = implied_distillate(spec, xb)
        status, *_ = column_residual(spec, pkg, xb, xd, correlation)
        raise _status_error(status)

    m = n - 1
    converged = False
    for it in range(_ROOT_MAX_ITER):
        if np.max(np.abs(f)) <= _ROOT_TOL:
            converged = True
            break
        jac = np.empty((m, m))
        singular = False
        for k in range(m):
            h = _FD_STEP * max(1.0, abs(z[k]))
            zp = z.copy()
            zp[k] += h
            fp = residual(zp)
            if fp is None:
                singular = True
                break
            jac[:, k] = (fp - f) / h
        if singular:
            break
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        base = np.max(np.abs(f))
        improved = False
        while lam >= 1.0 / 64.0:
            f_new = residual(z + lam * step)
            if f_new is not None and np.max(np.abs(f_new)) < base:
                z = z + lam * step
                f = f_new
                improved = True
                break
            lam *= 0.5
        if not improved:
            break

    if not converged:
        def vec_residual(zv):
            r = residual(zv)
            if r is None:
                return np.full(m, 1e3)
            return r

        sol = sciopt.root(vec_residual, z, method="hybr",
                          options={"xtol": 1e-12, "maxfev": 400 * (m + 1)})
        z = sol.x
        f = vec_residual(z)
        if np.max(np.abs(f)) > _ROOT_TOL:
            raise NonConvergenceError(
                f"column root finding stalled at |f|={np.max(np.abs(f)):.3e} "
                f"(n_below={spec.n_below}, n_above={spec.n_above}, "
                f"RR={spec.reflux_ratio}, s={spec.split})")

    xb = _softmax_comp(z)
    xd, _ = implied_distillate(spec, xb)
    status, f_full, q_reb, q_con, t_max, profiles = column_residual(
        spec, pkg, xb, xd, correlation, want_profiles=True)
    if status != kernels.OK:
        raise _status_error(status)
    lb = spec.split * spec.feed.flow
    ld = spec.feed.flow - lb
    bottoms = Stream.at_bubble_point(pkg, lb, xb)
    distillate = Stream.at_bubble_point(pkg, ld, xd)
    return ColumnResult(
        bottoms=bottoms,
        distillate=distillate,
        q_reb=q_reb,
        q_con=q_con,
        boilup_ratio=float(profiles["V"][0] / lb),
        profiles=profiles,
        feed_residual=f_full,
        t_max=t_max,
        iterations=evals["count"])


def simulate_column_rigorous_enthalpy(spec, pkg, x_bottom_guess, correlation):
    """Same column, but vaporization enthalpies evaluated at the local
    stage temperature through the given Watson-type correlation."""
    if correlation is None:
        raise ValueError("the rigorous-enthalpy variant needs a correlation")
    return simulate_column(spec, pkg, x_bottom_guess, correlation=correlation)


# ---------------------------------------------------------------------------
# Reference sweep implementations
# ---------------------------------------------------------------------------
# Readable stage-by-stage versions of the two sweeps, used directly in tests
# (hand-computable single steps) and as a cross-check of the fused kernel.

def upward_sweep(spec, pkg, x_bottom, q_reb, correlation=None):
    """Profiles from the reboiler up to the feed stage at a given reboiler
    duty. Returns dict with per-stage lists L, V, T, x, y for stages
    0..feed_stage and the feed-stage liquid composition."""
    if q_reb <= 0.0:
        raise ValueError("q_reb must be positive")
    n = pkg.n_components
    xb = check_composition(x_bottom, n)
    lb = spec.split * spec.feed.flow
    dh_of = (lambda T: np.asarray(pkg.enthalpy.dhvap)) if correlation is None \
        else correlation.dhvap_at
    t0 = vle.bubble_point(pkg, xb).T
    L = [lb]
    V = []
    T = [t0]
    xs = [xb.copy()]
    ys = [xb.copy()]
    x_cur, y_cur, t_cur = xb, xb, t0
    for i in range(spec.n_below + 1):
        hv = float(np.dot(y_cur, dh_of(t_cur)))
        if hv <= 0.0:
            raise NegativeFlowError("vapor enthalpy became non-positive")
        v = q_reb / hv
        l_next = v + lb
        x_next = (lb * xb + v * y_cur) / l_next
        V.append(v)
        L.append(l_next)
        x_cur = x_next
        if i < spec.n_below:
            pt = vle.bubble_point(pkg, x_cur)
            y_cur, t_cur = pt.y, pt.T
            T.append(t_cur)
            xs.append(x_cur.copy())
            ys.append(y_cur.copy())
    pt = vle.bubble_point(pkg, x_cur)
    T.append(pt.T)
    xs.append(x_cur.copy())
    ys.append(pt.y.copy())
    V.append(q_reb / float(np.dot(pt.y, dh_of(pt.T))))
    return {"L": L, "V": V, "T": T, "x": xs, "y": ys,
            "x_feed_stage": x_cur, "y_feed_eq": pt.y, "t_feed": pt.T}


def downward_sweep(spec, pkg, x_distillate, q_con, correlation=None):
    """Profiles from the condenser down to the feed stage at a given (
    negative) condenser duty. Stage lists run top stage -> feed stage + 1;
    the returned vapor is the one entering the rectifying section from the
    feed stage."""
    if q_con >= 0.0:
        raise ValueError("q_con must be negative")
    n = pkg.n_components
    xd = check_composition(x_distillate, n)
    ld = (1.0 - spec.split) * spec.feed.flow
    dh_of = (lambda T: np.asarray(pkg.enthalpy.dhvap)) if correlation is None \
        else correlation.dhvap_at
    y_cur = xd.copy()
    L = []
    T = []
    xs = []
    ys = []
    for i in range(spec.n_total, spec.feed_stage, -1):
        pt = vle.dew_point(pkg, y_cur)
        x_i, t_i = pt.x, pt.T
        if correlation is None:
            dh = dh_of(0.0)
            l_i = (-q_con - ld * float(np.dot(xd, dh))) / float(np.dot(x_i, dh))
        else:
            t_eval = t_i
            for _ in range(30):
                dh = dh_of(t_eval)
                l_i = (-q_con - ld * float(np.dot(xd, dh))) / float(np.dot(x_i, dh))
                if l_i <= 0.0:
                    raise NegativeFlowError("rectifying liquid flow went negative")
                v_b = ld + l_i
                y_b = (ld * xd + l_i * x_i) / v_b
                t_new = vle.dew_point(pkg, y_b).T
                if abs(t_new - t_eval) <= 1e-10:
                    break
                t_eval = t_new
        if l_i <= 0.0:
            raise NegativeFlowError("rectifying liquid flow went negative")
        v_below = ld + l_i
        y_below = (ld * xd + l_i * x_i) / v_below
        L.append(l_i)
        T.append(t_i)
        xs.append(x_i.copy())
        ys.append(y_cur.copy())
        y_cur = y_below
    return {"L": L, "T": T, "x": xs, "y": ys, "y_feed_down": y_cur}
