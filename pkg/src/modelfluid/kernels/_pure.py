"""Pure-Python numerical kernels (fallback backend).

Hot-path routines for the reduced fluid representation: Margules activity
coefficients, the two-parameter Antoine equation, bubble/dew points and the
stage-to-stage column sweeps with their duty closure. The compiled backend
in ``_core.pyx`` mirrors this module function for function; keep the two in
sync.

All compositions are mole-fraction vectors summing to one, temperatures are
Kelvin, pressures Pascal, enthalpies J/mol. Vector arguments arrive as
float64 numpy arrays and results are returned as numpy arrays; the inner
loops run on plain Python floats because the component count is 2 or 3.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "pure"

# Status codes shared with the compiled backend.
OK = 0
ERR_BUBBLE = 1
ERR_DEW = 2
ERR_FLOW = 3
ERR_ENTHALPY = 4

# Enthalpy modes for the column sweeps.
ENTH_CONSTANT = 0
ENTH_WATSON = 1

_DH_FLOOR = 1.0  # J/mol, guards Watson correlations probed above t_crit

_MAX_NEWTON = 200
_MAX_DEW = 200
_DEW_TOL = 1e-10

# exponent clamp: keeps probes at absurd states finite so they surface as
# status codes instead of overflow
_EXP_CAP = 700.0


def _exp(e):
    if e > _EXP_CAP:
        e = _EXP_CAP
    elif e < -_EXP_CAP:
        e = -_EXP_CAP
    return math.exp(e)


def _margules_lngamma(a, c, x, n):
    """ln(gamma) for the two-parameter-per-binary Margules model.

    ``a[i][j]`` is ln(gamma_i) at infinite dilution in j; ``c`` is the
    ternary constant. Derived from the excess-Gibbs form
    g = sum_{i<j} x_i x_j (a_ji x_i + a_ij x_j) + c x1 x2 x3 via
    ln(gamma_k) = g + dg/dx_k - sum_m x_m dg/dx_m.
    """
    g = 0.0
    dg = [0.0] * n
    for i in range(n):
        for j in range(i + 1, n):
            aji = a[j][i]
            aij = a[i][j]
            g += x[i] * x[j] * (aji * x[i] + aij * x[j])
            dg[i] += x[j] * (2.0 * aji * x[i] + aij * x[j])
            dg[j] += x[i] * (aji * x[i] + 2.0 * aij * x[j])
    if n == 3 and c != 0.0:
        g += c * x[0] * x[1] * x[2]
        dg[0] += c * x[1] * x[2]
        dg[1] += c * x[0] * x[2]
        dg[2] += c * x[0] * x[1]
    xdg = 0.0
    for m in range(n):
        xdg += x[m] * dg[m]
    return [g + dg[k] - xdg for k in range(n)]


def ln_gamma_margules(a, c, x):
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    lng = _margules_lngamma(a.tolist(), float(c), x.tolist(), n)
    return np.asarray(lng)


def _bubble(th1, th2, gam, p, x, n):
    """Solve sum_i x_i gamma_i exp(th1_i + th2_i/T) = p for T.

    Works in u = 1/T where the residual is decreasing and convex
    (th2 < 0), so Newton converges globally from any positive start.
    Returns (status, T, y list).
    """
    k = [0.0] * n
    u0 = 0.0
    wsum = 0.0
    for i in range(n):
        k[i] = x[i] * gam[i] * _exp(th1[i])
        if x[i] > 0.0:
            # x-weighted mean of 1/tsat_i as the starting point
            u0 += x[i] * (math.log(p) - th1[i]) / th2[i]
            wsum += x[i]
    if wsum <= 0.0:
        return ERR_BUBBLE, 0.0, [0.0] * n
    u = u0 / wsum
    if u <= 0.0:
        u = 1.0 / 400.0
    h = p
    converged = False
    for _ in range(_MAX_NEWTON):
        h = -p
        hp = 0.0
        for i in range(n):
            t = k[i] * _exp(th2[i] * u)
            h += t
            hp += t * th2[i]
        if hp == 0.0:
            return ERR_BUBBLE, 0.0, [0.0] * n
        u_new = u - h / hp
        if u_new <= 0.0:
            u_new = 0.5 * u
        if abs(u_new - u) <= 1e-15 * u_new:
            u = u_new
            converged = True
            break
        u = u_new
    if not converged and abs(h) > 1e-9 * p:
        return ERR_BUBBLE, 0.0, [0.0] * n
    T = 1.0 / u
    y = [0.0] * n
    ysum = 0.0
    for i in range(n):
        y[i] = x[i] * gam[i] * _exp(th1[i] + th2[i] * u) / p
        ysum += y[i]
    for i in range(n):
        y[i] /= ysum
    return OK, T, y


def bubble_point(th1, th2, a, c, p, x):
    th1 = np.asarray(th1, dtype=float).tolist()
    th2 = np.asarray(th2, dtype=float).tolist()
    a = np.asarray(a, dtype=float).tolist()
    xl = np.asarray(x, dtype=float).tolist()
    n = len(xl)
    gam = [_exp(v) for v in _margules_lngamma(a, float(c), xl, n)]
    status, T, y = _bubble(th1, th2, gam, float(p), xl, n)
    return status, T, np.asarray(y)


def _dew_t(th1, th2, gam, p, y, n, u_start):
    """Solve sum_i y_i p / (gamma_i psat_i(T)) = 1 for T (in u = 1/T)."""
    m = [0.0] * n
    for i in range(n):
        m[i] = y[i] * p / gam[i]
    u = u_start
    for _ in range(_MAX_NEWTON):
        s = -1.0
        sp = 0.0
        for i in range(n):
            t = m[i] * _exp(-th1[i] - th2[i] * u)
            s += t
            sp -= t * th2[i]
        if sp == 0.0:
            return ERR_DEW, 0.0
        u_new = u - s / sp
        if u_new <= 0.0:
            u_new = 0.5 * u
        if abs(u_new - u) <= 1e-15 * u_new:
            return OK, 1.0 / u_new
        u = u_new
    return ERR_DEW, 0.0


def _dew(th1, th2, a, c, p, y, n):
    """Liquid in equilibrium with vapor y: successive substitution on x.

    Damped 0.5 until the applied step drops below 1e-10 inf-norm, then a few
    undamped polish sweeps so the returned point is self-consistent to
    machine accuracy.
    """
    u = 0.0
    for i in range(n):
        u += y[i] * (math.log(p) - th1[i]) / th2[i]
    if u <= 0.0:
        u = 1.0 / 400.0
    x = list(y)
    T = 0.0
    converged = False
    for _ in range(_MAX_DEW):
        gam = [_exp(v) for v in _margules_lngamma(a, c, x, n)]
        status, T = _dew_t(th1, th2, gam, p, y, n, u)
        if status != OK:
            return ERR_DEW, 0.0, x
        u = 1.0 / T
        xsum = 0.0
        xnew = [0.0] * n
        for i in range(n):
            denom = gam[i] * _exp(th1[i] + th2[i] * u)
            if denom <= 0.0:
                return ERR_DEW, 0.0, x
            xnew[i] = y[i] * p / denom
            xsum += xnew[i]
        step = 0.0
        for i in range(n):
            xnew[i] /= xsum
            d = 0.5 * (xnew[i] - x[i])
            x[i] += d
            if abs(d) > step:
                step = abs(d)
        if step <= _DEW_TOL:
            converged = True
            break
    if not converged:
        return ERR_DEW, 0.0, x
    for _ in range(5):
        gam = [_exp(v) for v in _margules_lngamma(a, c, x, n)]
        status, T = _dew_t(th1, th2, gam, p, y, n, u)
        if status != OK:
            return ERR_DEW, 0.0, x
        u = 1.0 / T
        xsum = 0.0
        xnew = [0.0] * n
        for i in range(n):
            denom = gam[i] * _exp(th1[i] + th2[i] * u)
            if denom <= 0.0:
                return ERR_DEW, 0.0, x
            xnew[i] = y[i] * p / denom
            xsum += xnew[i]
        step = 0.0
        for i in range(n):
            xnew[i] /= xsum
            if abs(xnew[i] - x[i]) > step:
                step = abs(xnew[i] - x[i])
        x = xnew
        if step <= 1e-14:
            break
    return OK, T, x


def dew_point(th1, th2, a, c, p, y):
    th1 = np.asarray(th1, dtype=float).tolist()
    th2 = np.asarray(th2, dtype=float).tolist()
    a = np.asarray(a, dtype=float).tolist()
    yl = np.asarray(y, dtype=float).tolist()
    n = len(yl)
    status, T, x = _dew(th1, th2, a, float(c), float(p), yl, n)
    return status, T, np.asarray(x)


def _dh_at(dh_ref, t_ref, t_crit, w_exp, mode, T, n):
    """Per-component vaporization enthalpy at temperature T."""
    if mode == ENTH_CONSTANT:
        return list(dh_ref)
    out = [0.0] * n
    for i in range(n):
        num = t_crit[i] - T
        den = t_crit[i] - t_ref[i]
        if num <= 0.0 or den <= 0.0:
            out[i] = _DH_FLOOR
        else:
            v = dh_ref[i] * math.pow(num / den, w_exp)
            out[i] = v if v > _DH_FLOOR else _DH_FLOOR
    return out


def column_sweeps(th1, th2, a, c, p, dh_ref, t_ref, t_crit, w_exp, enth_mode,
                  n_below, n_above, split, reflux, l_feed, x_feed,
                  x_bottom, x_dist, want_profiles):
    """One evaluation of the column feed-match residual.

    Upward sweep reboiler -> feed stage, downward sweep condenser -> feed
    stage, duty closure from the condenser balance with the trial distillate
    composition. Returns (status, f, q_reb, q_con, t_max, profiles): f is
    the feed-stage vapor mismatch (downward minus equilibrium-of-upward),
    profiles is None or a dict of per-stage arrays for stages
    0 .. n_below+1+n_above (0 is the reboiler).
    """
    th1 = np.asarray(th1, dtype=float).tolist()
    th2 = np.asarray(th2, dtype=float).tolist()
    a = np.asarray(a, dtype=float).tolist()
    c = float(c)
    dh_ref = np.asarray(dh_ref, dtype=float).tolist()
    t_ref = np.asarray(t_ref, dtype=float).tolist()
    t_crit = np.asarray(t_crit, dtype=float).tolist()
    xb = np.asarray(x_bottom, dtype=float).tolist()
    xd = np.asarray(x_dist, dtype=float).tolist()
    p = float(p)
    n = len(xb)
    fe = n_below + 1
    nt = n_below + 1 + n_above

    lb = split * l_feed
    ld = (1.0 - split) * l_feed

    fail = (np.full(n, np.nan), 0.0, 0.0, 0.0, None)

    # Condenser-side duty closure. With temperature-dependent enthalpy the
    # top vapor (composition = x_dist) is saturated at its dew temperature.
    if enth_mode == ENTH_CONSTANT:
        dh_top = list(dh_ref)
    else:
        status, t_top, _ = _dew(th1, th2, a, c, p, xd, n)
        if status != OK:
            return (ERR_DEW,) + fail
        dh_top = _dh_at(dh_ref, t_ref, t_crit, w_exp, enth_mode, t_top, n)
    hd = 0.0
    for j in range(n):
        hd += xd[j] * dh_top[j]
    if hd <= 0.0:
        return (ERR_ENTHALPY,) + fail
    q_con = -(1.0 + reflux) * ld * hd
    q_reb = -q_con
    t_max = 0.0

    if want_profiles:
        prof_L = [0.0] * (nt + 1)
        prof_V = [0.0] * (nt + 1)
        prof_T = [0.0] * (nt + 1)
        prof_x = [[0.0] * n for _ in range(nt + 1)]
        prof_y = [[0.0] * n for _ in range(nt + 1)]

    # ----- upward sweep: reboiler (stage 0) to the feed stage -----
    gam = [_exp(v) for v in _margules_lngamma(a, c, xb, n)]
    status, t_cur, _ = _bubble(th1, th2, gam, p, xb, n)
    if status != OK:
        return (ERR_BUBBLE,) + fail
    y_cur = list(xb)
    x_cur = list(xb)
    l_prev = lb
    if t_cur > t_max:
        t_max = t_cur
    for i in range(n_below + 1):
        dh = _dh_at(dh_ref, t_ref, t_crit, w_exp, enth_mode, t_cur, n)
        hv = 0.0
        for j in range(n):
            hv += y_cur[j] * dh[j]
        if hv <= 0.0:
            return (ERR_ENTHALPY,) + fail
        v_flow = q_reb / hv
        if v_flow <= 0.0:
            return (ERR_FLOW,) + fail
        if want_profiles:
            prof_V[i] = v_flow
            prof_L[i] = l_prev
            prof_T[i] = t_cur
            prof_x[i] = list(x_cur)
            prof_y[i] = list(y_cur)
        l_next = v_flow + lb
        x_next = [0.0] * n
        for j in range(n):
            x_next[j] = (lb * xb[j] + v_flow * y_cur[j]) / l_next
        x_cur = x_next
        l_prev = l_next
        if i < n_below:
            gam = [_exp(v) for v in _margules_lngamma(a, c, x_cur, n)]
            status, t_cur, y_cur = _bubble(th1, th2, gam, p, x_cur, n)
            if status != OK:
                return (ERR_BUBBLE,) + fail
            if t_cur > t_max:
                t_max = t_cur
    x_up_fe = x_cur
    gam = [_exp(v) for v in _margules_lngamma(a, c, x_up_fe, n)]
    status, t_fe, y_up_eq = _bubble(th1, th2, gam, p, x_up_fe, n)
    if status != OK:
        return (ERR_BUBBLE,) + fail
    if t_fe > t_max:
        t_max = t_fe

    # ----- downward sweep: condenser to the feed stage -----
    y_cur = list(xd)
    for i in range(nt, fe, -1):
        status, t_i, x_i = _dew(th1, th2, a, c, p, y_cur, n)
        if status != OK:
            return (ERR_DEW,) + fail
        if t_i > t_max:
            t_max = t_i
        if enth_mode == ENTH_CONSTANT:
            hx = 0.0
            hdd = 0.0
            for j in range(n):
                hx += x_i[j] * dh_ref[j]
                hdd += xd[j] * dh_ref[j]
            l_i = (-q_con - ld * hdd) / hx
        else:
            # The balance needs dh at the leaving-vapor temperature, only
            # known after the next dew solve; fixed-point on it.
            t_eval = t_i
            l_i = 0.0
            for _ in range(30):
                dh = _dh_at(dh_ref, t_ref, t_crit, w_exp, enth_mode, t_eval, n)
                hx = 0.0
                hdd = 0.0
                for j in range(n):
                    hx += x_i[j] * dh[j]
                    hdd += xd[j] * dh[j]
                l_i = (-q_con - ld * hdd) / hx
                if l_i <= 0.0:
                    return (ERR_FLOW,) + fail
                v_b = ld + l_i
                y_b = [(ld * xd[j] + l_i * x_i[j]) / v_b for j in range(n)]
                status, t_new, _ = _dew(th1, th2, a, c, p, y_b, n)
                if status != OK:
                    return (ERR_DEW,) + fail
                if abs(t_new - t_eval) <= 1e-10:
                    break
                t_eval = t_new
        if l_i <= 0.0:
            return (ERR_FLOW,) + fail
        v_im1 = ld + l_i
        y_im1 = [0.0] * n
        for j in range(n):
            y_im1[j] = (ld * xd[j] + l_i * x_i[j]) / v_im1
        if want_profiles:
            if i == nt:
                prof_V[i] = (1.0 + reflux) * ld
            prof_L[i] = l_i
            prof_T[i] = t_i
            prof_x[i] = list(x_i)
            prof_y[i] = list(y_cur)
            prof_V[i - 1] = v_im1
        y_cur = y_im1
    y_fe_down = y_cur

    f = np.empty(n)
    for j in range(n):
        f[j] = y_fe_down[j] - y_up_eq[j]

    profiles = None
    if want_profiles:
        prof_L[fe] = l_prev
        prof_T[fe] = t_fe
        prof_x[fe] = list(x_up_fe)
        prof_y[fe] = list(y_up_eq)
        # feed-stage vapor flow from the energy balance, consistent with the
        # stored equilibrium vapor
        dh = _dh_at(dh_ref, t_ref, t_crit, w_exp, enth_mode, t_fe, n)
        hv = 0.0
        for j in range(n):
            hv += y_up_eq[j] * dh[j]
        prof_V[fe] = q_reb / hv
        profiles = {
            "L": np.asarray(prof_L),
            "V": np.asarray(prof_V),
            "T": np.asarray(prof_T),
            "x": np.asarray(prof_x),
            "y": np.asarray(prof_y),
        }
    return OK, f, q_reb, q_con, t_max, profiles
