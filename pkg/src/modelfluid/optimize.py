"""Constrained NLP machinery and the two study drivers.

``solve_nlp`` wraps an SQP solver (SLSQP: BFGS-approximated Hessian with an
l1 merit line search, the same family as the commercial codes this class of
problem is usually run on) behind a caching, finite-difference, multiplier-
recovery and restart layer. ``nq_optimize`` traces the stage-count /
reboiler-duty Pareto front with the epsilon-constraint scheme, handling the
integer stage counts by coordinate descent (or exhaustive enumeration at
desk scale) around the continuous operating-point NLP.
``entrainer_optimize`` fixes the stage counts and adds the seven entrainer
features to the variables, with phase-stability and subcritical constraints
discretized on composition grids.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sciopt

from . import feasibility
from .errors import (
    DegenerateFeaturesError,
    InfeasibleError,
    MaxIterationsError,
    NonConvergenceError,
)
from .features import ENTRAINER_FEATURE_NAMES
from .flowsheet import (
    ColumnGeometry,
    FlowsheetVariables,
    converge_flowsheet,
    evaluate_flowsheet,
    initial_variables,
)

# Appendix-style bounds of the entrainer descriptor
ENTRAINER_BOUNDS_LO = np.array([300.0, 10e3, 0.01, 0.01, 0.01, 0.01, 0.01])
ENTRAINER_BOUNDS_HI = np.array([600.0, 62e3, 8.0, 8.0, 8.0, 8.0, 2.0])

STAGE_BOUNDS = (3, 96)

_FEAS_TOL = 1e-6


# ---------------------------------------------------------------------------
# Generic constrained NLP
# ---------------------------------------------------------------------------

@dataclass
class NlpProblem:
    """Box-bounded NLP with equality and inequality (>= 0) constraints.

    ``combined`` evaluates (objective, equalities, inequalities) in one
    call; use it when they share expensive work. Otherwise the three
    separate callables are composed into one.
    """

    lower: np.ndarray
    upper: np.ndarray
    objective: object = None
    equalities: object = None
    inequalities: object = None
    combined: object = None
    fd_step: float = 1e-7  # relative, variable-scaled forward differences

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise ValueError("need finite lower < upper bounds")
        if self.combined is None:
            if self.objective is None:
                raise ValueError("need an objective or a combined evaluator")
            obj, eqs, ineqs = self.objective, self.equalities, self.inequalities

            def combined(x):
                f = float(obj(x))
                ce = np.atleast_1d(np.asarray(eqs(x), dtype=float)) if eqs else np.empty(0)
                ci = np.atleast_1d(np.asarray(ineqs(x), dtype=float)) if ineqs else np.empty(0)
                return f, ce, ci

            self.combined = combined

    @property
    def n(self):
        return self.lower.size


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    equalities: np.ndarray
    inequalities: np.ndarray
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray
    multipliers_bounds: np.ndarray
    active_set: tuple
    kkt_residual: float
    max_violation: float
    converged: bool
    iterations: int
    n_evaluations: int
    message: str


class _CachedNlp:
    """Scaled view of an NlpProblem with memoized combined evaluations and
    forward-difference Jacobians."""

    def __init__(self, problem, max_cache=512):
        self.p = problem
        self.span = problem.upper - problem.lower
        self.cache = OrderedDict()
        self.jac_cache = OrderedDict()
        self.max_cache = max_cache
        self.n_evals = 0

    def unscale(self, y):
        return self.p.lower + np.clip(y, 0.0, 1.0) * self.span

    def scale(self, x):
        return (np.asarray(x, dtype=float) - self.p.lower) / self.span

    def eval(self, y):
        key = y.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            self.cache.move_to_end(key)
            return hit
        self.n_evals += 1
        out = self.p.combined(self.unscale(y))
        f = float(out[0])
        ce = np.atleast_1d(np.asarray(out[1], dtype=float))
        ci = np.atleast_1d(np.asarray(out[2], dtype=float))
        if not math.isfinite(f):
            f = 1e12
        ce = np.nan_to_num(ce, nan=1e3, posinf=1e6, neginf=-1e6)
        ci = np.nan_to_num(ci, nan=-1e3, posinf=1e6, neginf=-1e6)
        hit = (f, ce, ci)
        self.cache[key] = hit
        if len(self.cache) > self.max_cache:
            self.cache.popitem(last=False)
        return hit

    def jacobians(self, y):
        key = y.tobytes()
        hit = self.jac_cache.get(key)
        if hit is not None:
            return hit
        f0, ce0, ci0 = self.eval(y)
        n = y.size
        gf = np.empty(n)
        je = np.empty((ce0.size, n))
        ji = np.empty((ci0.size, n))
        for k in range(n):
            h = self.p.fd_step * max(1.0, abs(y[k]))
            yk = y.copy()
            yk[k] = min(yk[k] + h, 1.0)
            if yk[k] == y[k]:
                yk[k] = y[k] - h
            dh = yk[k] - y[k]
            fk, cek, cik = self.eval(yk)
            gf[k] = (fk - f0) / dh
            if ce0.size:
                je[:, k] = (cek - ce0) / dh
            if ci0.size:
                ji[:, k] = (cik - ci0) / dh
        hit = (gf, je, ji)
        self.jac_cache[key] = hit
        if len(self.jac_cache) > 64:
            self.jac_cache.popitem(last=False)
        return hit


def _recover_multipliers(cache, y, act_tol=1e-6):
    """Least-squares KKT multipliers at y, inequality and bound multipliers
    constrained non-negative."""
    f, ce, ci = cache.eval(y)
    gf, je, ji = cache.jacobians(y)
    n = y.size
    active = [i for i in range(ci.size) if ci[i] <= act_tol]
    low_act = [i for i in range(n) if y[i] <= 1e-7]
    up_act = [i for i in range(n) if y[i] >= 1.0 - 1e-7]
    rows = []
    if ce.size:
        rows.append(je)
    if active:
        rows.append(ji[active])
    for i in low_act:
        e = np.zeros(n)
        e[i] = 1.0
        rows.append(e[None, :])
    for i in up_act:
        e = np.zeros(n)
        e[i] = -1.0
        rows.append(e[None, :])
    if not rows:
        return (np.empty(0), np.zeros(ci.size), np.zeros(n), tuple(active),
                float(np.max(np.abs(gf))) if n else 0.0)
    A = np.vstack(rows).T  # (n, m)
    m_eq = ce.size
    m = A.shape[1]
    lo = np.full(m, -np.inf)
    lo[m_eq:] = 0.0
    res = sciopt.lsq_linear(A, gf, bounds=(lo, np.full(m, np.inf)))
    z = res.x
    lam = z[:m_eq]
    mu = np.zeros(ci.size)
    for idx, i in enumerate(active):
        mu[i] = z[m_eq + idx]
    nu = np.zeros(n)
    off = m_eq + len(active)
    for idx, i in enumerate(low_act):
        nu[i] = z[off + idx]
    off += len(low_act)
    for idx, i in enumerate(up_act):
        nu[i] = -z[off + idx]
    kkt = float(np.max(np.abs(gf - A @ z))) if m else float(np.max(np.abs(gf)))
    return lam, mu, nu, tuple(active), kkt


def _run_slsqp(cache, y0, max_iter, ftol):
    p = cache.p
    _, ce0, ci0 = cache.eval(y0)
    cons = []
    if ce0.size:
        cons.append({
            "type": "eq",
            "fun": lambda y: cache.eval(np.clip(y, 0.0, 1.0))[1],
            "jac": lambda y: cache.jacobians(np.clip(y, 0.0, 1.0))[1],
        })
    if ci0.size:
        cons.append({
            "type": "ineq",
            "fun": lambda y: cache.eval(np.clip(y, 0.0, 1.0))[2],
            "jac": lambda y: cache.jacobians(np.clip(y, 0.0, 1.0))[2],
        })
    res = sciopt.minimize(
        lambda y: cache.eval(np.clip(y, 0.0, 1.0))[0],
        y0,
        jac=lambda y: cache.jacobians(np.clip(y, 0.0, 1.0))[0],
        bounds=[(0.0, 1.0)] * p.n,
        constraints=cons,
        method="SLSQP",
        options={"maxiter": max_iter, "ftol": ftol})
    return np.clip(res.x, 0.0, 1.0), res


def _restore_feasibility(cache, y0, max_iter):
    """Minimize the squared constraint violation inside the box."""
    def viol(y):
        _, ce, ci = cache.eval(np.clip(y, 0.0, 1.0))
        return float(np.sum(ce ** 2) + np.sum(np.minimum(ci, 0.0) ** 2))

    res = sciopt.minimize(viol, y0, method="SLSQP",
                          bounds=[(0.0, 1.0)] * cache.p.n,
                          options={"maxiter": max_iter, "ftol": 1e-14})
    return np.clip(res.x, 0.0, 1.0)


def _violation(ce, ci):
    v = 0.0
    if ce.size:
        v = float(np.max(np.abs(ce)))
    if ci.size:
        v = max(v, float(np.max(np.maximum(-ci, 0.0))))
    return v


def solve_nlp(problem, x0, seed=0, max_iter=200, tol=1e-6, restarts=3,
              raise_on_failure=True):
    """Solve the NLP from x0; deterministic for fixed (problem, x0, seed).

    Failed attempts trigger a feasibility-restoration pre-solve and then
    seeded perturbed restarts. Raises MaxIterationsError / InfeasibleError
    unless ``raise_on_failure`` is off, in which case the best attempt is
    returned with ``converged == False``.
    """
    cache = _CachedNlp(problem)
    y0 = np.clip(cache.scale(x0), 0.0, 1.0)
    rng = np.random.default_rng(seed)
    best = None
    total_iters = 0
    message = ""

    starts = [y0]
    for _ in range(max(0, restarts - 1)):
        starts.append(np.clip(y0 + rng.normal(0.0, 0.05, size=problem.n), 0.0, 1.0))

    def consider(y, res):
        nonlocal best, message
        f, ce, ci = cache.eval(y)
        viol = _violation(ce, ci)
        key = (viol > tol, viol if viol > tol else 0.0, f)
        if best is None or key < best[0]:
            best = (key, y)
            message = res.message
        return viol <= tol

    for ys in starts:
        y, res = _run_slsqp(cache, ys, max_iter, ftol=1e-12)
        total_iters += int(res.nit)
        if consider(y, res):
            break
        # feasibility restoration from the failed iterate, then resume
        y2 = _restore_feasibility(cache, y, max_iter)
        y, res = _run_slsqp(cache, y2, max_iter, ftol=1e-12)
        total_iters += int(res.nit)
        if consider(y, res):
            break

    y = best[1]
    lam, mu, nu, active, kkt = _recover_multipliers(cache, y)
    f, ce, ci = cache.eval(y)
    viol = _violation(ce, ci)
    converged = (viol <= tol) and (kkt <= max(tol, 1e-6 * max(1.0, abs(f))))
    span = problem.upper - problem.lower
    solution = NlpSolution(
        x=cache.unscale(y),
        objective=f,
        equalities=ce,
        inequalities=ci,
        multipliers_eq=lam,
        multipliers_ineq=mu,
        multipliers_bounds=nu / span,
        active_set=active,
        kkt_residual=kkt,
        max_violation=viol,
        converged=converged,
        iterations=total_iters,
        n_evaluations=cache.n_evals,
        message=str(message))
    if not converged and raise_on_failure:
        if viol > tol:
            raise InfeasibleError(
                f"restoration failed: constraint violation {viol:.3e} > {tol:g}")
        raise MaxIterationsError(
            f"KKT residual {kkt:.3e} above tolerance after {total_iters} iterations")
    return solution


# ---------------------------------------------------------------------------
# Operating-point NLP (fixed stage counts, fixed fluid)
# ---------------------------------------------------------------------------

def _duty_scale(spec):
    # brings reboiler duties to O(1)
    return spec.feed_flow * 4.0e4


def flowsheet_problem(spec, pkg):
    """NlpProblem over the 24 operating variables of a three-column
    flowsheet; objective is the total reboiler duty (scaled)."""
    n, k = spec.n_columns, spec.n_components
    lo, hi = FlowsheetVariables.bounds(n, k)
    q_ref = _duty_scale(spec)

    def combined(x):
        vars_ = FlowsheetVariables.from_vector(x, n, k)
        _, res = evaluate_flowsheet(spec, vars_, pkg)
        q = float(res.q_reb.sum()) / q_ref if res.column_ok.all() else 1e3
        return q, res.equality_vector(), res.inequality_vector()

    return NlpProblem(lower=lo, upper=hi, combined=combined)


def _landed(spec, vars_, pkg):
    """Try to place a starting point on the equality manifold."""
    try:
        return converge_flowsheet(spec, vars_, pkg)
    except NonConvergenceError:
        return vars_


def solve_operating_point(spec, pkg, warm_starts=(), seed=0, max_iter=150,
                          tol=_FEAS_TOL):
    """Minimize total reboiler duty at fixed stage counts.

    Tries each warm start (FlowsheetVariables) and finally the sharp-split
    heuristic; returns (q_total_W, variables, solution) of the best
    feasible attempt or raises InfeasibleError.
    """
    problem = flowsheet_problem(spec, pkg)
    q_ref = _duty_scale(spec)
    starts = [w for w in warm_starts if w is not None]
    starts.append(_landed(spec, initial_variables(spec), pkg))
    best = None
    last_exc = None
    for vars0 in starts:
        sol = solve_nlp(problem, vars0.to_vector(), seed=seed,
                        max_iter=max_iter, tol=tol, restarts=2,
                        raise_on_failure=False)
        if sol.converged or sol.max_violation <= tol:
            if best is None or sol.objective < best.objective:
                best = sol
    if best is None:
        raise InfeasibleError(
            f"no feasible operating point at stages "
            f"{[(g.n_below, g.n_above) for g in spec.geometry]}")
    vars_ = FlowsheetVariables.from_vector(best.x, spec.n_columns, spec.n_components)
    return best.objective * q_ref, vars_, best


# ---------------------------------------------------------------------------
# Step 1: epsilon-constraint NQ front
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NqPoint:
    budget: int                 # epsilon bound on the total stage count
    geometry: tuple             # ColumnGeometry per column at the optimum
    n_stages_total: int
    q_reb_total: float          # W
    variables: FlowsheetVariables
    feasible: bool
    message: str = ""


def allocations_within(budget, n_columns=3, lo=STAGE_BOUNDS[0], hi=STAGE_BOUNDS[1]):
    """All stage allocations ((n_below, n_above) per column) whose total
    stage count stays within the budget."""
    out = []
    min_total = n_columns * (2 * lo + 1)
    if budget < min_total:
        return out

    def per_column(extra):
        # (n_below, n_above) pairs with n_below + n_above + 1 <= 2*lo+1+extra
        pairs = []
        for nb in range(lo, min(hi, lo + extra) + 1):
            for na in range(lo, min(hi, lo + extra - (nb - lo)) + 1):
                pairs.append((nb, na))
        return pairs

    extra_total = budget - min_total

    def rec(i, left, acc):
        if i == n_columns:
            out.append(tuple(acc))
            return
        for pair in per_column(left):
            used = (pair[0] - lo) + (pair[1] - lo)
            rec(i + 1, left - used, acc + [pair])

    rec(0, extra_total, [])
    return out


def _geometry(alloc):
    return tuple(ColumnGeometry(n_below=nb, n_above=na) for nb, na in alloc)


def _alloc_total(alloc):
    return sum(nb + na + 1 for nb, na in alloc)


def _neighbors(alloc, budget, lo=STAGE_BOUNDS[0], hi=STAGE_BOUNDS[1]):
    """Single +-1 moves, within-column swaps and cross-column transfers."""
    seen = set()
    base = [list(p) for p in alloc]
    n = len(base)

    def emit(cand):
        tup = tuple(tuple(p) for p in cand)
        if tup in seen or tup == alloc:
            return
        if any(not (lo <= v <= hi) for p in tup for v in p):
            return
        if _alloc_total(tup) > budget:
            return
        seen.add(tup)

    for i in range(n):
        for slot in range(2):
            for d in (-1, 1):
                cand = [list(p) for p in base]
                cand[i][slot] += d
                emit(cand)
        for d in (-1, 1):  # swap one stage across the feed
            cand = [list(p) for p in base]
            cand[i][0] += d
            cand[i][1] -= d
            emit(cand)
    for i in range(n):  # move one stage between columns
        for j in range(n):
            if i == j:
                continue
            for si in range(2):
                for sj in range(2):
                    cand = [list(p) for p in base]
                    cand[i][si] -= 1
                    cand[j][sj] += 1
                    emit(cand)
    return sorted(seen)


def _balanced_allocation(budget, n_columns=3, lo=STAGE_BOUNDS[0]):
    per = budget // n_columns
    trays = max(per - 1, 2 * lo)
    nb = max(lo, trays // 2)
    na = max(lo, trays - nb)
    alloc = [[nb, na] for _ in range(n_columns)]
    while _alloc_total(tuple(map(tuple, alloc))) > budget:
        i = int(np.argmax([p[0] + p[1] for p in alloc]))
        slot = 0 if alloc[i][0] >= alloc[i][1] else 1
        if alloc[i][slot] > lo:
            alloc[i][slot] -= 1
        else:
            break
    return tuple(tuple(p) for p in alloc)


def nq_optimize(spec, pkg, budgets, method="coordinate", seed=0,
                max_iter=150, on_point=None):
    """Trace the NQ front: for each stage budget (ascending) minimize the
    total reboiler duty over stage allocation and operating point.

    ``method`` is "coordinate" (integer coordinate descent with warm
    starts) or "exhaustive" (solve every allocation within the budget).
    Infeasible budgets produce NqPoint(feasible=False) entries, not errors.
    The previous budget's solution seeds the next one, which makes the
    front monotone by construction.
    """
    budgets = sorted(int(b) for b in budgets)
    results = []
    carry = None  # (alloc, q, vars) of the previous budget's best

    for budget in budgets:
        solved = {}

        def attempt(alloc, warm):
            if alloc in solved:
                return solved[alloc]
            try:
                q, vars_, sol = solve_operating_point(
                    spec.with_geometry(_geometry(alloc)), pkg,
                    warm_starts=warm, seed=seed, max_iter=max_iter)
                out = (q, vars_)
            except InfeasibleError:
                out = (np.inf, None)
            solved[alloc] = out
            if on_point:
                on_point(budget, alloc, out[0])
            return out

        if method == "exhaustive":
            warm = [carry[2]] if carry else []
            best_alloc, best_q, best_vars = None, np.inf, None
            for alloc in allocations_within(budget, spec.n_columns):
                q, vars_ = attempt(alloc, warm + ([best_vars] if best_vars else []))
                if q < best_q:
                    best_alloc, best_q, best_vars = alloc, q, vars_
        elif method == "coordinate":
            if carry is not None:
                incumbent = carry[0]
                warm = [carry[2]]
            else:
                incumbent = _balanced_allocation(budget, spec.n_columns)
                warm = []
            best_q, best_vars = attempt(incumbent, warm)
            best_alloc = incumbent
            improved = True
            while improved:
                improved = False
                for cand in _neighbors(best_alloc, budget):
                    q, vars_ = attempt(cand, [best_vars] if best_vars else [])
                    if q < best_q - 1e-9 * max(1.0, abs(best_q)):
                        best_alloc, best_q, best_vars = cand, q, vars_
                        improved = True
        else:
            raise ValueError(f"unknown method {method!r}")

        if best_vars is None:
            results.append(NqPoint(
                budget=budget, geometry=_geometry(_balanced_allocation(budget)),
                n_stages_total=0, q_reb_total=np.inf,
                variables=None, feasible=False,
                message="no feasible allocation"))
            continue
        carry = (best_alloc, best_q, best_vars)
        results.append(NqPoint(
            budget=budget,
            geometry=_geometry(best_alloc),
            n_stages_total=_alloc_total(best_alloc),
            q_reb_total=best_q,
            variables=best_vars,
            feasible=True))
    return results


# ---------------------------------------------------------------------------
# Step 2: hypothetical entrainer optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntrainerSolution:
    """Optimal entrainer descriptor for one fixed process design."""

    x_e: np.ndarray             # 7 entries, see ENTRAINER_FEATURE_NAMES
    q_reb_total: float          # W
    gradient: np.ndarray        # dQ*/dx_e, W per feature unit
    variables: FlowsheetVariables
    geometry: tuple
    budget: int
    kkt_residual: float
    feasible: bool

    @property
    def feature_names(self):
        return ENTRAINER_FEATURE_NAMES


def _stability_margins(template, x_e, binary_grid=21, ternary_grid=15):
    """Phase-stability constraint values for an entrainer descriptor:
    the solute/entrainer binaries on a line grid plus the ternary
    positive-definiteness margins on a simplex grid."""
    from .thermo import MargulesBinary, MargulesTernary

    g_ae, g_ea, g_eb, g_be = x_e[2], x_e[3], x_e[4], x_e[5]
    vals = []
    pair_ae = MargulesBinary(a_12=math.log(g_ae), a_21=math.log(g_ea))
    pair_eb = MargulesBinary(a_12=math.log(g_eb), a_21=math.log(g_be))
    for model in (pair_ae, pair_eb):
        _, margins = feasibility.binary_stability_margins(model, binary_grid)
        vals.append(margins)
    lg = ((0.0, math.log(g_ae), template.ln_gamma_ab),
          (math.log(g_ea), 0.0, math.log(g_eb)),
          (template.ln_gamma_ba, math.log(g_be), 0.0))
    ternary = MargulesTernary(a=lg, c=0.0)
    _, minors, dets = feasibility.ternary_stability_margins(ternary, ternary_grid)
    vals.append(minors)
    vals.append(dets)
    return np.concatenate(vals)


def entrainer_problem(spec, template, binary_grid=21, ternary_grid=15):
    """NlpProblem over [entrainer descriptor (7), operating variables (24)]
    at fixed stage counts."""
    n, k = spec.n_columns, spec.n_components
    v_lo, v_hi = FlowsheetVariables.bounds(n, k)
    lo = np.concatenate([ENTRAINER_BOUNDS_LO, v_lo])
    hi = np.concatenate([ENTRAINER_BOUNDS_HI, v_hi])
    q_ref = _duty_scale(spec)
    t_scale = 100.0  # K, for the subcritical margins
    n_eq = 2 * n + 2 * n * (k - 1)
    n_stab = 2 * binary_grid + (ternary_grid - 1) * (ternary_grid - 2)
    n_ineq = 2 * n + n_stab + k

    def combined(z):
        x_e = z[:7]
        vars_ = FlowsheetVariables.from_vector(z[7:], n, k)
        try:
            pkg = template.package(x_e)
        except DegenerateFeaturesError:
            # boiling-point collision: steer away through the subcritical
            # channel, keep every other constraint neutral
            return 1e3, np.full(n_eq, 1e2), np.concatenate(
                [np.zeros(2 * n + n_stab), np.full(k, -1e2)])
        _, res = evaluate_flowsheet(spec, vars_, pkg)
        ok = res.column_ok.all()
        q = float(res.q_reb.sum()) / q_ref if ok else 1e3
        stab = _stability_margins(template, x_e, binary_grid, ternary_grid)
        feats = (template.tsat_a, float(x_e[0]), template.tsat_b)
        hottest = max(float(res.t_max.max()), max(feats)) if ok else max(feats)
        subcrit = np.array([(1.5 * t - hottest) / t_scale for t in feats])
        ineq = np.concatenate([res.inequality_vector(), stab, subcrit])
        return q, res.equality_vector(), ineq

    return NlpProblem(lower=lo, upper=hi, combined=combined)


def duty_feature_gradient(spec, template, x_e, vars_, h_rel=1e-6):
    """dQ*/dx_e with the operating degrees of freedom (splits, refluxes)
    held fixed and the equality system eliminated: the implicit gradient
        dQ/dtheta = dQ/dtheta - dQ/dw [dc/dw]^-1 dc/dtheta
    over the trial-composition block w. This is the objective gradient a
    black-box flowsheet simulation would expose, and the one the duty
    prediction expands; inequality activity is deliberately not tracked.
    """
    n, k = spec.n_columns, spec.n_components
    w0 = np.concatenate([np.asarray(vars_.x_secondary).ravel(),
                         np.asarray(vars_.x_product).ravel()])
    th0 = np.asarray(x_e, dtype=float)

    def make_vars(w):
        xs = w[:n * k].reshape(n, k)
        xp = w[n * k:].reshape(n, k)
        return FlowsheetVariables(split=vars_.split, reflux=vars_.reflux,
                                  x_secondary=tuple(map(tuple, xs)),
                                  x_product=tuple(map(tuple, xp)))

    def eval_cq(th, w):
        pkg = template.package(th)
        _, res = evaluate_flowsheet(spec, make_vars(w), pkg)
        return res.equality_vector(), float(res.q_reb.sum())

    c0, q0 = eval_cq(th0, w0)
    m = w0.size
    c_w = np.empty((c0.size, m))
    q_w = np.empty(m)
    for i in range(m):
        h = h_rel * max(1.0, abs(w0[i]))
        w = w0.copy()
        w[i] += h
        ci, qi = eval_cq(th0, w)
        c_w[:, i] = (ci - c0) / h
        q_w[i] = (qi - q0) / h
    c_t = np.empty((c0.size, 7))
    q_t = np.empty(7)
    scales = np.maximum(np.abs(th0), np.abs(ENTRAINER_BOUNDS_HI - ENTRAINER_BOUNDS_LO) * 1e-3)
    for j in range(7):
        h = h_rel * scales[j]
        th = th0.copy()
        th[j] += h
        cj, qj = eval_cq(th, w0)
        c_t[:, j] = (cj - c0) / h
        q_t[j] = (qj - q0) / h
    try:
        sens = np.linalg.solve(c_w, c_t)
    except np.linalg.LinAlgError:
        sens = np.linalg.lstsq(c_w, c_t, rcond=None)[0]
    return q_t - q_w @ sens


def entrainer_optimize(spec, template, nq_point, x_e0, seed=0, max_iter=200,
                       binary_grid=21, ternary_grid=15):
    """Optimize the entrainer descriptor at the stage counts of one NQ
    point, starting from the reference entrainer's features and the NQ
    point's operating variables."""
    spec_fixed = spec.with_geometry(nq_point.geometry)
    problem = entrainer_problem(spec_fixed, template, binary_grid, ternary_grid)
    x_e0 = np.asarray(x_e0, dtype=float)
    z0 = np.concatenate([x_e0, nq_point.variables.to_vector()])
    sol = solve_nlp(problem, z0, seed=seed, max_iter=max_iter,
                    raise_on_failure=False)
    q_ref = _duty_scale(spec_fixed)
    x_e = sol.x[:7]
    vars_ = FlowsheetVariables.from_vector(sol.x[7:], spec.n_columns,
                                           spec.n_components)
    grad = duty_feature_gradient(spec_fixed, template, x_e, vars_)
    return EntrainerSolution(
        x_e=x_e,
        q_reb_total=sol.objective * q_ref,
        gradient=grad,
        variables=vars_,
        geometry=nq_point.geometry,
        budget=nq_point.budget,
        kkt_residual=sol.kkt_residual,
        feasible=sol.max_violation <= _FEAS_TOL)
