"""Three-column entrainer-distillation flowsheet.

Mixer, columns C1-C3 and one recycle back to the mixer. Stream wiring is a
configuration table because the drawing admits more than one reading; the
default follows the maximum-boiling sequence: mixer(feed + C3 bottoms) ->
C1 (solute A overhead), C1 bottoms -> C2 (entrainer out the bottom), C2
distillate -> C3 (solute B overhead, bottoms recycled).

Recycles are handled equation-oriented: trial compositions of every
product and secondary (onward-routed) stream are optimization variables
and the balances are residuals, rather than tear-stream iteration. Keeping
both the product and the secondary compositions as variables is redundant
on the solution manifold but keeps every trial composition inside its box
during optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .column import SPEC_BOUNDS, Stream
from .errors import NonConvergenceError

X_BOUNDS = (1e-8, 1.0 - 1e-8)  # box for every trial mole fraction


@dataclass(frozen=True)
class ColumnGeometry:
    n_below: int
    n_above: int

    def __post_init__(self):
        lo, hi = SPEC_BOUNDS["n_stages"]
        for name, v in (("n_below", self.n_below), ("n_above", self.n_above)):
            if not (lo <= v <= hi) or int(v) != v:
                raise ValueError(f"{name}={v} outside integer range [{lo}, {hi}]")

    @property
    def n_stages(self):
        return self.n_below + 1 + self.n_above


@dataclass(frozen=True)
class ColumnWiring:
    """Where one column's feed comes from and which outlet is its product.

    ``feed_source`` is "mixer" or "column:<k>" (the secondary stream of
    column k); the secondary stream is the non-product outlet.
    """

    feed_source: str
    product_side: str  # "bottoms" | "distillate"

    def __post_init__(self):
        if self.product_side not in ("bottoms", "distillate"):
            raise ValueError(f"invalid product side {self.product_side!r}")
        if self.feed_source != "mixer" and not self.feed_source.startswith("column:"):
            raise ValueError(f"invalid feed source {self.feed_source!r}")

    @property
    def secondary_is_bottoms(self):
        return self.product_side == "distillate"


@dataclass(frozen=True)
class FlowsheetWiring:
    columns: tuple          # ColumnWiring per column
    recycle_column: int     # whose secondary stream returns to the mixer

    def __post_init__(self):
        n = len(self.columns)
        sources = [w.feed_source for w in self.columns]
        if sources.count("mixer") != 1:
            raise ValueError("exactly one column must be fed by the mixer")
        consumed = set()
        for s in sources:
            if s.startswith("column:"):
                k = int(s.split(":")[1])
                if not (0 <= k < n):
                    raise ValueError(f"feed source {s!r} names a missing column")
                if k in consumed:
                    raise ValueError(f"column {k} secondary consumed twice")
                consumed.add(k)
        if self.recycle_column in consumed:
            raise ValueError("recycle column's secondary is already consumed")
        if not (0 <= self.recycle_column < n):
            raise ValueError("invalid recycle column index")
        if consumed | {self.recycle_column} != set(range(n)):
            raise ValueError("every column's secondary stream needs a destination")
        # feed chain must reach every column from the mixer
        order = self.evaluation_order()
        if len(order) != n:
            raise ValueError("wiring does not connect all columns to the mixer")

    def evaluation_order(self):
        """Column indices in upstream-to-downstream order."""
        n = len(self.columns)
        order = [i for i, w in enumerate(self.columns) if w.feed_source == "mixer"]
        while len(order) < n:
            advanced = False
            for i, w in enumerate(self.columns):
                if i in order or w.feed_source == "mixer":
                    continue
                k = int(w.feed_source.split(":")[1])
                if k in order:
                    order.append(i)
                    advanced = True
            if not advanced:
                break
        return order


def default_wiring():
    """The maximum-boiling entrainer sequence."""
    return FlowsheetWiring(
        columns=(
            ColumnWiring(feed_source="mixer", product_side="distillate"),
            ColumnWiring(feed_source="column:0", product_side="bottoms"),
            ColumnWiring(feed_source="column:1", product_side="distillate"),
        ),
        recycle_column=2)


@dataclass(frozen=True)
class FlowsheetSpec:
    """External feed, geometry, wiring and product requirements."""

    feed_flow: float          # mol/s, external stream 1
    feed_x: tuple             # composition of stream 1
    pressure: float           # Pa
    geometry: tuple           # ColumnGeometry per column
    wiring: FlowsheetWiring
    product_key: tuple        # key component index per column's product
    purity_min: tuple         # minimum key-component mole fraction per product
    flow_min: float           # mol/s, each product stream

    def __post_init__(self):
        x = np.asarray(self.feed_x, dtype=float)
        if abs(x.sum() - 1.0) > 1e-10 or np.any(x < 0.0):
            raise ValueError("invalid external feed composition")
        if len(self.geometry) != len(self.wiring.columns):
            raise ValueError("geometry/wiring length mismatch")
        if not (len(self.product_key) == len(self.purity_min) == len(self.geometry)):
            raise ValueError("per-column product data length mismatch")
        object.__setattr__(self, "feed_x", tuple(float(v) for v in x))

    @property
    def n_columns(self):
        return len(self.geometry)

    @property
    def n_components(self):
        return len(self.feed_x)

    @property
    def n_stages_total(self):
        return sum(g.n_stages for g in self.geometry)

    def with_geometry(self, geometry):
        return replace(self, geometry=tuple(geometry))


@dataclass(frozen=True)
class FlowsheetVariables:
    """Continuous operating variables: per column the split, the reflux
    ratio, and the trial compositions of its secondary and product streams."""

    split: tuple
    reflux: tuple
    x_secondary: tuple  # (n_columns, n_components)
    x_product: tuple

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(v) for v in self.split))
        object.__setattr__(self, "reflux", tuple(float(v) for v in self.reflux))
        object.__setattr__(self, "x_secondary",
                           tuple(tuple(float(v) for v in row) for row in self.x_secondary))
        object.__setattr__(self, "x_product",
                           tuple(tuple(float(v) for v in row) for row in self.x_product))

    @property
    def n_columns(self):
        return len(self.split)

    @property
    def n_components(self):
        return len(self.x_secondary[0])

    def to_vector(self):
        return np.concatenate([
            np.asarray(self.split),
            np.asarray(self.reflux),
            np.asarray(self.x_secondary).ravel(),
            np.asarray(self.x_product).ravel(),
        ])

    @classmethod
    def from_vector(cls, v, n_columns=3, n_components=3):
        v = np.asarray(v, dtype=float)
        nc = n_columns
        k = n_components
        if v.shape != (2 * nc + 2 * nc * k,):
            raise ValueError(f"variable vector has wrong length {v.shape}")
        split = v[:nc]
        reflux = v[nc:2 * nc]
        xs = v[2 * nc:2 * nc + nc * k].reshape(nc, k)
        xp = v[2 * nc + nc * k:].reshape(nc, k)
        return cls(split=tuple(split), reflux=tuple(reflux),
                   x_secondary=tuple(map(tuple, xs)),
                   x_product=tuple(map(tuple, xp)))

    @staticmethod
    def bounds(n_columns=3, n_components=3):
        s_lo, s_hi = SPEC_BOUNDS["split"]
        r_lo, r_hi = SPEC_BOUNDS["reflux_ratio"]
        x_lo, x_hi = X_BOUNDS
        nc, k = n_columns, n_components
        lo = np.concatenate([np.full(nc, s_lo), np.full(nc, r_lo),
                             np.full(2 * nc * k, x_lo)])
        hi = np.concatenate([np.full(nc, s_hi), np.full(nc, r_hi),
                             np.full(2 * nc * k, x_hi)])
        return lo, hi


@dataclass(frozen=True)
class FlowsheetResiduals:
    """Every constraint residual of one evaluation, named.

    Equalities: stream closure, per-column component balances, per-column
    feed-match (MESH) residuals, plus the (redundant, reported-only)
    overall flowsheet balance. Inequality slacks are >= 0 when feasible.
    Balance residuals are scaled by the external feed flow.
    """

    closure: np.ndarray          # (2 * n_columns,)
    column_balance: np.ndarray   # (n_columns, n_components)
    mesh: np.ndarray             # (n_columns, n_components - 1)
    overall_balance: np.ndarray  # (n_components,)
    purity_slack: np.ndarray     # (n_columns,)
    flow_slack: np.ndarray       # (n_columns,)
    column_ok: np.ndarray        # bool per column
    # evaluation byproducts consumed by the optimizer
    q_reb: np.ndarray            # W per column
    t_max: np.ndarray            # hottest stage per column, K

    def equality_vector(self):
        """The independent equality set: closure, the first nc-1 components
        of each column balance, and the MESH residuals."""
        return np.concatenate([
            self.closure,
            self.column_balance[:, :-1].ravel(),
            self.mesh.ravel(),
        ])

    def inequality_vector(self):
        return np.concatenate([self.purity_slack, self.flow_slack])

    def max_equality_error(self):
        return float(np.max(np.abs(self.equality_vector())))

    def max_violation(self):
        return max(self.max_equality_error(),
                   float(np.max(np.maximum(-self.inequality_vector(), 0.0))),
                   0.0 if bool(self.column_ok.all()) else np.inf)


@dataclass(frozen=True)
class FlowsheetState:
    """Streams and column results of one (converged) evaluation."""

    streams: tuple          # the eight numbered streams of the drawing
    q_reb: tuple            # W per column
    q_con: tuple            # W per column
    t_max: tuple            # hottest stage per column, K
    profiles: tuple         # per-column profile dicts (or None)
    n_stages_total: int
    q_reb_total: float      # W


def resolve_flows(spec, split):
    """Feed, product and secondary flow of every column.

    All internal flows are linear in the mixer outlet; the single recycle
    loop closes them: L_mix = L_ext / (1 - prod(secondary fractions along
    the loop)).
    """
    wiring = spec.wiring
    n = spec.n_columns
    order = wiring.evaluation_order()
    # secondary fraction of the column feed
    frac = [split[i] if wiring.columns[i].secondary_is_bottoms else 1.0 - split[i]
            for i in range(n)]
    # multiplier of the mixer outlet reaching each column's feed
    mult = {}
    for i in order:
        src = wiring.columns[i].feed_source
        if src == "mixer":
            mult[i] = 1.0
        else:
            k = int(src.split(":")[1])
            mult[i] = mult[k] * frac[k]
    loop = mult[wiring.recycle_column] * frac[wiring.recycle_column]
    if loop >= 1.0:
        raise ValueError("recycle loop gain >= 1; flows do not close")
    l_mix = spec.feed_flow / (1.0 - loop)
    feed = np.array([mult[i] * l_mix for i in range(n)])
    secondary = feed * np.asarray(frac)
    product = feed - secondary
    return l_mix, feed, product, secondary


def _column_io(spec, vars_, i):
    """Trial bottoms/distillate compositions of column i."""
    if spec.wiring.columns[i].secondary_is_bottoms:
        xb = np.asarray(vars_.x_secondary[i])
        xd = np.asarray(vars_.x_product[i])
    else:
        xb = np.asarray(vars_.x_product[i])
        xd = np.asarray(vars_.x_secondary[i])
    return xb, xd


def evaluate_flowsheet(spec, vars_, pkg, want_state=False):
    """Run the mixer and the three columns at trial variables.

    Returns (state, residuals); ``state`` is None unless ``want_state``
    (stream temperatures take extra bubble-point solves). Never raises on
    column sweep failures: the affected MESH residuals are replaced by a
    large constant and flagged in ``residuals.column_ok``.
    """
    n = spec.n_columns
    k = spec.n_components
    if pkg.n_components != k:
        raise ValueError("package/component count mismatch")
    th1, th2, a, c, p, dh = pkg.packed()
    if abs(p - spec.pressure) > 1e-9 * p:
        raise ValueError("flowsheet and package pressures differ")
    zeros = np.zeros(k)
    ones = np.ones(k)

    l_mix, feed_flow, product_flow, secondary_flow = resolve_flows(spec, vars_.split)
    x_ext = np.asarray(spec.feed_x)
    x_sec = np.asarray(vars_.x_secondary)
    x_pro = np.asarray(vars_.x_product)

    # stream compositions entering each column
    rec = spec.wiring.recycle_column
    x_mix = (spec.feed_flow * x_ext
             + secondary_flow[rec] * x_sec[rec]) / l_mix
    x_feed = np.empty((n, k))
    for i in range(n):
        src = spec.wiring.columns[i].feed_source
        x_feed[i] = x_mix if src == "mixer" else x_sec[int(src.split(":")[1])]

    closure = np.empty(2 * n)
    balance = np.empty((n, k))
    mesh = np.empty((n, k - 1))
    col_ok = np.ones(n, dtype=bool)
    q_reb = np.zeros(n)
    q_con = np.zeros(n)
    t_max = np.zeros(n)
    profiles = [None] * n

    scale = 1.0 / spec.feed_flow
    for i in range(n):
        closure[2 * i] = 1.0 - float(x_pro[i].sum())
        closure[2 * i + 1] = 1.0 - float(x_sec[i].sum())
        balance[i] = (feed_flow[i] * x_feed[i]
                      - product_flow[i] * x_pro[i]
                      - secondary_flow[i] * x_sec[i]) * scale
        xb, xd = _column_io(spec, vars_, i)
        g = spec.geometry[i]
        status, f, qr, qc, tm, prof = kernels.column_sweeps(
            th1, th2, a, c, p, dh, zeros, ones, 0.0, kernels.ENTH_CONSTANT,
            g.n_below, g.n_above, vars_.split[i], vars_.reflux[i],
            feed_flow[i], x_feed[i], xb, xd, want_state)
        if status != kernels.OK:
            col_ok[i] = False
            mesh[i] = 5.0
            continue
        mesh[i] = f[:-1]
        q_reb[i] = qr
        q_con[i] = qc
        t_max[i] = tm
        profiles[i] = prof

    overall = (spec.feed_flow * x_ext
               - (product_flow[:, None] * x_pro).sum(axis=0)) * scale
    purity = np.array([x_pro[i][spec.product_key[i]] - spec.purity_min[i]
                       for i in range(n)])
    flow_slack = (product_flow - spec.flow_min) * scale

    residuals = FlowsheetResiduals(
        closure=closure,
        column_balance=balance,
        mesh=mesh,
        overall_balance=overall,
        purity_slack=purity,
        flow_slack=flow_slack,
        column_ok=col_ok,
        q_reb=q_reb,
        t_max=t_max)

    state = None
    if want_state:
        streams = _assemble_streams(spec, vars_, pkg, l_mix, x_mix, x_feed,
                                    feed_flow, product_flow, secondary_flow)
        state = FlowsheetState(
            streams=streams,
            q_reb=tuple(q_reb),
            q_con=tuple(q_con),
            t_max=tuple(t_max),
            profiles=tuple(profiles),
            n_stages_total=spec.n_stages_total,
            q_reb_total=float(q_reb.sum()))
    return state, residuals


def _assemble_streams(spec, vars_, pkg, l_mix, x_mix, x_feed,
                      feed_flow, product_flow, secondary_flow):
    """The eight numbered streams, each at its bubble point."""
    def stream(flow, x):
        x = np.asarray(x, dtype=float)
        x = np.clip(x, 0.0, None)
        x = x / x.sum()
        return Stream.at_bubble_point(pkg, float(flow), x)

    x_sec = np.asarray(vars_.x_secondary)
    x_pro = np.asarray(vars_.x_product)
    streams = [
        stream(spec.feed_flow, spec.feed_x),   # 1 external feed
        stream(l_mix, x_mix),                  # 2 mixer outlet
    ]
    for i in range(spec.n_columns):
        streams.append(stream(product_flow[i], x_pro[i]))      # product of Ci
        streams.append(stream(secondary_flow[i], x_sec[i]))    # secondary of Ci
    return tuple(streams)


def total_objectives(state):
    """(total stage count, total reboiler duty in W)."""
    return state.n_stages_total, state.q_reb_total


# ---------------------------------------------------------------------------
# Manifold utilities: solve the equality system at fixed splits and refluxes
# ---------------------------------------------------------------------------

def _composition_vars(vars_):
    return np.concatenate([np.asarray(vars_.x_secondary).ravel(),
                           np.asarray(vars_.x_product).ravel()])


def _with_compositions(vars_, w, n, k):
    xs = w[:n * k].reshape(n, k)
    xp = w[n * k:].reshape(n, k)
    return FlowsheetVariables(split=vars_.split, reflux=vars_.reflux,
                              x_secondary=tuple(map(tuple, xs)),
                              x_product=tuple(map(tuple, xp)))


def converge_flowsheet(spec, vars_, pkg, tol=1e-10, max_iter=40):
    """Newton on the square equality system in the 2*n*k trial compositions
    at fixed splits and refluxes. Returns converged FlowsheetVariables.

    Used to land starting points on the solution manifold and to evaluate
    the feature gradient of the optimal duty; purity inequalities are not
    part of this system.
    """
    n = spec.n_columns
    k = spec.n_components
    w = _composition_vars(vars_)
    m = w.size

    def eq(wv):
        _, res = evaluate_flowsheet(spec, _with_compositions(vars_, wv, n, k), pkg)
        if not res.column_ok.all():
            return None
        return res.equality_vector()

    f = eq(w)
    if f is None:
        raise NonConvergenceError("column sweep failed at the starting point")
    for _ in range(max_iter):
        if np.max(np.abs(f)) <= tol:
            return _with_compositions(vars_, w, n, k)
        jac = np.empty((m, m))
        for col in range(m):
            h = 1e-7 * max(1.0, abs(w[col]))
            wp = w.copy()
            wp[col] += h
            fp = eq(wp)
            if fp is None:
                raise NonConvergenceError("column sweep failed during Newton")
            jac[:, col] = (fp - f) / h
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(jac, -f, rcond=None)
        lam = 1.0
        base = np.max(np.abs(f))
        while lam >= 1.0 / 256.0:
            w_try = np.clip(w + lam * step, X_BOUNDS[0], None)
            f_try = eq(w_try)
            if f_try is not None and np.max(np.abs(f_try)) < base:
                w, f = w_try, f_try
                break
            lam *= 0.5
        else:
            raise NonConvergenceError(
                f"flowsheet Newton stalled at |eq|={base:.3e}")
    raise NonConvergenceError("flowsheet Newton hit the iteration limit")


def initial_variables(spec, purity_target=None):
    """Sharp-split heuristic starting point.

    Product compositions concentrated on each column's key component,
    product flows from the overall balance, splits backed out through the
    wiring, secondary compositions from the column balances.
    """
    n = spec.n_columns
    k = spec.n_components
    x_ext = np.asarray(spec.feed_x)
    if purity_target is None:
        purity_target = [min(0.98, max(0.9, pm + 0.03)) for pm in spec.purity_min]
    x_pro = np.full((n, k), 0.0)
    for i in range(n):
        key = spec.product_key[i]
        x_pro[i] = (1.0 - purity_target[i]) / (k - 1)
        x_pro[i, key] = purity_target[i]
    # product flows from the overall component balance
    flows = np.linalg.solve(x_pro.T, spec.feed_flow * x_ext)
    flows = np.clip(flows, 0.05 * spec.feed_flow, None)

    # recycle flow is a free choice; take a third of the external feed
    rec = spec.wiring.recycle_column
    order = spec.wiring.evaluation_order()
    sec_flow = np.empty(n)
    feed_flow = np.empty(n)
    recycle_flow = 0.35 * spec.feed_flow
    l_mix = spec.feed_flow + recycle_flow
    for i in order:
        src = spec.wiring.columns[i].feed_source
        feed_flow[i] = l_mix if src == "mixer" else sec_flow[int(src.split(":")[1])]
        sec_flow[i] = max(feed_flow[i] - flows[i], 0.05 * spec.feed_flow)
    split = np.empty(n)
    for i in range(n):
        frac = sec_flow[i] / feed_flow[i]
        if spec.wiring.columns[i].secondary_is_bottoms:
            split[i] = frac
        else:
            split[i] = 1.0 - frac
    split = np.clip(split, 0.05, 0.95)

    # propagate compositions along the chain to back out the secondaries
    x_sec = np.empty((n, k))
    x_feed = np.empty((n, k))
    for i in order:
        src = spec.wiring.columns[i].feed_source
        if src == "mixer":
            x_feed[i] = x_ext  # recycle composition not yet known; close enough
        else:
            x_feed[i] = x_sec[int(src.split(":")[1])]
        raw = (feed_flow[i] * x_feed[i] - flows[i] * x_pro[i]) / sec_flow[i]
        raw = np.clip(raw, 10.0 * X_BOUNDS[0], None)
        x_sec[i] = raw / raw.sum()

    x_pro = np.clip(x_pro, 10.0 * X_BOUNDS[0], 1.0 - 10.0 * X_BOUNDS[0])
    return FlowsheetVariables(
        split=tuple(split),
        reflux=tuple([2.0] * n),
        x_secondary=tuple(map(tuple, x_sec)),
        x_product=tuple(map(tuple, x_pro / x_pro.sum(axis=1, keepdims=True))))
