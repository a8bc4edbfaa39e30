"""Command-line driver for every study.

Each subcommand reads the run configuration (bundled default unless
``--config`` is given), writes machine-readable outputs (CSV rows + JSON
summary, both stamped with the configuration hash and toolkit version)
into the output directory, and logs a short human-readable account.

Exit codes: 0 success, 1 domain infeasibility (no converged/feasible
result), 2 input error (unreadable or invalid files and flags).
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import numpy as np

from . import __version__, erroranalysis, io as mio, optimize, ranking as rk
from .column import ColumnSpec, Stream, simulate_column
from .errors import (
    InfeasibleError,
    MaxIterationsError,
    ModelfluidError,
    NonConvergenceError,
    ParseError,
    ValidationError,
)
from .feasibility import bubble_curve, detect_azeotrope
from .features import EntrainerTemplate, extract_features, features_to_params
from .flowsheet import FlowsheetVariables, converge_flowsheet, evaluate_flowsheet, initial_variables
from .vle import bubble_point

_INPUT_ERRORS = (ParseError, ValidationError)
_DOMAIN_ERRORS = (InfeasibleError, MaxIterationsError, NonConvergenceError,
                  ModelfluidError)


class _Ctx:
    def __init__(self, config_path, seed, threads, out):
        self.config = mio.load_config(config_path or mio.data_path("default_config.json"))
        self.seed = self.config.seed if seed is None else seed
        self.threads = threads
        self.out = out or self.config.output_dir
        self.hash = self.config.config_hash()

    def path(self, name):
        return os.path.join(self.out, name)

    def load_tables(self):
        table = mio.load_component_db(mio.data_path("components.csv"))
        gamma = mio.load_gamma_matrix(mio.data_path("gamma_inf.csv"))
        nrtl = mio.load_nrtl_table(mio.data_path("nrtl.csv"))
        return table, gamma, nrtl

    def system_cas(self):
        cfg = self.config
        if cfg.entrainer == "hypothetical":
            return list(cfg.solutes)
        return [cfg.solutes[0], cfg.entrainer, cfg.solutes[1]]

    def template(self, table, nrtl):
        cfg = self.config
        ref = mio.reference_package(table, nrtl, list(cfg.solutes), cfg.pressure)
        feats = extract_features(ref)
        return EntrainerTemplate.from_solute_features(feats, solute_cas=cfg.solutes)

    def entrainer_package_and_template(self, table, gamma, nrtl):
        """Ternary modelfluid package for the configured entrainer plus the
        solute template (candidate workflow: predicted gammas + pure data)."""
        cfg = self.config
        template = self.template(table, nrtl)
        if cfg.entrainer == "hypothetical":
            raise ValidationError(
                "this command needs a real entrainer CAS in system.entrainer")
        cand = rk.candidate_from_db(table.get(cfg.entrainer).name, cfg.entrainer,
                                    table, gamma, template, cfg.pressure)
        return template.package(np.asarray(cand.x_e)), template, cand


pass_ctx = click.make_pass_decorator(_Ctx)


def _common(fn):
    fn = click.option("--config", type=click.Path(), default=None,
                      help="Run configuration JSON (bundled default otherwise).")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the configuration seed.")(fn)
    fn = click.option("--threads", type=int, default=1, show_default=True,
                      help="Worker processes for embarrassingly parallel studies.")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory (default from the configuration).")(fn)
    return fn


def main(argv=None):
    try:
        cli(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 2
    except click.ClickException as exc:
        exc.show()
        return 2
    except _INPUT_ERRORS as exc:
        click.echo(f"input error: {exc}", err=True)
        return 2
    except _DOMAIN_ERRORS as exc:
        click.echo(f"infeasible: {exc}", err=True)
        return 1


@click.group()
@click.version_option(version=__version__)
def cli():
    """Feature-based fluid representation and entrainer-distillation toolkit."""


def _init(config, seed, threads, out):
    return _Ctx(config, seed, threads, out)


@cli.command("extract-features")
@_common
def cmd_extract_features(config, seed, threads, out):
    """Extract the VLE feature vector of the configured system."""
    ctx = _init(config, seed, threads, out)
    table, gamma, nrtl = ctx.load_tables()
    cas = ctx.system_cas()
    ref = mio.reference_package(table, nrtl, cas, ctx.config.pressure)
    feats = extract_features(ref)
    n = feats.n_components
    rows = []
    for i in range(n):
        rows.append((f"tsat[{i}]", "K", feats.tsat[i]))
        rows.append((f"dhvap[{i}]", "J/mol", feats.dhvap[i]))
    for i in range(n):
        for j in range(n):
            if i != j:
                rows.append((f"ln_gamma_inf[{i}][{j}]", "-", feats.ln_gamma_inf[i][j]))
                rows.append((f"slope[{i}][{j}]", "-", feats.slope[i][j]))
    rows.append(("ln_p", "ln(Pa)", feats.ln_p))
    mio.write_rows(ctx.path("features.csv"), ["feature", "unit", "value"], rows)
    params = features_to_params(feats)
    mio.write_summary(ctx.path("features_summary.json"), {
        "components": cas,
        "n_raw_entries": feats.n_raw_entries,
        "n_independent_entries": feats.n_independent_entries,
        "theta1": [a.theta1 for a in params.antoine],
        "theta2": [a.theta2 for a in params.antoine],
        "nonphysical_components": list(params.nonphysical),
    }, ctx.hash)
    click.echo(f"extracted {feats.n_raw_entries} features "
               f"({feats.n_independent_entries} independent) -> {ctx.out}")


@cli.command("vle-scan")
@_common
@click.option("--points", type=int, default=101, show_default=True)
@click.option("--model", type=click.Choice(["reduced", "reference"]),
              default="reduced", show_default=True)
def cmd_vle_scan(config, seed, threads, out, points, model):
    """Scan the isobaric bubble curve of the solute pair."""
    ctx = _init(config, seed, threads, out)
    table, gamma, nrtl = ctx.load_tables()
    ref = mio.reference_package(table, nrtl, list(ctx.config.solutes),
                                ctx.config.pressure)
    pkg = ref if model == "reference" else features_to_params(extract_features(ref)).package()
    xs, ts, ys = bubble_curve(pkg, 0, 1, points)
    mio.write_rows(ctx.path("vle_scan.csv"), ["x1", "T_K", "y1"],
                   zip(xs, ts, ys))
    k = int(np.argmax(ts))
    azeo = bool(0 < k < points - 1 and ts[k] > max(ts[0], ts[-1]))
    summary = {
        "model": model,
        "points": points,
        "t_max_K": float(ts.max()),
        "t_max_at_x1": float(xs[k]),
        "interior_maximum": azeo,
    }
    if pkg.is_reduced_form:
        rep = detect_azeotrope(pkg, 0, 1)
        summary["detector"] = {"exists": rep.exists, "kind": rep.kind}
    mio.write_summary(ctx.path("vle_scan_summary.json"), summary, ctx.hash)
    click.echo(f"scanned {points} bubble points; interior maximum: {azeo}")


@cli.command("simulate-column")
@_common
@click.option("--n-below", type=int, default=10, show_default=True)
@click.option("--n-above", type=int, default=10, show_default=True)
@click.option("--reflux", type=float, default=5.0, show_default=True)
@click.option("--split", type=float, default=0.5, show_default=True)
@click.option("--feed-x1", type=float, default=0.5, show_default=True)
@click.option("--feed-flow", type=float, default=0.278, show_default=True)
def cmd_simulate_column(config, seed, threads, out, n_below, n_above, reflux,
                        split, feed_x1, feed_flow):
    """Simulate one column on the solute pair (reduced representation)."""
    ctx = _init(config, seed, threads, out)
    table, gamma, nrtl = ctx.load_tables()
    ref = mio.reference_package(table, nrtl, list(ctx.config.solutes),
                                ctx.config.pressure)
    pkg = features_to_params(extract_features(ref)).package()
    feed = Stream.at_bubble_point(pkg, feed_flow,
                                  np.array([feed_x1, 1.0 - feed_x1]))
    spec = ColumnSpec(n_below=n_below, n_above=n_above, reflux_ratio=reflux,
                      split=split, feed=feed, pressure=ctx.config.pressure)
    res = simulate_column(spec, pkg, feed.x)
    prof = res.profiles
    rows = [(i, prof["L"][i], prof["V"][i], prof["T"][i],
             *prof["x"][i], *prof["y"][i]) for i in range(spec.n_total + 1)]
    n = pkg.n_components
    mio.write_rows(ctx.path("column_profiles.csv"),
                   ["stage", "L_mol_s", "V_mol_s", "T_K"]
                   + [f"x{j + 1}" for j in range(n)]
                   + [f"y{j + 1}" for j in range(n)], rows)
    mio.write_summary(ctx.path("column_summary.json"), {
        "x_bottom": list(res.bottoms.x),
        "x_distillate": list(res.distillate.x),
        "q_reb_w": res.q_reb,
        "q_con_w": res.q_con,
        "boilup_ratio": res.boilup_ratio,
        "t_max_K": res.t_max,
        "feed_residual": float(np.max(np.abs(res.feed_residual))),
        "mass_balance_error": res.mass_balance_error(feed),
    }, ctx.hash)
    click.echo(f"column converged: x_bottom={np.round(res.bottoms.x, 4)}, "
               f"Q_reb={res.q_reb:.1f} W")


def _flowsheet_setup(ctx):
    table, gamma, nrtl = ctx.load_tables()
    pkg, template, cand = ctx.entrainer_package_and_template(table, gamma, nrtl)
    spec = ctx.config.flowsheet_spec()
    return spec, pkg, template, cand


@cli.command("simulate-flowsheet")
@_common
@click.option("--variables", type=click.Path(), default=None,
              help="JSON file with a saved variable vector; heuristic + "
                   "Newton landing otherwise.")
def cmd_simulate_flowsheet(config, seed, threads, out, variables):
    """Evaluate the three-column flowsheet and report all residuals."""
    ctx = _init(config, seed, threads, out)
    spec, pkg, _, _ = _flowsheet_setup(ctx)
    if variables:
        try:
            with open(variables) as fh:
                doc = json.load(fh)
            vars_ = FlowsheetVariables.from_vector(
                np.asarray(doc["variables"], dtype=float),
                spec.n_columns, spec.n_components)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ParseError(f"bad variables file {variables}: {exc}") from None
    else:
        vars_ = converge_flowsheet(spec, initial_variables(spec), pkg)
    state, res = evaluate_flowsheet(spec, vars_, pkg, want_state=True)
    if not res.column_ok.all():
        raise NonConvergenceError("a column sweep failed at this point")
    names = ["external feed", "mixer outlet",
             "C1 product", "C1 secondary", "C2 product", "C2 secondary",
             "C3 product", "C3 secondary"]
    rows = [(k + 1, names[k], s.flow, s.T, *s.x)
            for k, s in enumerate(state.streams)]
    mio.write_rows(ctx.path("flowsheet_streams.csv"),
                   ["stream", "role", "flow_mol_s", "T_K", "x1", "x2", "x3"],
                   rows)
    mio.write_summary(ctx.path("flowsheet_summary.json"), {
        "q_reb_w": list(state.q_reb),
        "q_reb_total_w": state.q_reb_total,
        "n_stages_total": state.n_stages_total,
        "max_equality_residual": res.max_equality_error(),
        "purity_slack": list(res.purity_slack),
        "flow_slack": list(res.flow_slack),
        "overall_balance": list(res.overall_balance),
    }, ctx.hash)
    click.echo(f"flowsheet evaluated: |eq|={res.max_equality_error():.2e}, "
               f"Q_total={state.q_reb_total:.1f} W")


@cli.command("nq-optimize")
@_common
def cmd_nq_optimize(config, seed, threads, out):
    """Trace the stage-count / duty Pareto front (step 1)."""
    ctx = _init(config, seed, threads, out)
    spec, pkg, _, _ = _flowsheet_setup(ctx)
    cfg = ctx.config
    if not cfg.budgets:
        raise ValidationError("configuration has no optimizer.budgets")
    points = optimize.nq_optimize(spec, pkg, cfg.budgets, method=cfg.method,
                                  seed=ctx.seed, max_iter=cfg.max_iter)
    rows = []
    solutions = []
    for pt in points:
        rows.append((pt.budget, pt.n_stages_total,
                     pt.q_reb_total if pt.feasible else "",
                     pt.feasible,
                     ";".join(f"{g.n_below}+{g.n_above}" for g in pt.geometry)))
        if pt.feasible:
            solutions.append({
                "budget": pt.budget,
                "n_stages_total": pt.n_stages_total,
                "q_reb_total_w": pt.q_reb_total,
                "geometry": [[g.n_below, g.n_above] for g in pt.geometry],
                "variables": list(pt.variables.to_vector()),
            })
    mio.write_rows(ctx.path("nq_points.csv"),
                   ["budget", "n_stages_total", "q_reb_total_w", "feasible",
                    "geometry"], rows)
    mio.write_summary(ctx.path("nq_solutions.json"),
                      {"points": solutions}, ctx.hash)
    feas = sum(1 for p in points if p.feasible)
    if feas == 0:
        raise InfeasibleError("no feasible point on any budget")
    click.echo(f"NQ front: {feas}/{len(points)} budgets feasible -> {ctx.out}")


@cli.command("entrainer-optimize")
@_common
@click.option("--nq-file", type=click.Path(), default=None,
              help="nq_solutions.json from nq-optimize (defaults to the "
                   "output directory).")
def cmd_entrainer_optimize(config, seed, threads, out, nq_file):
    """Optimize hypothetical entrainer features per NQ point (step 2)."""
    ctx = _init(config, seed, threads, out)
    spec, pkg, template, cand = _flowsheet_setup(ctx)
    path = nq_file or ctx.path("nq_solutions.json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
        points = doc["points"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad NQ solutions file {path}: {exc}") from None
    if not points:
        raise InfeasibleError("NQ solutions file has no feasible points")
    x_e0 = np.asarray(cand.x_e)
    rows = []
    sols = []
    from .flowsheet import ColumnGeometry

    for rec in points:
        nq = optimize.NqPoint(
            budget=rec["budget"],
            geometry=tuple(ColumnGeometry(*g) for g in rec["geometry"]),
            n_stages_total=rec["n_stages_total"],
            q_reb_total=rec["q_reb_total_w"],
            variables=FlowsheetVariables.from_vector(
                np.asarray(rec["variables"]), spec.n_columns,
                spec.n_components),
            feasible=True)
        sol = optimize.entrainer_optimize(
            spec, template, nq, x_e0, seed=ctx.seed,
            max_iter=ctx.config.max_iter,
            binary_grid=ctx.config.binary_stability_grid,
            ternary_grid=ctx.config.ternary_stability_grid)
        rows.append((nq.budget, nq.n_stages_total, sol.q_reb_total,
                     sol.feasible, *sol.x_e))
        sols.append({
            "budget": nq.budget,
            "geometry": rec["geometry"],
            "q_reb_total_w": sol.q_reb_total,
            "x_e": list(sol.x_e),
            "gradient": list(sol.gradient),
            "variables": list(sol.variables.to_vector()),
            "feasible": sol.feasible,
        })
    mio.write_rows(ctx.path("hypothetical_entrainers.csv"),
                   ["budget", "n_stages_total", "q_reb_total_w", "feasible",
                    *optimize.ENTRAINER_FEATURE_NAMES], rows)
    mio.write_summary(ctx.path("entrainer_solutions.json"),
                      {"solutions": sols}, ctx.hash)
    if not any(s["feasible"] for s in sols):
        raise InfeasibleError("no feasible hypothetical entrainer")
    click.echo(f"optimized {len(sols)} hypothetical entrainers -> {ctx.out}")


@cli.command("rank")
@_common
@click.option("--pool", type=click.Path(), default=None,
              help="Candidate pool CSV (descriptor columns); defaults to "
                   "candidates derivable from the bundled database.")
@click.option("--solutions", "solutions_file", type=click.Path(), default=None,
              help="entrainer_solutions.json (defaults to the output dir).")
def cmd_rank(config, seed, threads, out, pool, solutions_file):
    """Filter and rank candidate entrainers by Taylor-predicted duty."""
    ctx = _init(config, seed, threads, out)
    table, gamma, nrtl = ctx.load_tables()
    template = ctx.template(table, nrtl)
    cfg = ctx.config

    if pool:
        pool_records = _load_pool_csv(pool)
    else:
        pool_records = []
        for row in table.rows:
            if row.cas in cfg.solutes:
                continue
            try:
                pool_records.append(rk.candidate_from_db(
                    row.name, row.cas, table, gamma, template, cfg.pressure))
            except ValidationError:
                continue
    if not pool_records:
        raise ValidationError("empty candidate pool")

    path = solutions_file or ctx.path("entrainer_solutions.json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
        sols = [_solution_from_json(rec, ctx, template) for rec in doc["solutions"]
                if rec["feasible"]]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad solutions file {path}: {exc}") from None
    if not sols:
        raise InfeasibleError("no feasible hypothetical entrainers to expand around")

    filtered = rk.filter_candidates(pool_records, template)
    report = rk.rank_candidates(filtered, sols)
    rows = []
    for rec in report.records:
        rows.append((rec.predicted_rank, rec.name, rec.cas, rec.criterion,
                     rec.mean_duty, *(q for _, q in rec.predicted)))
    mio.write_rows(ctx.path("ranking.csv"),
                   ["rank", "name", "cas", "criterion", "mean_duty_w"]
                   + [f"duty_w_budget_{b}" for b in report.budgets], rows)
    excluded = [(r.name, r.reason) for r in filtered if r.passed is False]
    mio.write_rows(ctx.path("ranking_excluded.csv"), ["name", "reason"], excluded)
    mio.write_summary(ctx.path("ranking_summary.json"), {
        "ranked": [r.name for r in report.records],
        "n_excluded": len(excluded),
        "budgets": list(report.budgets),
    }, ctx.hash)
    click.echo(f"ranked {len(report.records)} candidates "
               f"({len(excluded)} excluded) -> {ctx.out}")


def _load_pool_csv(path):
    import csv

    required = ["name", *optimize.ENTRAINER_FEATURE_NAMES]
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in required if c not in (reader.fieldnames or [])]
            if missing:
                raise ParseError(f"{path}: missing columns {missing}")
            out = []
            for k, rec in enumerate(reader, start=2):
                try:
                    x_e = tuple(float(rec[c]) for c in optimize.ENTRAINER_FEATURE_NAMES)
                except ValueError as exc:
                    raise ParseError(f"{path}:{k}: {exc}") from None
                out.append(rk.CandidateRecord(
                    name=rec["name"], cas=rec.get("cas", ""), x_e=x_e))
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    return out


def _solution_from_json(rec, ctx, template):
    from .flowsheet import ColumnGeometry

    spec = ctx.config.flowsheet_spec()
    return optimize.EntrainerSolution(
        x_e=np.asarray(rec["x_e"]),
        q_reb_total=rec["q_reb_total_w"],
        gradient=np.asarray(rec["gradient"]),
        variables=FlowsheetVariables.from_vector(
            np.asarray(rec["variables"]), spec.n_columns, spec.n_components),
        geometry=tuple(ColumnGeometry(*g) for g in rec["geometry"]),
        budget=rec["budget"],
        kkt_residual=float("nan"),
        feasible=bool(rec["feasible"]))


@cli.command("error-report")
@_common
@click.option("--n-systems", type=int, default=20, show_default=True)
@click.option("--n-samples", type=int, default=1000, show_default=True)
def cmd_error_report(config, seed, threads, out, n_systems, n_samples):
    """Run the fluid-modeling and simulation error studies."""
    ctx = _init(config, seed, threads, out)
    table, gamma, nrtl = ctx.load_tables()
    cfg = ctx.config

    systems = erroranalysis.make_synthetic_reference_systems(
        n_systems, seed=ctx.seed + 20, pressure=cfg.pressure)
    model_study = erroranalysis.model_error_study(systems, cfg.pressure)
    mio.write_rows(ctx.path("model_error_samples.csv"),
                   ["system", "eps_t", "eps_y1", "t_rig_K", "t_mf_K",
                    "delta_t_analytic_K", "delta_t_true_K", "unphysical"],
                   [(s.system, s.eps_t, s.eps_y1, s.t_rig, s.t_mf,
                     s.delta_t_analytic, s.delta_t_true, s.unphysical)
                    for s in model_study.samples])
    _write_hist(ctx.path("model_error_hist.csv"), model_study.hist_eps_t,
                model_study.hist_eps_y, ("eps_t", "eps_y1"))

    ref = mio.reference_package(table, nrtl, list(cfg.solutes), cfg.pressure)
    pkg = features_to_params(extract_features(ref)).package()
    correlation = mio.watson_correlation(table, list(cfg.solutes))
    sim_study = erroranalysis.simulation_error_study(
        pkg, correlation,
        feed=Stream.at_bubble_point(pkg, 0.278, np.array([0.5, 0.5])),
        n_samples=n_samples, seed=ctx.seed + 1000)
    mio.write_rows(ctx.path("simulation_error_samples.csv"),
                   ["n_below", "n_above", "reflux_ratio", "split",
                    "eps_x_bottom", "eps_q_reb"],
                   [(s.n_below, s.n_above, s.reflux_ratio, s.split,
                     s.eps_x_bottom, s.eps_q_reb) for s in sim_study.samples])
    _write_hist(ctx.path("simulation_error_hist.csv"), sim_study.hist_eps_x,
                sim_study.hist_eps_q, ("eps_x_bottom", "eps_q_reb"))

    mio.write_summary(ctx.path("error_report.json"), {
        "model_error": {
            "n_systems": len(model_study.samples),
            "n_failures": len(model_study.failures),
            "outliers": list(model_study.outliers),
            "median_abs_eps_t": model_study.median_abs_eps_t,
            "median_abs_eps_y1": model_study.median_abs_eps_y,
            "analytic_sign_agreement": model_study.sign_agreement,
        },
        "simulation_error": {
            "n_samples": len(sim_study.samples),
            "n_failures": len(sim_study.failures),
            "median_eps_x_bottom": sim_study.median_eps_x,
            "median_eps_q_reb": sim_study.median_eps_q,
        },
    }, ctx.hash)
    click.echo(
        f"model error: median |eps_T|={model_study.median_abs_eps_t:.2e}; "
        f"simulation error: median eps_Q={sim_study.median_eps_q:.2e} "
        f"({len(sim_study.failures)} failures)")


def _write_hist(path, hist_a, hist_b, names):
    edges_a, counts_a = hist_a
    _, counts_b = hist_b
    rows = [(edges_a[k], edges_a[k + 1], counts_a[k], counts_b[k])
            for k in range(len(counts_a))]
    mio.write_rows(path, ["bin_lo", "bin_hi", f"count_{names[0]}",
                          f"count_{names[1]}"], rows)


if __name__ == "__main__":
    sys.exit(main())
