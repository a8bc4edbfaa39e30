"""Candidate screening, duty prediction and ranking.

Real solvents are filtered with the classic entrainer heuristics for a
maximum-boiling separation (highest boiler; medium boiler forming a new
maximum azeotrope with the heavier solute; low boiler forming maximum
azeotropes with both, one hotter than the original azeotrope). Surviving
candidates get a predicted duty per process design from a first-order
expansion of the objective around each hypothetical optimum, the mean over
those optima sorts the pool, and NQ-curve dominance (Copeland scoring over
pairwise majorities) produces the final order. ``sorting_error`` compares
a predicted order against a validation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .feasibility import azeotrope_grid_scan, detect_azeotrope
from .errors import ModelfluidError, ValidationError

# duplicate-of-solute exclusion thresholds
_DUP_TSAT_K = 0.5
_DUP_LN_GAMMA = 0.05


@dataclass(frozen=True)
class CandidateRecord:
    """One candidate solvent moving through the screening pipeline."""

    name: str
    cas: str                     # empty for synthetic candidates
    x_e: tuple                   # 7-entry entrainer descriptor
    gamma_source: str = ""       # provenance of the gamma_inf entries
    passed: bool = None          # filter verdict; None before filtering
    criterion: int = None        # 1 | 2 | 3 when passed
    reason: str = ""
    predicted: tuple = ()        # (budget, predicted duty W) pairs
    mean_duty: float = None      # W
    predicted_rank: int = None
    true_duties: tuple = ()      # (budget, duty W) pairs from validation
    true_rank: int = None

    @property
    def tsat(self):
        return self.x_e[0]


def candidate_from_db(name, cas, table, gamma, template, pressure):
    """Assemble a candidate's descriptor from pure-component data and the
    predicted infinite-dilution activity coefficients.

    The candidate's VLE slope in solute A comes from its own
    vapor-pressure correlation evaluated at the solute's boiling point.
    """
    row = table.get(cas)
    solute_a, solute_b = template_cas_pair(template)
    tsat_e = row.tsat(math.exp(template.ln_p))
    lg_ae = gamma.ln_gamma_inf(solute_a, cas)
    lg_ea = gamma.ln_gamma_inf(cas, solute_a)
    lg_eb = gamma.ln_gamma_inf(cas, solute_b)
    lg_be = gamma.ln_gamma_inf(solute_b, cas)
    slope_ea = math.exp(lg_ea) * row.antoine.psat(template.tsat_a) / pressure
    x_e = (tsat_e, row.dhvap, math.exp(lg_ae), math.exp(lg_ea),
           math.exp(lg_eb), math.exp(lg_be), slope_ea)
    source = gamma.source(cas, solute_a)
    return CandidateRecord(name=name, cas=cas, x_e=x_e, gamma_source=source)


def template_cas_pair(template):
    """CAS identifiers riding on a template, when ingestion attached them."""
    pair = getattr(template, "solute_cas", None)
    if pair is None:
        raise ValidationError("template carries no solute CAS identifiers")
    return pair


def _solute_duplicate(template, x_e):
    """Is the candidate indistinguishable from one of the solutes?"""
    tsat_e = x_e[0]
    ln_ae, ln_ea = math.log(x_e[2]), math.log(x_e[3])
    ln_eb, ln_be = math.log(x_e[4]), math.log(x_e[5])
    if (abs(tsat_e - template.tsat_a) < _DUP_TSAT_K
            and abs(ln_ae) < _DUP_LN_GAMMA and abs(ln_ea) < _DUP_LN_GAMMA):
        return "duplicate of solute A"
    if (abs(tsat_e - template.tsat_b) < _DUP_TSAT_K
            and abs(ln_eb) < _DUP_LN_GAMMA and abs(ln_be) < _DUP_LN_GAMMA):
        return "duplicate of solute B"
    return None


def original_azeotrope_temperature(template, n_points=101):
    """Bubble-temperature maximum of the solute binary."""
    from .features import ModelfluidFeatures, features_to_params

    feats = ModelfluidFeatures(
        tsat=(template.tsat_a, template.tsat_b),
        dhvap=(template.dhvap_a, template.dhvap_b),
        ln_gamma_inf=((0.0, template.ln_gamma_ab), (template.ln_gamma_ba, 0.0)),
        slope=((0.0, template.slope_ab), (template.slope_ba, 0.0)),
        ln_p=template.ln_p)
    pkg = features_to_params(feats).package()
    exists, kind, t_az, _ = azeotrope_grid_scan(pkg, 0, 1, n_points)
    if not exists or kind != "maximum-boiling":
        raise ValidationError(
            "solute pair shows no maximum-boiling azeotrope; "
            "filter criteria do not apply")
    return t_az


def _new_max_azeotrope(pkg, i, j, n_points=101):
    """Endpoint-slope detector cross-checked against a coarse grid scan
    (the detector alone can fire on unphysical VLE shapes)."""
    report = detect_azeotrope(pkg, i, j)
    if not (report.exists and report.kind == "maximum-boiling"):
        return False, float("nan")
    exists, kind, t_az, _ = azeotrope_grid_scan(pkg, i, j, n_points)
    return (exists and kind == "maximum-boiling"), t_az


def filter_candidates(pool, template, n_scan=101):
    """Apply the three entrainer criteria; every candidate comes back with
    a verdict, evaluation failures are recorded as exclusions."""
    t_az_orig = original_azeotrope_temperature(template, n_scan)
    heavy_first = template.tsat_b >= template.tsat_a
    t_lo = min(template.tsat_a, template.tsat_b)
    t_hi = max(template.tsat_a, template.tsat_b)
    out = []
    for rec in pool:
        try:
            dup = _solute_duplicate(template, rec.x_e)
            if dup:
                out.append(replace(rec, passed=False, reason=dup))
                continue
            tsat_e = rec.x_e[0]
            if tsat_e > t_hi:
                out.append(replace(rec, passed=True, criterion=1,
                                   reason="highest boiler"))
                continue
            pkg = template.package(np.asarray(rec.x_e))
            # component order in the ternary package: (A, E, B)
            heavy_idx = 2 if heavy_first else 0
            light_idx = 0 if heavy_first else 2
            if t_lo < tsat_e < t_hi:
                has_az, _ = _new_max_azeotrope(pkg, 1, heavy_idx, n_scan)
                if has_az:
                    out.append(replace(
                        rec, passed=True, criterion=2,
                        reason="medium boiler, new maximum azeotrope with "
                               "the heavy solute"))
                else:
                    out.append(replace(
                        rec, passed=False,
                        reason="medium boiler without a new maximum azeotrope"))
                continue
            # low boiler: maximum azeotropes with both solutes, at least one
            # hotter than the original azeotrope
            az_heavy, t_heavy = _new_max_azeotrope(pkg, 1, heavy_idx, n_scan)
            az_light, t_light = _new_max_azeotrope(pkg, 1, light_idx, n_scan)
            if az_heavy and az_light and max(t_heavy, t_light) > t_az_orig:
                out.append(replace(
                    rec, passed=True, criterion=3,
                    reason="low boiler, new maximum azeotropes with both solutes"))
            else:
                out.append(replace(
                    rec, passed=False,
                    reason="low boiler without the required azeotropes"))
        except (ModelfluidError, ValueError) as exc:
            out.append(replace(rec, passed=False,
                               reason=f"evaluation failed: {exc}"))
    return out


# ---------------------------------------------------------------------------
# Duty prediction and ranking
# ---------------------------------------------------------------------------

def predict_duty(x_e, solution):
    """First-order duty prediction around one hypothetical optimum."""
    x_e = np.asarray(x_e, dtype=float)
    if x_e.shape != solution.x_e.shape:
        raise ValueError("descriptor length mismatch")
    return float(solution.q_reb_total
                 + solution.gradient @ (x_e - solution.x_e))


def mean_predicted_duty(x_e, solutions):
    """Arithmetic mean of the per-optimum predictions."""
    if not solutions:
        raise ValueError("need at least one hypothetical optimum")
    return float(np.mean([predict_duty(x_e, s) for s in solutions]))


def predicted_curve(x_e, solutions):
    """(budget, predicted duty) pairs - the candidate's predicted NQ curve."""
    return tuple((s.budget, predict_duty(x_e, s)) for s in solutions)


@dataclass(frozen=True)
class RankingReport:
    records: tuple        # CandidateRecord with predicted ranks, best first
    budgets: tuple

    def order(self):
        return tuple(r.name for r in self.records)


def _copeland_order(names, curves, mean_duties):
    """Total order from pairwise NQ-curve majorities: wins minus losses,
    ties broken by mean predicted duty, then name."""
    n = len(names)
    score = {nm: 0 for nm in names}
    for i in range(n):
        for j in range(i + 1, n):
            below_i = sum(1 for (qi, qj) in zip(curves[i], curves[j]) if qi < qj)
            below_j = sum(1 for (qi, qj) in zip(curves[i], curves[j]) if qj < qi)
            if below_i > below_j:
                score[names[i]] += 1
                score[names[j]] -= 1
            elif below_j > below_i:
                score[names[j]] += 1
                score[names[i]] -= 1
    keyed = sorted(range(n), key=lambda k: (-score[names[k]], mean_duties[k],
                                            names[k]))
    return keyed, score


def rank_candidates(pool, solutions):
    """Rank a candidate pool against a set of hypothetical optima.

    Produces per-candidate predicted curves, mean duties and a total order
    by Copeland score over pairwise curve dominance.
    """
    records = [r for r in pool if r.passed is not False]
    if not records:
        raise ValueError("no candidates to rank")
    budgets = tuple(s.budget for s in solutions)
    names = [r.name for r in records]
    curves = []
    means = []
    enriched = []
    for r in records:
        curve = predicted_curve(r.x_e, solutions)
        curves.append([q for _, q in curve])
        mean_q = mean_predicted_duty(r.x_e, solutions)
        means.append(mean_q)
        enriched.append(replace(r, predicted=curve, mean_duty=mean_q))
    order, _ = _copeland_order(names, curves, means)
    ranked = []
    for rank, k in enumerate(order, start=1):
        ranked.append(replace(enriched[k], predicted_rank=rank))
    return RankingReport(records=tuple(ranked), budgets=budgets)


def rank_by_curves(names, curves, mean_duties):
    """Copeland ranking of pre-computed curves: name -> rank (1 = best)."""
    order, _ = _copeland_order(list(names), list(curves), list(mean_duties))
    return {names[k]: rank for rank, k in enumerate(order, start=1)}


@dataclass(frozen=True)
class SortingErrorReport:
    names: tuple
    errors: tuple         # true rank - predicted rank per name
    mean_abs_error: float
    top_k: int
    top_k_overlap: int


def sorting_error(predicted_order, true_order, top_k=3):
    """Per-candidate (true - predicted) rank differences plus summary."""
    if set(predicted_order) != set(true_order):
        raise ValidationError("ranking candidate sets differ")
    pred_rank = {nm: k + 1 for k, nm in enumerate(predicted_order)}
    true_rank = {nm: k + 1 for k, nm in enumerate(true_order)}
    names = tuple(predicted_order)
    errors = tuple(true_rank[nm] - pred_rank[nm] for nm in names)
    overlap = len(set(predicted_order[:top_k]) & set(true_order[:top_k]))
    return SortingErrorReport(
        names=names,
        errors=errors,
        mean_abs_error=float(np.mean([abs(e) for e in errors])),
        top_k=top_k,
        top_k_overlap=overlap)
