"""The reduced fluid representation: VLE features and their parameter map.

A fluid is described by physically interpretable features: per component
the boiling temperature at system pressure and the vaporization enthalpy,
per ordered pair the infinite-dilution activity coefficient and the
infinite-dilution VLE slope, plus ln(p). ``extract_features`` reads them
off any reference package; ``features_to_params`` maps them explicitly
onto Margules coefficients and two-parameter Antoine pairs:

    theta2_i = [ln(slope_ij) - ln(gamma_i|j)] / (1/tsat_j - 1/tsat_i)
    theta1_i = ln(p) - theta2_i / tsat_i
    a_ij     = ln(gamma_i|j)

For three components the pure-component vapor-pressure parameters must not
depend on which binary pair they were derived from; that consistency
constraint removes one slope per component (19 raw entries, 16
independent) and is enforced by ``reduce_ternary_features``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFeaturesError
from .thermo import (
    EnthalpyModel,
    MargulesBinary,
    MargulesTernary,
    SimplifiedAntoine,
)
from .vle import FluidPackage

_TSAT_RANGE = (150.0, 1000.0)  # K
_DEGENERATE_TOL = 1e-12        # on |1/tsat_j - 1/tsat_i|, 1/K


def _as_matrix(values, n, name):
    m = np.asarray(values, dtype=float)
    if m.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
    if np.any(np.diag(m) != 0.0):
        raise ValueError(f"diagonal of {name} must be zero")
    return m


@dataclass(frozen=True)
class ModelfluidFeatures:
    """Feature vector of a 2- or 3-component system.

    ``ln_gamma_inf[i][j]`` and ``slope[i][j]`` describe component i at
    infinite dilution in component j; diagonals are zero placeholders.
    """

    tsat: tuple          # K per component
    dhvap: tuple         # J/mol per component
    ln_gamma_inf: tuple  # n x n, dimensionless
    slope: tuple         # n x n, dimensionless, > 0 off-diagonal
    ln_p: float          # ln(Pa)

    def __post_init__(self):
        tsat = tuple(float(v) for v in self.tsat)
        n = len(tsat)
        if n not in (2, 3):
            raise ValueError(f"feature sets cover 2 or 3 components, got {n}")
        if len(self.dhvap) != n:
            raise ValueError("dhvap length mismatch")
        lg = _as_matrix(self.ln_gamma_inf, n, "ln_gamma_inf")
        sl = _as_matrix(self.slope, n, "slope")
        for t in tsat:
            if not (_TSAT_RANGE[0] <= t <= _TSAT_RANGE[1]):
                raise ValueError(f"tsat {t} K outside {_TSAT_RANGE}")
        for i in range(n):
            for j in range(n):
                if i != j and sl[i, j] <= 0.0:
                    raise ValueError(f"slope[{i}][{j}] must be positive, got {sl[i, j]}")
        if not math.isfinite(self.ln_p):
            raise ValueError("ln_p must be finite")
        object.__setattr__(self, "tsat", tsat)
        object.__setattr__(self, "dhvap", tuple(float(v) for v in self.dhvap))
        object.__setattr__(self, "ln_gamma_inf", tuple(map(tuple, lg)))
        object.__setattr__(self, "slope", tuple(map(tuple, sl)))

    @property
    def n_components(self):
        return len(self.tsat)

    @property
    def n_raw_entries(self):
        n = self.n_components
        return 2 * n + 2 * n * (n - 1) + 1

    @property
    def n_independent_entries(self):
        # one slope per component is fixed by the pure-component consistency
        # constraint in the ternary case
        n = self.n_components
        return self.n_raw_entries - (n if n == 3 else 0)

    @property
    def pressure(self):
        return math.exp(self.ln_p)


@dataclass(frozen=True)
class ModelfluidParams:
    """Simulation-ready parameters produced from a feature set.

    ``nonphysical`` lists components whose theta2 came out >= 0 (vapor
    pressure not increasing with temperature); such parameter sets are kept
    evaluable so optimizers can move away from them, but are flagged.
    """

    margules: object               # MargulesBinary or MargulesTernary
    antoine: tuple                 # SimplifiedAntoine per component
    enthalpy: EnthalpyModel
    pressure: float                # Pa
    nonphysical: tuple = ()        # component indices with theta2 >= 0

    @property
    def n_components(self):
        return self.margules.n_components

    def package(self):
        return FluidPackage(
            activity=self.margules,
            vapor_pressure=self.antoine,
            enthalpy=self.enthalpy,
            pressure=self.pressure)


def _theta2_pairs(n):
    """For each component the solvent pairs that can produce theta2."""
    return {i: [j for j in range(n) if j != i] for i in range(n)}


def _theta2_from(f, i, j):
    """theta2 of component i derived from its pair with solvent j."""
    inv_diff = 1.0 / f.tsat[j] - 1.0 / f.tsat[i]
    if abs(inv_diff) < _DEGENERATE_TOL:
        raise DegenerateFeaturesError(
            f"components {i} and {j} boil at the same temperature "
            f"({f.tsat[i]} K); theta2 is undetermined")
    return (math.log(f.slope[i][j]) - f.ln_gamma_inf[i][j]) / inv_diff


def preferred_solvent(f, i):
    """Solvent pair used for component i's theta2: the better-conditioned
    one (larger |1/tsat_j - 1/tsat_i|)."""
    candidates = [j for j in range(f.n_components) if j != i]
    return max(candidates,
               key=lambda j: abs(1.0 / f.tsat[j] - 1.0 / f.tsat[i]))


def extract_features(reference, p=None):
    """Read the feature vector off a reference package's VLE.

    tsat_i solves psat_i(T) = p; the infinite-dilution quantities are
    evaluated analytically at the exact limit (no small-x extrapolation):
    ln_gamma_inf_ij at (x_i -> 0, T = tsat_j) and
    slope_ij = gamma_inf_ij * psat_i(tsat_j) / p. Enthalpies are copied
    from the reference data.
    """
    if p is None:
        p = reference.pressure
    elif p != reference.pressure:
        raise ValueError(
            f"feature pressure {p} Pa differs from package pressure "
            f"{reference.pressure} Pa")
    n = reference.n_components
    tsat = [reference.tsat_pure(i) for i in range(n)]
    lg = np.zeros((n, n))
    sl = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if reference.activity.temperature_dependent:
                lg[i, j] = reference.activity.ln_gamma_inf(i, j, tsat[j])
            else:
                lg[i, j] = reference.activity.ln_gamma_inf(i, j)
            sl[i, j] = math.exp(lg[i, j]) * reference.psat(i, tsat[j]) / p
    return ModelfluidFeatures(
        tsat=tuple(tsat),
        dhvap=reference.enthalpy.dhvap,
        ln_gamma_inf=tuple(map(tuple, lg)),
        slope=tuple(map(tuple, sl)),
        ln_p=math.log(p))


def features_to_params(f):
    """Explicit map from features to Margules + simplified Antoine.

    For three components, theta2_i is taken from the better-conditioned
    solvent pair; run ``reduce_ternary_features`` first if the raw set may
    be inconsistent. Raises DegenerateFeaturesError on coinciding boiling
    points; theta2 >= 0 is flagged, not fatal.
    """
    n = f.n_components
    p = f.pressure
    nonphysical = []
    antoine = []
    for i in range(n):
        j = preferred_solvent(f, i)
        theta2 = _theta2_from(f, i, j)
        if theta2 >= 0.0:
            nonphysical.append(i)
        theta1 = f.ln_p - theta2 / f.tsat[i]
        antoine.append(SimplifiedAntoine(theta1=theta1, theta2=theta2))
    if n == 2:
        margules = MargulesBinary(a_12=f.ln_gamma_inf[0][1], a_21=f.ln_gamma_inf[1][0])
    else:
        margules = MargulesTernary(a=f.ln_gamma_inf, c=0.0)
    return ModelfluidParams(
        margules=margules,
        antoine=tuple(antoine),
        enthalpy=EnthalpyModel(dhvap=f.dhvap),
        pressure=p,
        nonphysical=tuple(nonphysical))


def params_to_features(params):
    """Inverse of ``features_to_params`` on its image."""
    n = params.n_components
    p = params.pressure
    ln_p = math.log(p)
    tsat = [vp.tsat(p) for vp in params.antoine]
    lg = np.zeros((n, n))
    sl = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            lg[i, j] = params.margules.ln_gamma_inf(i, j)
            sl[i, j] = math.exp(lg[i, j]) * params.antoine[i].psat(tsat[j]) / p
    return ModelfluidFeatures(
        tsat=tuple(tsat),
        dhvap=params.enthalpy.dhvap,
        ln_gamma_inf=tuple(map(tuple, lg)),
        slope=tuple(map(tuple, sl)),
        ln_p=ln_p)


@dataclass(frozen=True)
class ReductionReport:
    """What the ternary consistency reduction changed.

    One entry per component: (component, kept solvent, recomputed solvent,
    old slope, new slope).
    """

    adjustments: tuple

    @property
    def n_overwritten(self):
        return sum(1 for adj in self.adjustments if adj[3] != adj[4])

    @property
    def max_abs_change(self):
        return max((abs(adj[4] - adj[3]) for adj in self.adjustments), default=0.0)


def reduce_ternary_features(f):
    """Restore pure-component consistency of a raw ternary feature set.

    For each component i with solvents j and k, both slopes imply a theta2;
    the slope of the better-conditioned pair is kept and the other is
    recomputed from it, overwriting exactly one slope per component.
    Idempotent, and the identity on already-consistent inputs.
    """
    if f.n_components != 3:
        raise ValueError("reduction applies to ternary feature sets")
    sl = np.array(f.slope)
    adjustments = []
    for i in range(3):
        j = preferred_solvent(f, i)
        k = next(m for m in range(3) if m not in (i, j))
        theta2 = _theta2_from(f, i, j)
        inv_diff_k = 1.0 / f.tsat[k] - 1.0 / f.tsat[i]
        new_slope = math.exp(f.ln_gamma_inf[i][k] + theta2 * inv_diff_k)
        adjustments.append((i, j, k, float(sl[i, k]), new_slope))
        sl[i, k] = new_slope
    reduced = ModelfluidFeatures(
        tsat=f.tsat,
        dhvap=f.dhvap,
        ln_gamma_inf=f.ln_gamma_inf,
        slope=tuple(map(tuple, sl)),
        ln_p=f.ln_p)
    return reduced, ReductionReport(adjustments=tuple(adjustments))


def theta2_spread(f, i):
    """Largest disagreement between the theta2 values implied by component
    i's solvent pairs; zero for a consistent ternary set."""
    values = [_theta2_from(f, i, j) for j in range(f.n_components) if j != i]
    return max(values) - min(values)


# ---------------------------------------------------------------------------
# Entrainer feature completion
# ---------------------------------------------------------------------------

# free entrainer descriptor: boiling point, enthalpy, the four gammas with
# the solutes and the entrainer-in-solute-A slope; the remaining three
# slopes follow from the pure-component consistency constraints
ENTRAINER_FEATURE_NAMES = (
    "tsat_e", "dhvap_e",
    "gamma_a_in_e", "gamma_e_in_a", "gamma_e_in_b", "gamma_b_in_e",
    "slope_e_in_a",
)


@dataclass(frozen=True)
class EntrainerTemplate:
    """Fixed solute-pair data for entrainer studies.

    Components are ordered (solute A, entrainer, solute B). The solute
    binary fixes theta2 of both solutes, so of the six ternary slopes only
    the entrainer's slope in solute A remains free: together with the
    boiling point, the enthalpy and the four solute/entrainer gammas that
    makes the seven-entry entrainer descriptor.
    """

    tsat_a: float        # K
    tsat_b: float        # K
    dhvap_a: float       # J/mol
    dhvap_b: float       # J/mol
    ln_gamma_ab: float   # ln gamma of A at infinite dilution in B
    ln_gamma_ba: float
    slope_ab: float      # VLE slope of A at infinite dilution in B
    slope_ba: float
    ln_p: float          # ln(Pa)
    solute_cas: tuple = None  # optional (CAS of A, CAS of B) from ingestion

    @classmethod
    def from_solute_features(cls, f, solute_cas=None):
        """Build from a binary (A, B) feature set."""
        if f.n_components != 2:
            raise ValueError("solute template needs a binary feature set")
        return cls(
            tsat_a=f.tsat[0], tsat_b=f.tsat[1],
            dhvap_a=f.dhvap[0], dhvap_b=f.dhvap[1],
            ln_gamma_ab=f.ln_gamma_inf[0][1], ln_gamma_ba=f.ln_gamma_inf[1][0],
            slope_ab=f.slope[0][1], slope_ba=f.slope[1][0],
            ln_p=f.ln_p, solute_cas=tuple(solute_cas) if solute_cas else None)

    def theta2_solutes(self):
        ia = 1.0 / self.tsat_b - 1.0 / self.tsat_a
        if abs(ia) < _DEGENERATE_TOL:
            raise DegenerateFeaturesError("solutes boil at the same temperature")
        th2_a = (math.log(self.slope_ab) - self.ln_gamma_ab) / ia
        th2_b = (math.log(self.slope_ba) - self.ln_gamma_ba) / (-ia)
        return th2_a, th2_b

    def features(self, x_e):
        """The full, consistent ternary feature set for an entrainer
        descriptor (see ENTRAINER_FEATURE_NAMES; gammas and slope as plain
        values, not logs)."""
        x_e = np.asarray(x_e, dtype=float)
        if x_e.shape != (7,):
            raise ValueError(f"entrainer descriptor must have 7 entries, got {x_e.shape}")
        tsat_e, dh_e, g_ae, g_ea, g_eb, g_be, s_ea = (float(v) for v in x_e)
        if min(g_ae, g_ea, g_eb, g_be, s_ea) <= 0.0:
            raise ValueError("gammas and slopes must be positive")
        th2_a, th2_b = self.theta2_solutes()
        inv_ea = 1.0 / self.tsat_a - 1.0 / tsat_e
        if abs(inv_ea) < _DEGENERATE_TOL:
            raise DegenerateFeaturesError("entrainer boils with solute A")
        inv_eb = 1.0 / self.tsat_b - 1.0 / tsat_e
        if abs(inv_eb) < _DEGENERATE_TOL:
            raise DegenerateFeaturesError("entrainer boils with solute B")
        th2_e = (math.log(s_ea) - math.log(g_ea)) / inv_ea
        # consistency-determined slopes
        s_ae = math.exp(math.log(g_ae) + th2_a * (1.0 / tsat_e - 1.0 / self.tsat_a))
        s_be = math.exp(math.log(g_be) + th2_b * (1.0 / tsat_e - 1.0 / self.tsat_b))
        s_eb = math.exp(math.log(g_eb) + th2_e * inv_eb)
        lg = ((0.0, math.log(g_ae), self.ln_gamma_ab),
              (math.log(g_ea), 0.0, math.log(g_eb)),
              (self.ln_gamma_ba, math.log(g_be), 0.0))
        sl = ((0.0, s_ae, self.slope_ab),
              (s_ea, 0.0, s_eb),
              (self.slope_ba, s_be, 0.0))
        return ModelfluidFeatures(
            tsat=(self.tsat_a, tsat_e, self.tsat_b),
            dhvap=(self.dhvap_a, dh_e, self.dhvap_b),
            ln_gamma_inf=lg,
            slope=sl,
            ln_p=self.ln_p)

    def package(self, x_e):
        """FluidPackage for an entrainer descriptor."""
        return features_to_params(self.features(x_e)).package()

    def descriptor_from_features(self, f):
        """Extract the 7-entry descriptor from a consistent ternary set
        (components ordered solute A, entrainer, solute B)."""
        if f.n_components != 3:
            raise ValueError("need a ternary feature set")
        return np.array([
            f.tsat[1], f.dhvap[1],
            math.exp(f.ln_gamma_inf[0][1]), math.exp(f.ln_gamma_inf[1][0]),
            math.exp(f.ln_gamma_inf[1][2]), math.exp(f.ln_gamma_inf[2][1]),
            f.slope[1][0],
        ])
