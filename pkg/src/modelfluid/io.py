"""Data ingestion, result persistence and run configuration.

File contracts (all bundled fixtures live in ``modelfluid/data``):

``components.csv`` - 9 required columns::

    name, cas, antoine_c1..antoine_c5, antoine_t_range ("tmin:tmax", K),
    dhvap_j_mol

  plus the optional ``hvap_watson`` column ("t_crit:exponent") carrying a
  temperature-dependent vaporization-enthalpy correlation. Vapor-pressure
  coefficients are the five-constant extended Antoine form in ln(Pa); the
  correlation is validated monotone increasing over its range at load time.

``gamma_inf.csv`` - 4 columns: ``solute_cas, solvent_cas, ln_gamma_inf,
source`` (``database`` or ``ml-predicted``). Long form of the predicted
infinite-dilution matrix; diagonals are not stored.

``nrtl.csv`` - pairwise reference-model parameters: ``cas_i, cas_j, a_ij,
a_ji, b_ij, b_ji, alpha`` with tau_ij(T) = a_ij + b_ij/T.

``config.json`` - run configuration validated against
``config.schema.json``; see that file for the authoritative schema.

Result writers emit CSV rows plus a JSON summary; every output embeds the
configuration hash and the toolkit version for provenance.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import re
from dataclasses import dataclass
from importlib import resources

import jsonschema

from . import __version__
from .errors import ParseError, ValidationError
from .flowsheet import ColumnGeometry, ColumnWiring, FlowsheetSpec, FlowsheetWiring, default_wiring
from .thermo import EnthalpyModel, ExtendedAntoine, NrtlBinary, NrtlModel, WatsonEnthalpy
from .vle import FluidPackage

_CAS_RE = re.compile(r"^(\d{2,7})-(\d{2})-(\d)$")


def validate_cas(cas):
    """Check CAS registry number format and check digit; returns the
    normalized string or raises ValidationError."""
    m = _CAS_RE.match(cas.strip())
    if not m:
        raise ValidationError(f"malformed CAS number {cas!r}")
    digits = (m.group(1) + m.group(2))[::-1]
    total = sum(int(d) * (k + 1) for k, d in enumerate(digits))
    if total % 10 != int(m.group(3)):
        raise ValidationError(
            f"CAS {cas!r} fails its check digit ({total % 10} expected)")
    return m.group(0)


@dataclass(frozen=True)
class ComponentRow:
    """One pure component: identifiers, vapor-pressure correlation and
    vaporization-enthalpy data."""

    name: str
    cas: str
    antoine: ExtendedAntoine
    dhvap: float                  # J/mol at the boiling point
    watson_t_crit: float = None   # K; None when no correlation is given
    watson_exponent: float = None

    @property
    def has_enthalpy_correlation(self):
        return self.watson_t_crit is not None

    def tsat(self, p):
        return self.antoine.tsat(p)


@dataclass(frozen=True)
class ComponentTable:
    rows: tuple

    def __post_init__(self):
        by_cas = {}
        for row in self.rows:
            if row.cas in by_cas:
                raise ValidationError(f"duplicate CAS {row.cas} in component table")
            by_cas[row.cas] = row
        object.__setattr__(self, "_by_cas", by_cas)

    def __len__(self):
        return len(self.rows)

    def __contains__(self, cas):
        return cas in self._by_cas

    def get(self, cas):
        try:
            return self._by_cas[cas]
        except KeyError:
            raise ValidationError(f"CAS {cas} not in component table") from None


@dataclass(frozen=True)
class GammaInfMatrix:
    """Sparse ln(gamma_inf) entries keyed by (solute CAS, solvent CAS)."""

    entries: tuple  # ((solute, solvent, value, source), ...)

    def __post_init__(self):
        data = {}
        for solute, solvent, value, source in self.entries:
            if solute == solvent:
                raise ValidationError(f"diagonal gamma entry for {solute}")
            if (solute, solvent) in data:
                raise ValidationError(f"duplicate gamma entry {solute}|{solvent}")
            data[(solute, solvent)] = (value, source)
        object.__setattr__(self, "_data", data)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, pair):
        return tuple(pair) in self._data

    def ln_gamma_inf(self, solute, solvent):
        try:
            return self._data[(solute, solvent)][0]
        except KeyError:
            raise ValidationError(
                f"no gamma_inf prediction for {solute} in {solvent}") from None

    def source(self, solute, solvent):
        return self._data[(solute, solvent)][1]


def _parse_float(text, path, line, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"{path}:{line}: column {column!r}: {text!r} is not a number") from None


def _read_rows(path, required):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        return list(reader), reader.fieldnames


def load_component_db(path):
    """Read and validate a component table CSV."""
    required = ["name", "cas", "antoine_c1", "antoine_c2", "antoine_c3",
                "antoine_c4", "antoine_c5", "antoine_t_range", "dhvap_j_mol"]
    raw, _ = _read_rows(path, required)
    rows = []
    for k, rec in enumerate(raw, start=2):
        cas = validate_cas(rec["cas"])
        rng = rec["antoine_t_range"].split(":")
        if len(rng) != 2:
            raise ParseError(
                f"{path}:{k}: antoine_t_range must be 'tmin:tmax', got "
                f"{rec['antoine_t_range']!r}")
        t_min = _parse_float(rng[0], path, k, "antoine_t_range")
        t_max = _parse_float(rng[1], path, k, "antoine_t_range")
        antoine = ExtendedAntoine(
            c1=_parse_float(rec["antoine_c1"], path, k, "antoine_c1"),
            c2=_parse_float(rec["antoine_c2"], path, k, "antoine_c2"),
            c3=_parse_float(rec["antoine_c3"], path, k, "antoine_c3"),
            c4=_parse_float(rec["antoine_c4"], path, k, "antoine_c4"),
            c5=_parse_float(rec["antoine_c5"], path, k, "antoine_c5"),
            t_min=t_min, t_max=t_max)
        try:
            antoine.validate_monotone()
        except ValueError as exc:
            raise ValidationError(f"{path}:{k} ({rec['name']}): {exc}") from None
        watson_tc = watson_exp = None
        extra = (rec.get("hvap_watson") or "").strip()
        if extra:
            parts = extra.split(":")
            if len(parts) != 2:
                raise ParseError(
                    f"{path}:{k}: hvap_watson must be 't_crit:exponent'")
            watson_tc = _parse_float(parts[0], path, k, "hvap_watson")
            watson_exp = _parse_float(parts[1], path, k, "hvap_watson")
        dh = _parse_float(rec["dhvap_j_mol"], path, k, "dhvap_j_mol")
        if dh <= 0.0:
            raise ValidationError(f"{path}:{k}: dhvap must be positive")
        rows.append(ComponentRow(
            name=rec["name"], cas=cas, antoine=antoine, dhvap=dh,
            watson_t_crit=watson_tc, watson_exponent=watson_exp))
    return ComponentTable(rows=tuple(rows))


def save_component_db(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "cas", "antoine_c1", "antoine_c2", "antoine_c3",
                    "antoine_c4", "antoine_c5", "antoine_t_range",
                    "dhvap_j_mol", "hvap_watson"])
        for r in table.rows:
            a = r.antoine
            watson = (f"{r.watson_t_crit!r}:{r.watson_exponent!r}"
                      if r.has_enthalpy_correlation else "")
            w.writerow([r.name, r.cas, repr(a.c1), repr(a.c2), repr(a.c3),
                        repr(a.c4), repr(a.c5), f"{a.t_min!r}:{a.t_max!r}",
                        repr(r.dhvap), watson])


def load_gamma_matrix(path):
    required = ["solute_cas", "solvent_cas", "ln_gamma_inf", "source"]
    raw, _ = _read_rows(path, required)
    entries = []
    for k, rec in enumerate(raw, start=2):
        solute = validate_cas(rec["solute_cas"])
        solvent = validate_cas(rec["solvent_cas"])
        value = _parse_float(rec["ln_gamma_inf"], path, k, "ln_gamma_inf")
        entries.append((solute, solvent, value, rec["source"].strip()))
    return GammaInfMatrix(entries=tuple(entries))


def save_gamma_matrix(path, matrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solute_cas", "solvent_cas", "ln_gamma_inf", "source"])
        for solute, solvent, value, source in matrix.entries:
            w.writerow([solute, solvent, repr(value), source])


def load_nrtl_table(path):
    """Pairwise NRTL parameters keyed by frozenset-free ordered pair."""
    required = ["cas_i", "cas_j", "a_ij", "a_ji", "b_ij", "b_ji", "alpha"]
    raw, _ = _read_rows(path, required)
    pairs = {}
    for k, rec in enumerate(raw, start=2):
        ci = validate_cas(rec["cas_i"])
        cj = validate_cas(rec["cas_j"])
        key = (ci, cj)
        if key in pairs or (cj, ci) in pairs:
            raise ValidationError(f"{path}:{k}: duplicate NRTL pair {ci}/{cj}")
        pairs[key] = NrtlBinary(
            a_12=_parse_float(rec["a_ij"], path, k, "a_ij"),
            a_21=_parse_float(rec["a_ji"], path, k, "a_ji"),
            b_12=_parse_float(rec["b_ij"], path, k, "b_ij"),
            b_21=_parse_float(rec["b_ji"], path, k, "b_ji"),
            alpha=_parse_float(rec["alpha"], path, k, "alpha"))
    return pairs


# ---------------------------------------------------------------------------
# Bundled data and package builders
# ---------------------------------------------------------------------------

DATA_DIR_ENV = "MODELFLUID_DATA"


def data_path(name):
    """Path of a bundled (or, via $MODELFLUID_DATA, external) data file."""
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        cand = os.path.join(override, name)
        if os.path.exists(cand):
            return cand
    return str(resources.files("modelfluid.data") / name)


def reference_package(table, nrtl_pairs, cas_list, pressure):
    """NRTL + extended-Antoine reference package for the given components."""
    rows = [table.get(c) for c in cas_list]
    n = len(rows)
    pair_map = {}
    for i in range(n):
        for j in range(i + 1, n):
            ci, cj = rows[i].cas, rows[j].cas
            if (ci, cj) in nrtl_pairs:
                pair_map[(i, j)] = nrtl_pairs[(ci, cj)]
            elif (cj, ci) in nrtl_pairs:
                b = nrtl_pairs[(cj, ci)]
                pair_map[(i, j)] = NrtlBinary(a_12=b.a_21, a_21=b.a_12,
                                              b_12=b.b_21, b_21=b.b_12,
                                              alpha=b.alpha)
            else:
                raise ValidationError(f"no NRTL pair for {ci}/{cj}")
    return FluidPackage(
        activity=NrtlModel.from_pairs(n, pair_map),
        vapor_pressure=tuple(r.antoine for r in rows),
        enthalpy=EnthalpyModel(dhvap=tuple(r.dhvap for r in rows)),
        pressure=pressure)


def margules_reference_package(table, gamma, cas_list, pressure):
    """Margules(predicted gamma_inf) + extended-Antoine package: the
    candidate workflow's thermodynamic model ahead of feature extraction.

    The predicted ln(gamma_inf) entries parameterize the Margules model
    directly; boiling-point-dependent slopes then come out of the VLE.
    """
    from .thermo import MargulesBinary, MargulesTernary
    import numpy as np

    rows = [table.get(c) for c in cas_list]
    n = len(rows)
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                a[i, j] = gamma.ln_gamma_inf(rows[i].cas, rows[j].cas)
    if n == 2:
        act = MargulesBinary(a_12=a[0, 1], a_21=a[1, 0])
    else:
        act = MargulesTernary(a=tuple(map(tuple, a)), c=0.0)
    return FluidPackage(
        activity=act,
        vapor_pressure=tuple(r.antoine for r in rows),
        enthalpy=EnthalpyModel(dhvap=tuple(r.dhvap for r in rows)),
        pressure=pressure)


def watson_correlation(table, cas_list, fallback_exponent=0.38):
    """Watson enthalpy correlation for the listed components, anchored at
    their boiling points; components without correlation data fall back to
    the 1.5*tsat critical-temperature heuristic."""
    rows = [table.get(c) for c in cas_list]
    t_ref = []
    t_crit = []
    exps = set()
    for r in rows:
        tb = r.antoine.tsat(1e5)
        t_ref.append(tb)
        if r.has_enthalpy_correlation:
            t_crit.append(r.watson_t_crit)
            exps.add(r.watson_exponent)
        else:
            t_crit.append(1.5 * tb)
    exponent = exps.pop() if len(exps) == 1 else fallback_exponent
    return WatsonEnthalpy(
        dh_ref=tuple(r.dhvap for r in rows),
        t_ref=tuple(t_ref),
        t_crit=tuple(t_crit),
        exponent=exponent)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; see config.schema.json."""

    solutes: tuple          # two CAS numbers (light, heavy)
    entrainer: str          # CAS or "hypothetical"
    pressure: float         # Pa
    feed_flow: float        # mol/s
    feed_x: tuple
    purity_min: tuple
    product_key: tuple
    flow_min: float         # mol/s
    geometry: tuple         # ColumnGeometry per column
    wiring: FlowsheetWiring
    budgets: tuple
    method: str
    max_iter: int
    binary_stability_grid: int
    ternary_stability_grid: int
    seed: int
    output_dir: str
    raw: dict               # the original JSON document

    def flowsheet_spec(self):
        return FlowsheetSpec(
            feed_flow=self.feed_flow,
            feed_x=self.feed_x,
            pressure=self.pressure,
            geometry=self.geometry,
            wiring=self.wiring,
            product_key=self.product_key,
            purity_min=self.purity_min,
            flow_min=self.flow_min)

    def config_hash(self):
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def _schema():
    with open(data_path("config.schema.json")) as fh:
        return json.load(fh)


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"{path}: {exc.message} (at {list(exc.absolute_path)})") from None

    for cas in doc["system"]["solutes"]:
        validate_cas(cas)
    entrainer = doc["system"]["entrainer"]
    if entrainer != "hypothetical":
        validate_cas(entrainer)

    fs = doc["flowsheet"]
    wiring_doc = fs.get("wiring")
    if wiring_doc is None:
        wiring = default_wiring()
    else:
        try:
            wiring = FlowsheetWiring(
                columns=tuple(ColumnWiring(feed_source=c["feed_source"],
                                           product_side=c["product_side"])
                              for c in wiring_doc["columns"]),
                recycle_column=wiring_doc["recycle_column"])
        except ValueError as exc:
            raise ValidationError(f"{path}: bad wiring: {exc}") from None
    try:
        geometry = tuple(ColumnGeometry(n_below=g[0], n_above=g[1])
                         for g in fs["geometry"])
    except ValueError as exc:
        raise ValidationError(f"{path}: bad geometry: {exc}") from None

    opt = doc.get("optimizer", {})
    return RunConfig(
        solutes=tuple(doc["system"]["solutes"]),
        entrainer=entrainer,
        pressure=float(doc["pressure_pa"]),
        feed_flow=float(fs["feed"]["flow_mol_s"]),
        feed_x=tuple(fs["feed"]["composition"]),
        purity_min=tuple(fs["purity_min"]),
        product_key=tuple(fs["product_key"]),
        flow_min=float(fs["flow_min_mol_s"]),
        geometry=geometry,
        wiring=wiring,
        budgets=tuple(opt.get("budgets", [])),
        method=opt.get("method", "coordinate"),
        max_iter=int(opt.get("max_iter", 150)),
        binary_stability_grid=int(opt.get("binary_stability_grid", 21)),
        ternary_stability_grid=int(opt.get("ternary_stability_grid", 15)),
        seed=int(doc.get("seed", 0)),
        output_dir=doc.get("output_dir", "modelfluid-out"),
        raw=doc)


# ---------------------------------------------------------------------------
# Result persistence
# ---------------------------------------------------------------------------

def write_rows(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(list(row))


def write_summary(path, payload, config_hash):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    doc = {"toolkit_version": __version__, "config_sha256": config_hash}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return doc
