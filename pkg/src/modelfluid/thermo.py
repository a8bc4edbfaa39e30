"""Activity-coefficient, vapor-pressure and vaporization-enthalpy models.

Activity models: the three-suffix Margules model (binary and ternary, fully
parameterized by the infinite-dilution activity coefficients) and NRTL as
the reference model. Vapor pressure: the two-parameter simplified Antoine
equation ln(psat) = theta1 + theta2/T and the five-coefficient extended
(DIPPR-101) form ln(psat) = c1 + c2/T + c3 ln(T) + c4 T^c5. Enthalpy: a
composition-weighted average of the pure-component vaporization enthalpies,
optionally with a Watson-type temperature correction for the error studies.

Units: K, Pa, J/mol. All model objects are immutable; every operation is a
pure function, so unrestricted parallel use is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoBracketError, NonConvergenceError

COMPOSITION_TOL = 1e-12

# bracket used for boiling-temperature searches, K
T_BRACKET = (150.0, 1000.0)


def check_composition(x, n=None):
    """Validate a mole-fraction vector and return it as a float array."""
    x = np.asarray(x, dtype=float)
    if n is not None and x.shape != (n,):
        raise ValueError(f"expected composition of length {n}, got shape {x.shape}")
    if np.any(x < -COMPOSITION_TOL):
        raise ValueError(f"negative mole fraction in {x}")
    if abs(float(x.sum()) - 1.0) > 1e-12:
        raise ValueError(f"composition does not sum to 1: sum={x.sum()!r}")
    return x


# ---------------------------------------------------------------------------
# Activity-coefficient models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MargulesBinary:
    """Three-suffix Margules model for a binary pair.

    a_12 = ln(gamma_1) at infinite dilution in 2, a_21 = ln(gamma_2) at
    infinite dilution in 1. Temperature independent.
    """

    a_12: float
    a_21: float

    n_components = 2
    temperature_dependent = False

    def __post_init__(self):
        if not (math.isfinite(self.a_12) and math.isfinite(self.a_21)):
            raise ValueError("Margules coefficients must be finite")

    @property
    def a_matrix(self):
        return np.array([[0.0, self.a_12], [self.a_21, 0.0]])

    def ln_gamma(self, x, T=None):
        x = check_composition(x, 2)
        a12, a21 = self.a_12, self.a_21
        x1, x2 = float(x[0]), float(x[1])
        return np.array([
            (a12 + 2.0 * (a21 - a12) * x1) * x2 * x2,
            (a21 + 2.0 * (a12 - a21) * x2) * x1 * x1,
        ])

    def dln_gamma_dx(self, x):
        """d ln(gamma_i)/dx_i along the binary composition line."""
        x = check_composition(x, 2)
        a12, a21 = self.a_12, self.a_21
        x1, x2 = float(x[0]), float(x[1])
        d1 = 2.0 * x2 * ((a21 - a12) * x2 - a12 - 2.0 * (a21 - a12) * x1)
        d2 = 2.0 * x1 * ((a12 - a21) * x1 - a21 - 2.0 * (a12 - a21) * x2)
        return np.array([d1, d2])

    def ln_gamma_inf(self, i, j, T=None):
        if (i, j) == (0, 1):
            return self.a_12
        if (i, j) == (1, 0):
            return self.a_21
        raise ValueError(f"no pair ({i}, {j}) in a binary model")


@dataclass(frozen=True)
class MargulesTernary:
    """Ternary Margules model: one coefficient per ordered pair plus an
    optional ternary constant (zero by default, nothing to fit it to).

    ``a`` is a 3x3 matrix with a[i][j] = ln(gamma_i) at infinite dilution
    in j and zero diagonal.
    """

    a: tuple
    c: float = 0.0

    n_components = 3
    temperature_dependent = False

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (3, 3):
            raise ValueError("ternary Margules needs a 3x3 coefficient matrix")
        if not np.all(np.isfinite(a)) or not math.isfinite(self.c):
            raise ValueError("Margules coefficients must be finite")
        if np.any(np.diag(a) != 0.0):
            raise ValueError("diagonal of the coefficient matrix must be zero")
        object.__setattr__(self, "a", tuple(map(tuple, a)))

    @property
    def a_matrix(self):
        return np.asarray(self.a, dtype=float)

    def ln_gamma(self, x, T=None):
        from . import kernels

        x = check_composition(x, 3)
        return kernels.ln_gamma_margules(self.a_matrix, self.c, x)

    def ln_gamma_inf(self, i, j, T=None):
        if i == j or not (0 <= i < 3 and 0 <= j < 3):
            raise ValueError(f"invalid pair ({i}, {j})")
        return self.a[i][j]

    def binary_pair(self, i, j):
        """The binary Margules model on the (i, j) edge of the simplex."""
        return MargulesBinary(a_12=self.a[i][j], a_21=self.a[j][i])


@dataclass(frozen=True)
class NrtlBinary:
    """NRTL interaction for one pair: tau_ij(T) = a_ij + b_ij / T."""

    a_12: float = 0.0
    a_21: float = 0.0
    b_12: float = 0.0  # K
    b_21: float = 0.0  # K
    alpha: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"non-randomness alpha={self.alpha} outside (0, 1]")

    def tau(self, T):
        return self.a_12 + self.b_12 / T, self.a_21 + self.b_21 / T


@dataclass(frozen=True)
class NrtlModel:
    """Multicomponent NRTL built from pairwise interactions.

    ``pairs`` maps an ordered component pair (i, j) with i < j to an
    NrtlBinary; missing pairs default to ideal (tau = 0).
    """

    n_components: int
    pairs: tuple  # ((i, j, NrtlBinary), ...)

    temperature_dependent = True

    @classmethod
    def from_pairs(cls, n, pair_map):
        items = []
        for (i, j), binary in sorted(pair_map.items()):
            if not (0 <= i < j < n):
                raise ValueError(f"invalid pair ({i}, {j}) for n={n}")
            items.append((i, j, binary))
        return cls(n_components=n, pairs=tuple(items))

    def _tau_alpha(self, T):
        n = self.n_components
        tau = np.zeros((n, n))
        alpha = np.zeros((n, n))
        for i, j, b in self.pairs:
            t_ij, t_ji = b.tau(T)
            tau[i, j] = t_ij
            tau[j, i] = t_ji
            alpha[i, j] = alpha[j, i] = b.alpha
        return tau, alpha

    def ln_gamma(self, x, T):
        x = check_composition(x, self.n_components)
        tau, alpha = self._tau_alpha(T)
        G = np.exp(-alpha * tau)
        xg = G.T @ x                      # sum_k x_k G_ki
        xtg = (tau * G).T @ x             # sum_k x_k tau_ki G_ki
        lng = xtg / xg
        for j in range(self.n_components):
            frac = x[j] * G[:, j] / xg[j]
            lng += frac * (tau[:, j] - xtg[j] / xg[j])
        return lng

    def ln_gamma_inf(self, i, j, T):
        """Analytic infinite-dilution limit of component i in pure j."""
        tau, alpha = self._tau_alpha(T)
        g_ij = math.exp(-alpha[i, j] * tau[i, j])
        return tau[j, i] + tau[i, j] * g_ij


# ---------------------------------------------------------------------------
# Vapor-pressure models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifiedAntoine:
    """Two-parameter vapor-pressure model ln(psat/Pa) = theta1 + theta2/T.

    theta2 < 0 for any physical fluid (psat must increase with T); a
    non-negative theta2 is representable but flagged by the feature mapping.
    """

    theta1: float  # ln(Pa)
    theta2: float  # K

    def __post_init__(self):
        if not (math.isfinite(self.theta1) and math.isfinite(self.theta2)):
            raise ValueError("Antoine parameters must be finite")

    def psat(self, T):
        if T <= 0.0:
            raise ValueError(f"temperature {T} K must be positive")
        return math.exp(self.theta1 + self.theta2 / T)

    def dpsat_dT(self, T):
        return self.psat(T) * (-self.theta2 / (T * T))

    def tsat(self, p):
        """Boiling temperature at pressure p; closed-form inversion."""
        if p <= 0.0:
            raise ValueError(f"pressure {p} Pa must be positive")
        denom = math.log(p) - self.theta1
        if denom == 0.0 or self.theta2 / denom <= 0.0:
            raise NoBracketError(
                f"no boiling temperature at p={p} Pa for theta=({self.theta1}, {self.theta2})")
        return self.theta2 / denom


@dataclass(frozen=True)
class ExtendedAntoine:
    """Five-coefficient (DIPPR-101 form) vapor-pressure correlation.

    ln(psat/Pa) = c1 + c2/T + c3 ln(T) + c4 T^c5, valid on [t_min, t_max].
    """

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    t_min: float  # K
    t_max: float  # K

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max):
            raise ValueError(f"invalid temperature range [{self.t_min}, {self.t_max}]")

    def _check_range(self, T):
        if not (self.t_min <= T <= self.t_max):
            raise ValueError(
                f"T={T} K outside correlation range [{self.t_min}, {self.t_max}] K")

    def psat(self, T):
        self._check_range(T)
        return math.exp(self.c1 + self.c2 / T + self.c3 * math.log(T)
                        + self.c4 * T ** self.c5)

    def dpsat_dT(self, T):
        dln = -self.c2 / (T * T) + self.c3 / T
        if self.c4 != 0.0:
            dln += self.c4 * self.c5 * T ** (self.c5 - 1.0)
        return self.psat(T) * dln

    def validate_monotone(self, n_grid=101):
        """Check dpsat/dT > 0 across the stated range (done at load time)."""
        for T in np.linspace(self.t_min, self.t_max, n_grid):
            if self.dpsat_dT(float(T)) <= 0.0:
                raise ValueError(
                    f"vapor pressure not monotone increasing at T={T:.2f} K")
        return True

    def tsat(self, p):
        """Boiling temperature at p: bisection bracket then Newton polish."""
        if p <= 0.0:
            raise ValueError(f"pressure {p} Pa must be positive")
        lo = max(self.t_min, T_BRACKET[0])
        hi = min(self.t_max, T_BRACKET[1])
        target = math.log(p)

        def f(T):
            return (self.c1 + self.c2 / T + self.c3 * math.log(T)
                    + self.c4 * T ** self.c5 - target)

        f_lo, f_hi = f(lo), f(hi)
        if f_lo > 0.0 or f_hi < 0.0:
            raise NoBracketError(
                f"p={p} Pa not reachable on [{lo}, {hi}] K")
        # bisection to ~1e-3 K, then Newton
        a_, b_ = lo, hi
        while b_ - a_ > 1e-3:
            mid = 0.5 * (a_ + b_)
            if f(mid) <= 0.0:
                a_ = mid
            else:
                b_ = mid
        T = 0.5 * (a_ + b_)
        for _ in range(100):
            dln = -self.c2 / (T * T) + self.c3 / T
            if self.c4 != 0.0:
                dln += self.c4 * self.c5 * T ** (self.c5 - 1.0)
            step = f(T) / dln
            T_new = min(max(T - step, lo), hi)
            if abs(T_new - T) <= 1e-10 * T_new:
                return T_new
            T = T_new
        raise NonConvergenceError(f"tsat Newton did not converge at p={p} Pa")


def psat(model, T):
    """Saturation pressure (Pa) of a vapor-pressure model at T (K)."""
    return model.psat(T)


def tsat(model, p):
    """Boiling temperature (K) of a vapor-pressure model at p (Pa)."""
    return model.tsat(p)


# ---------------------------------------------------------------------------
# Vaporization enthalpy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnthalpyModel:
    """Pure-component vaporization enthalpies at the boiling points, J/mol."""

    dhvap: tuple  # J/mol per component

    def __post_init__(self):
        dh = tuple(float(v) for v in self.dhvap)
        if any(v <= 0.0 for v in dh):
            raise ValueError(f"vaporization enthalpies must be positive: {dh}")
        object.__setattr__(self, "dhvap", dh)

    @property
    def n_components(self):
        return len(self.dhvap)

    def mix(self, y):
        y = check_composition(y, self.n_components)
        return float(np.dot(y, self.dhvap))


@dataclass(frozen=True)
class WatsonEnthalpy:
    """Watson-type temperature correction for the vaporization enthalpy.

    dh_i(T) = dh_ref_i * ((t_crit_i - T) / (t_crit_i - t_ref_i))^exponent.
    ``exponent = 0`` reduces exactly to the constant model, which is how the
    simulation-error study's degenerate case is produced.
    """

    dh_ref: tuple   # J/mol at t_ref
    t_ref: tuple    # K, normally the boiling points
    t_crit: tuple   # K
    exponent: float = 0.38

    def __post_init__(self):
        n = len(self.dh_ref)
        if len(self.t_ref) != n or len(self.t_crit) != n:
            raise ValueError("inconsistent component counts in enthalpy correlation")
        for tr, tc in zip(self.t_ref, self.t_crit):
            if tc <= tr:
                raise ValueError(f"critical temperature {tc} K not above reference {tr} K")
        object.__setattr__(self, "dh_ref", tuple(float(v) for v in self.dh_ref))
        object.__setattr__(self, "t_ref", tuple(float(v) for v in self.t_ref))
        object.__setattr__(self, "t_crit", tuple(float(v) for v in self.t_crit))

    @property
    def n_components(self):
        return len(self.dh_ref)

    def dhvap_at(self, T):
        out = []
        for dh, tr, tc in zip(self.dh_ref, self.t_ref, self.t_crit):
            if T >= tc:
                out.append(1.0)
            else:
                out.append(dh * ((tc - T) / (tc - tr)) ** self.exponent)
        return np.asarray(out)


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def margules_ln_gamma(model, x):
    """ln(gamma_i) for a Margules model at liquid composition x."""
    return model.ln_gamma(x)


def nrtl_ln_gamma(model, x, T):
    """ln(gamma_i) for an NRTL model at liquid composition x and T (K)."""
    return model.ln_gamma(x, T)


def mix_vaporization_enthalpy(model, y):
    """Composition-weighted vaporization enthalpy, J/mol."""
    return model.mix(y)
