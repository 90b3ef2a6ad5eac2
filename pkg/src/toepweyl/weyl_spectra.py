"""Scaled spectral measures, smoothed Weyl sums and the periodic-orbit predictions.

Fourier convention (used for every test function and measure here):

    fhat(t) = (2 pi)^{-1} int f(x) e^{-i t x} dx,    f(x) = int fhat(t) e^{i t x} dt,

so int f dmu = int fhat(t) muhat(t) dt with muhat(t) = sum_j w_j e^{i t lambda_j},
and fhat(0) = (2 pi)^{-1} int f.

The scaled measure at level k puts mass Pi_{k,j}(z) at lambda_j = k(mu_{k,j} - E);
an energy offset alpha shifts E to E + alpha / sqrt(k).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_legendre

from .errors import AccuracyWarning, InputError, UnsupportedError, ValidationError
from .export import write_csv, write_json
from .kernels import atom_convolution, compensated_complex_dot, neumaier_sum
from .symplectic_core import InvariantVector, SymplecticMap, classify_pds, gcal_series

log = logging.getLogger(__name__)

N_MAX_DEFAULT = 32
N_MAX_CAP = 512
# f(y) / f(0) < 1e-30 once eps |y| exceeds this; atoms beyond it are skipped
BUMP_CUTOFF = 2000.0


# -- measures ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeylMeasure:
    locations: np.ndarray
    weights: np.ndarray
    k: int
    z: np.ndarray
    E: float
    alpha: float = 0.0
    dropped_mass: float = 0.0

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValidationError("atom weights must be nonnegative")
        if not np.all(np.isfinite(self.locations)):
            raise ValidationError("atom locations must be finite")

    @cached_property
    def total_mass(self) -> float:
        return neumaier_sum(self.weights)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.weights.tolist()))

    def shifted(self, E: float) -> "WeylMeasure":
        """Same spectral data re-centered at a new energy."""
        loc = self.locations + self.k * (self.E - E)
        return WeylMeasure(loc, self.weights, self.k, self.z, E, self.alpha, self.dropped_mass)


def weyl_measure(spec, E: float, alpha: float = 0.0, window: float | None = None) -> WeylMeasure:
    """Atoms at k(mu_j - E) - alpha sqrt(k) with weights Pi_{k,j}(z).

    With ``window`` atoms with |lambda| > window are dropped and their mass kept in
    ``dropped_mass``.
    """
    k = spec.k
    loc = k * (np.asarray(spec.eigenvalues, dtype=float) - E) - alpha * math.sqrt(k)
    w = np.asarray(spec.masses, dtype=float)
    dropped = 0.0
    if window is not None:
        keep = np.abs(loc) <= window
        dropped = neumaier_sum(w[~keep])
        if dropped > 0:
            log.info("dropped mass %.3e outside |lambda| <= %g", dropped, window)
        loc, w = loc[keep], w[keep]
    return WeylMeasure(loc, w, k, np.asarray(spec.z), float(E), float(alpha), dropped)


def concentration_window(k: float, factor: float = 10.0) -> float:
    """factor * sqrt(k) log k: the scaled measure carries all but O(k^-inf) of its mass here."""
    return factor * math.sqrt(k) * max(math.log(k), 1.0)


def measure_fourier_transform(mu: WeylMeasure, t_grid) -> np.ndarray:
    """muhat(t) = sum_j w_j e^{i t lambda_j}; muhat(0) is total_mass exactly."""
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    out = np.empty(t.size, dtype=complex)
    for i, ti in enumerate(t):
        if ti == 0.0:
            out[i] = mu.total_mass
        else:
            out[i] = compensated_complex_dot(np.exp(1j * ti * mu.locations), mu.weights)
    return out


# -- test functions ----------------------------------------------------------------


def _bump(s):
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 0.5
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - (2 * s[inside]) ** 2))
    return out


@lru_cache(maxsize=32)
def _legendre_half(n: int):
    x, w = roots_legendre(n)
    return x / 2, w / 2


_CHI_L2 = quad(lambda s: float(_bump(s)) ** 2, -0.5, 0.5, epsabs=1e-16, epsrel=1e-13)[0]


def rho1(t):
    """(chi * chi)(t) / (chi * chi)(0), supported in (-1, 1), by Gauss-Legendre on the overlap."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t).reshape(-1, 1)
    s, w = _legendre_half(128)
    x = a / 2 + s * (1 - a)  # overlap (a - 1/2, 1/2)
    val = (1 - a[:, 0]) * ((_bump(x) * _bump(x - a)) @ w) / _CHI_L2
    return np.where(a[:, 0] < 1, val, 0.0).reshape(t.shape)


class WindowFunction:
    """A real even Schwartz function f with known Fourier transform, shifted to center x0."""

    center: float = 0.0
    support: float = math.inf  # fhat vanishes for |t| >= support

    def profile(self, y):
        raise NotImplementedError

    def fourier_profile(self, t):
        raise NotImplementedError

    def __call__(self, x):
        return self.profile(np.asarray(x, dtype=float) - self.center)

    def fourier(self, t):
        """fhat(t), including the e^{-i t x0} factor of the shift."""
        t = np.asarray(t, dtype=float)
        val = self.fourier_profile(t)
        return val * np.exp(-1j * t * self.center) if self.center else val

    @property
    def integral(self) -> float:
        return float(2 * np.pi * self.fourier_profile(np.array(0.0)))

    def at(self, center: float) -> "WindowFunction":
        raise NotImplementedError

    def sum_over(self, loc, w, x=None):
        """sum_j w_j f(x - lambda_j) for each x (default: the function's own center)."""
        xs = np.atleast_1d(self.center if x is None else np.asarray(x, dtype=float))
        return np.array([compensated_complex_dot(self.profile(xi - loc), w).real for xi in xs])


class AutocorrelatedBump(WindowFunction):
    """fhat = c (chi * chi) with chi a smooth bump on (-eps/2, eps/2), normalized to int f = 1.

    Then f = c X^2 >= 0 where X is the cosine transform of chi, and fhat is
    supported in (-eps, eps).
    """

    def __init__(self, eps: float, center: float = 0.0, nodes: int | None = None):
        if eps <= 0:
            raise InputError("bump support must be positive")
        self.eps = float(eps)
        self.support = self.eps
        self.center = float(center)
        self._nodes = nodes

    def at(self, center: float) -> "AutocorrelatedBump":
        return AutocorrelatedBump(self.eps, center, self._nodes)

    @property
    def norm_const(self) -> float:
        return 1.0 / (2 * np.pi * self.eps * _CHI_L2)

    def cosine_rule(self, u_max: float = 0.0):
        """Nodes s_q in (-1/2, 1/2) and coefficients with f(y) = (sum_q c_q cos(eps s_q y))^2."""
        n = self._nodes or 64 * math.ceil(max(200, 0.6 * u_max + 64) / 64)
        s, w = _legendre_half(n)
        coef = math.sqrt(self.norm_const) * self.eps * w * _bump(s)
        return s, coef

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        u_max = float(np.max(np.abs(y)) * self.eps) if y.size else 0.0
        s, c = self.cosine_rule(u_max)
        flat = y.reshape(-1)
        out = np.empty(flat.size)
        step = max(1, 2_000_000 // s.size)
        for i in range(0, flat.size, step):
            out[i : i + step] = (np.cos(np.outer(flat[i : i + step] * self.eps, s)) @ c) ** 2
        return out.reshape(y.shape)

    def fourier_profile(self, t):
        return rho1(np.asarray(t, dtype=float) / self.eps) / (2 * np.pi)

    def sum_over(self, loc, w, x=None, backend=None):
        xs = np.atleast_1d(self.center if x is None else np.asarray(x, dtype=float))
        loc = np.asarray(loc, dtype=float)
        if loc.size == 0:
            return np.zeros(xs.size)
        u_max = min(float(np.max(np.abs(xs[:, None] - loc[None, :]))) * self.eps, BUMP_CUTOFF)
        s, c = self.cosine_rule(u_max)
        return atom_convolution(xs, loc, w, s, c, self.eps, BUMP_CUTOFF, 1, backend)


class GaussianWindow(WindowFunction):
    """f(x) = exp(-x^2 / 2 sigma^2) / (sqrt(2 pi) sigma); fhat is not compactly supported."""

    def __init__(self, sigma: float, center: float = 0.0):
        self.sigma = float(sigma)
        self.center = float(center)

    def at(self, center: float) -> "GaussianWindow":
        return GaussianWindow(self.sigma, center)

    def profile(self, y):
        y = np.asarray(y, dtype=float)
        return np.exp(-0.5 * (y / self.sigma) ** 2) / (math.sqrt(2 * math.pi) * self.sigma)

    def fourier_profile(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * (self.sigma * t) ** 2) / (2 * math.pi)


def smoothed_sum(mu: WeylMeasure, f: WindowFunction, backend=None) -> float:
    """sum_j f(lambda_j) w_j for f centered at f.center."""
    if isinstance(f, AutocorrelatedBump):
        return float(f.sum_over(mu.locations, mu.weights, backend=backend)[0])
    return compensated_complex_dot(f(mu.locations), mu.weights).real


def direct_sum(mu: WeylMeasure, f: WindowFunction) -> float:
    """Plain compensated evaluation, used as the oracle for smoothed_sum."""
    return compensated_complex_dot(f(mu.locations), mu.weights).real


# -- predictions -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PredictedExpansion:
    branch: str  # "nonperiodic" | "periodic" | "off_level"
    m: int
    T_z: float | None = None
    holonomy_angle: float = 0.0
    coefficients: dict = field(default_factory=dict)
    alpha_norm: float = float("nan")
    lambdas: tuple = ()
    monodromy_kind: str = ""
    monodromy: SymplecticMap | None = field(default=None, repr=False)
    invariant: InvariantVector | None = field(default=None, repr=False)
    energy_offset: float = 0.0

    @property
    def prefactor_exponent(self) -> float:
        return self.m - 0.5

    @property
    def xi_norm(self) -> float:
        """||xi_H(z)|| in the Kahler metric g = 2 Re G, equal to sqrt(2) |alpha|."""
        return math.sqrt(2.0) * self.alpha_norm

    @property
    def n_max(self) -> int:
        return max(self.coefficients, default=0)

    def prefactor(self, k: float) -> float:
        return (k / (2 * math.pi)) ** self.prefactor_exponent

    def extended(self, n_max: int) -> "PredictedExpansion":
        if self.branch != "periodic" or n_max <= self.n_max:
            return self
        if self.monodromy is None:
            raise InputError("coefficients were given explicitly and cannot be extended")
        series = gcal_series(self.monodromy, self.invariant, n_max, tol=1e-6)
        coeffs = {n: c.value for n, c in series.items()}
        return PredictedExpansion(**{**self.__dict__, "coefficients": coeffs})

    def phases(self, k: float, ns) -> np.ndarray:
        return np.exp(-1j * k * np.asarray(ns) * self.holonomy_angle)

    def comb(self, f: WindowFunction, k: float) -> complex:
        """sum_n fhat(n T_z) G_n e^{-i k n theta^h} over the stored coefficients."""
        if self.branch == "off_level":
            return 0j
        if self.branch == "nonperiodic":
            return complex(f.fourier(0.0) * self.coefficients[0])
        ns = np.array(sorted(self.coefficients))
        if math.isfinite(f.support):
            ns = ns[np.abs(ns) * self.T_z < f.support]
            if ns.size and max(abs(ns)) == self.n_max and self.n_max * self.T_z < f.support:
                return self.extended(int(f.support / self.T_z) + 1).comb(f, k)
        G = np.array([self.coefficients[n] for n in ns])
        return complex(np.sum(f.fourier(ns * self.T_z) * G * self.phases(k, ns)))

    def smoothed(self, f: WindowFunction, k: float) -> complex:
        """Leading-order prediction for sum_j f(lambda_j) Pi_{k,j}(z)."""
        return self.prefactor(k) * self.comb(f, k)

    def decay_fit(self, n_min: int = 1) -> tuple[float, float]:
        """Least-squares (rate c, log C) for |G_n| ~ C e^{-c |n|} over n >= n_min."""
        ns = np.array([n for n in self.coefficients if n >= n_min])
        if ns.size < 2:
            raise InputError("need at least two coefficients for a decay fit")
        y = np.log(np.abs([self.coefficients[n] for n in ns]))
        slope, icpt = np.polyfit(ns, y, 1)
        return float(-slope), float(icpt)

    def summary(self) -> dict:
        return {"branch": self.branch, "T_z": self.T_z, "holonomy_angle": self.holonomy_angle,
                "lambdas": list(self.lambdas), "alpha_norm": self.alpha_norm,
                "monodromy_kind": self.monodromy_kind}


def predicted_expansion(model, orbit=None, E: float | None = None, n_max: int = N_MAX_DEFAULT, z=None,
                        energy_tol: float = 1e-9) -> PredictedExpansion:
    """Select the branch of the pointwise asymptotics and compute G_n(z).

    ``orbit`` is the PeriodicOrbitData of z (or None when z is not periodic).
    """
    from .kahler_flow import complex_field, k_frame_alpha

    if orbit is not None:
        z = orbit.z
    if z is None:
        raise InputError("need a base point or an orbit")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    E = model.E if E is None else E
    if E is None:
        raise InputError("energy level E is not set")
    H = float(model.energy(z))
    if abs(H - E) > energy_tol:
        return PredictedExpansion("off_level", model.m, energy_offset=H - E)
    if np.linalg.norm(complex_field(model, z)) == 0:
        raise UnsupportedError("z is a critical point of H (xi_H(z) = 0)")
    alpha = k_frame_alpha(model, z)
    an = float(np.linalg.norm(alpha))
    if orbit is None:
        return PredictedExpansion("nonperiodic", model.m, coefficients={0: 1.0 / an}, alpha_norm=an)
    v = InvariantVector.from_alpha(orbit.alpha)
    series = gcal_series(orbit.monodromy, v, n_max, tol=1e-6)
    cls = orbit.classification
    return PredictedExpansion(
        "periodic", model.m, T_z=orbit.T_z, holonomy_angle=orbit.holonomy_angle,
        coefficients={n: c.value for n, c in series.items()}, alpha_norm=an,
        lambdas=tuple(float(x) for x in cls.lambdas), monodromy_kind=cls.kind,
        monodromy=orbit.monodromy, invariant=v,
    )


def synthetic_expansion(S, xi, T_z: float = 1.0, holonomy_angle: float = 0.0,
                        n_max: int = N_MAX_DEFAULT) -> PredictedExpansion:
    """Periodic-branch data from a given monodromy matrix and invariant vector."""
    Sm = SymplecticMap.from_matrix(S)
    v = InvariantVector.from_xi(xi)
    series = gcal_series(Sm, v, n_max)
    cls = classify_pds(Sm)
    return PredictedExpansion(
        "periodic", Sm.m, T_z=float(T_z), holonomy_angle=float(holonomy_angle),
        coefficients={n: c.value for n, c in series.items()}, alpha_norm=v.norm,
        lambdas=tuple(float(x) for x in cls.lambdas), monodromy_kind=cls.kind, monodromy=Sm, invariant=v,
    )


def ellsmooth_prediction(k: float, alpha: float, xi_norm: float, m: int = 1) -> float:
    """(k/2 pi)^{m-1/2} e^{-alpha^2/||xi||^2} sqrt(2) / (2 pi ||xi||) for int f = 1."""
    return (k / (2 * math.pi)) ** (m - 0.5) * math.exp(-(alpha**2) / xi_norm**2) * math.sqrt(2) / (
        2 * math.pi * xi_norm)


# -- Q-function and nu ---------------------------------------------------------------


@dataclass(frozen=True)
class QResult:
    s: np.ndarray
    values: np.ndarray
    n_max: int
    tail_bound: float


def tail_bound(exp: PredictedExpansion, n: int | None = None) -> float:
    """Bound on sum_{|n'| > n} |G_n'| from the geometric decay of the four coefficients up to n.

    ``n`` defaults to the truncation order of ``exp`` and is capped by it.
    """
    N = exp.n_max if n is None else min(int(n), exp.n_max)
    if N < 4:
        return math.inf
    a = np.array([abs(exp.coefficients[n]) + abs(exp.coefficients[-n]) for n in range(N - 3, N + 1)])
    if a[-1] == 0:
        return 0.0
    r = float(np.max(a[1:] / a[:-1]))
    if r >= 1:
        return math.inf
    return float(a[-1] * r / (1 - r))


def _ensure_summable(exp: PredictedExpansion, n_max, tol):
    if exp.branch != "periodic":
        raise InputError(f"Q-function needs the periodic branch, got {exp.branch}")
    if n_max is not None:
        exp = exp.extended(n_max)
        return exp, tail_bound(exp, n_max)
    tb = tail_bound(exp)
    while tb > tol and exp.n_max < N_MAX_CAP and exp.monodromy is not None:
        exp = exp.extended(min(2 * max(exp.n_max, 1), N_MAX_CAP))
        tb = tail_bound(exp)
    if tb > tol:
        warnings.warn(f"Q series tail bound {tb:.3e} above {tol:.1e} at n_max = {exp.n_max}", AccuracyWarning,
                      stacklevel=3)
    return exp, tb


def q_function(exp: PredictedExpansion, k: float, s_grid, n_max: int | None = None,
               tol: float = 1e-8, T: float | None = None) -> QResult:
    """Partial sums of Q(s) = sum_n (2 pi)^{-1} e^{-i n T_z s} e^{-i n k theta^h} G_n.

    With ``T`` the series is tapered by rho1(n T_z / T), which gives the smooth
    density of nu_T even when G_n does not decay (identity monodromy).
    """
    if T is not None:
        if exp.branch != "periodic":
            raise InputError(f"Q-function needs the periodic branch, got {exp.branch}")
        need = int(T / exp.T_z)  # rho1 vanishes for |n| T_z >= T
        if exp.monodromy is not None and need > exp.n_max:
            exp = exp.extended(need)
        N = min(need, exp.n_max)
        tb = 0.0 if N == need else math.inf
    else:
        exp, tb = _ensure_summable(exp, n_max, tol)
        N = exp.n_max if n_max is None else n_max
    s = np.atleast_1d(np.asarray(s_grid, dtype=float))
    ns = np.arange(-N, N + 1)
    G = np.array([exp.coefficients[n] for n in ns]) * exp.phases(k, ns)
    if T is not None:
        G = G * rho1(ns * exp.T_z / T)
    vals = np.exp(-1j * exp.T_z * np.outer(s, ns)) @ G / (2 * math.pi)
    return QResult(s, vals, N, tb)


def nu_interval(exp: PredictedExpansion, k: float, a: float, b: float, n_max: int | None = None,
                T: float | None = None, rho=None, tol: float = 1e-8) -> complex:
    """nu_k(a, b) = int_a^b Q(s) ds.

    With identity monodromy G_n is constant and Q is a Dirac comb: nu has atoms of
    mass G_0 / T_z at s = (2 pi j - k theta^h) / T_z, counted on the closed interval.
    With ``T`` and ``rho`` the series is tapered by rho(n T_z / T) as in nu_T.
    """
    if a > b:
        raise InputError("empty interval: a > b")
    if exp.branch == "nonperiodic":
        return complex(exp.coefficients[0] * (b - a) / (2 * math.pi))
    if exp.branch == "off_level":
        return 0j
    if T is None and exp.monodromy_kind == "identity":
        Tz, th = exp.T_z, exp.holonomy_angle
        j_lo = math.ceil((a * Tz + k * th) / (2 * math.pi) - 1e-12)
        j_hi = math.floor((b * Tz + k * th) / (2 * math.pi) + 1e-12)
        return complex(max(0, j_hi - j_lo + 1) * exp.coefficients[0] / Tz)
    if T is None:
        exp, _ = _ensure_summable(exp, n_max, tol)
    elif exp.monodromy is not None:
        exp = exp.extended(int(T / exp.T_z) + 1)
    N = exp.n_max if n_max is None else n_max
    ns = np.arange(-N, N + 1)
    G = np.array([exp.coefficients[n] for n in ns]) * exp.phases(k, ns)
    if T is not None:
        G = G * (np.abs(ns * exp.T_z) < T) * (rho(ns * exp.T_z / T) if rho is not None else 1.0)
    w = ns * exp.T_z
    integ = np.where(ns == 0, b - a, (np.exp(-1j * w * b) - np.exp(-1j * w * a)) / np.where(ns == 0, 1, -1j * w))
    return complex(np.sum(G * integ) / (2 * math.pi))


# -- comparison and export ---------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    k_values: list
    empirical: list
    predicted: list
    ratios: list
    relative_error: list
    fitted_exponent: float
    expected_exponent: float
    branch: str
    orbit: dict

    @property
    def exponent_deviation(self) -> float:
        return abs(self.fitted_exponent - self.expected_exponent)

    @property
    def ratio_spread(self) -> float:
        r = np.abs(np.array(self.ratios))
        return float(np.ptp(r) / np.mean(r))

    def to_json(self) -> dict:
        return {"k_values": self.k_values, "ratios": self.ratios, "empirical": self.empirical,
                "predicted": self.predicted, "relative_error": self.relative_error,
                "fitted_exponent": self.fitted_exponent, "expected_exponent": self.expected_exponent,
                "branch": self.branch, "orbit": self.orbit}


def fit_exponent(k_values, values) -> float:
    k = np.asarray(k_values, dtype=float)
    v = np.abs(np.asarray(values))
    return float(np.polyfit(np.log(k), np.log(v), 1)[0])


def compare(k_values, empirical, predicted: PredictedExpansion, f: WindowFunction | None = None,
            predicted_values=None) -> Comparison:
    """Empirical/predicted ratios per k and the fitted k-exponent of the empirical sums."""
    k_values = [int(k) for k in k_values]
    if len(k_values) < 3:
        raise InputError("a k-ladder needs at least three levels")
    emp = [complex(e) for e in empirical]
    if predicted_values is None:
        if f is None:
            raise InputError("need a test function or explicit predicted values")
        predicted_values = [predicted.smoothed(f, k) for k in k_values]
    pred = [complex(p) for p in predicted_values]
    ratios = [e / p if p != 0 else complex("nan") for e, p in zip(emp, pred)]
    rel = [abs(r - 1) for r in ratios]
    expected = predicted.prefactor_exponent if predicted.branch != "off_level" else -math.inf
    orbit = predicted.summary()
    return Comparison(k_values, emp, pred, ratios, rel, fit_exponent(k_values, emp), expected,
                      predicted.branch, orbit)


def write_comparison(path, comp: Comparison):
    return write_json(path, comp.to_json())


def write_q_samples(path, q: QResult):
    rows = ((float(s), float(v.real), float(v.imag)) for s, v in zip(q.s, q.values))
    return write_csv(path, ["s", "re_Q", "im_Q"], rows)


def plot_script(data_csv: str, title: str, xlabel: str, ylabel: str, columns=(1, 2), logscale: str = "") -> str:
    """Gnuplot script plotting one CSV (header row skipped)."""
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    x, y = columns
    lines.append(f"plot '{data_csv}' every ::1 using {x}:{y} with linespoints title '{ylabel}'")
    return "\n".join(lines) + "\n"
