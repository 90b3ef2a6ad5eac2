"""Mollifiers, smoothed counting functions and the two-term sharp interval law.

rho_1 is the normalized autocorrelation of a smooth bump chi on (-1/2, 1/2), so
supp rho_1 = (-1, 1), rho_1(0) = 1 and rho_1hat = |chihat|^2 / (2 pi int chi^2) >= 0.
The mollifier theta_T(x) = T rho_1hat(T x) is the AutocorrelatedBump with eps = T.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import AccuracyError, InputError
from .export import write_csv, write_json
from .kernels import atom_convolution, neumaier_sum
from .weyl_spectra import (
    AutocorrelatedBump,
    PredictedExpansion,
    WeylMeasure,
    _bump,
    _legendre_half,
    rho1,
    fit_exponent,
    nu_interval,
)

log = logging.getLogger(__name__)

GRID_POINTS = 2**18
GRID_SPAN = 8.0
PARSEVAL_TOL = 1e-9
CDF_CUTOFF = 600.0  # in units of T x; theta_T mass beyond is below 1e-15


def rho1_hat(tau):
    """(2 pi)^{-1} int rho_1(t) e^{-i t tau} dt, via the bump cosine transform."""
    return AutocorrelatedBump(1.0)(np.asarray(tau, dtype=float))


@dataclass(frozen=True)
class GridSpec:
    points: int = GRID_POINTS
    span: float = GRID_SPAN  # samples rho_1 on [-span, span]

    @property
    def dt(self) -> float:
        return 2 * self.span / self.points

    @property
    def dtau(self) -> float:
        return 2 * np.pi / (2 * self.span)


def _fft_transform(grid: GridSpec):
    """rho_1 samples by discrete autocorrelation of chi, and rho_1hat by FFT."""
    n, dt = grid.points, grid.dt
    t = (np.arange(n) - n // 2) * dt
    chi = _bump(t)
    F = np.fft.fft(np.fft.ifftshift(chi))
    auto = np.real(np.fft.fftshift(np.fft.ifft(np.abs(F) ** 2))) * dt
    rho = auto / auto[n // 2]
    hat = np.real(np.fft.fftshift(np.fft.fft(np.fft.ifftshift(rho)))) * dt / (2 * np.pi)
    tau = (np.arange(n) - n // 2) * grid.dtau
    return t, rho, tau, hat


@dataclass(frozen=True, eq=False)
class Mollifier:
    T: float
    grid: GridSpec
    delta0: float
    eps0: float
    parseval_residual: float
    min_hat: float

    @cached_property
    def theta(self) -> AutocorrelatedBump:
        return AutocorrelatedBump(self.T)

    def rho_T(self, t):
        return rho1(np.asarray(t, dtype=float) / self.T)

    def __call__(self, x):
        """theta_T(x) = T rho_1hat(T x)."""
        return self.theta(x)

    def dilate(self, factor: float) -> "Mollifier":
        return Mollifier(self.T * factor, self.grid, self.delta0, self.eps0, self.parseval_residual, self.min_hat)

    @cached_property
    def cdf_rule(self):
        """Nodes and weights with Theta_T(y) = 1/2 + sum_q c_q sin(y t_q) / t_q for |T y| < CDF_CUTOFF."""
        n = 64 * math.ceil((0.6 * CDF_CUTOFF + 64) / 64)
        s, w = _legendre_half(n)
        t = (s + 0.5) * self.T
        fhat = self.theta.fourier_profile(t)
        return t, 2 * w * self.T * fhat

    def cdf(self, y):
        """int_{-inf}^y theta_T."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        nodes, coef = self.cdf_rule
        return atom_convolution(y, np.zeros(1), np.ones(1), nodes, coef, 1.0, CDF_CUTOFF / self.T, 2)


def build_mollifier(T: float, grid: GridSpec | None = None, _refined: bool = False) -> Mollifier:
    """Mollifier at scale T with measured Fourier floor (delta0, eps0) and a Parseval check.

    The Parseval residual compares int rho_1^2 from the sampled autocorrelation with
    2 pi int rho_1hat^2 from the independent cosine-transform formula.
    """
    if not T > 0:
        raise InputError("mollifier scale T must be positive")
    grid = grid or GridSpec()
    t, rho, tau, hat = _fft_transform(grid)
    energy_t = neumaier_sum(rho**2) * grid.dt
    keep = np.abs(tau) <= 600.0
    exact = rho1_hat(tau[keep])
    energy_tau = 2 * np.pi * neumaier_sum(exact**2) * grid.dtau
    resid = abs(energy_t - energy_tau) / energy_tau
    if resid > PARSEVAL_TOL:
        if _refined:
            raise AccuracyError(f"mollifier grid too coarse: Parseval residual {resid:.3e}")
        log.info("Parseval residual %.3e, refining the grid once", resid)
        return build_mollifier(T, GridSpec(2 * grid.points, grid.span), _refined=True)
    # floor: largest eps0 with hat >= hat(0)/2 on [0, eps0]
    pos = tau >= 0
    tp, hp = tau[pos], hat[pos]
    below = np.flatnonzero(hp < 0.5 * hp[0])
    j = below[0] - 1 if below.size else hp.size - 1
    eps0 = float(tp[j])
    delta0 = float(np.min(hp[: j + 1]))
    return Mollifier(float(T), grid, delta0, eps0, float(resid), float(np.min(hat)))


# -- counting functions ------------------------------------------------------------


def _compensated_cumsum(w):
    out = np.empty(w.size)
    s = c = 0.0
    for i, x in enumerate(w):
        t = s + x
        c += (s - t) + x if abs(s) >= abs(x) else (x - t) + s
        s = t
        out[i] = s + c
    return out


@dataclass(frozen=True, eq=False)
class CountingFunction:
    """sigma(x) = mu(-inf, x], right-continuous."""

    jumps: np.ndarray
    cumulative: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_measure(cls, mu: WeylMeasure) -> "CountingFunction":
        order = np.argsort(mu.locations, kind="stable")
        loc, w = mu.locations[order], mu.weights[order]
        return cls(loc, _compensated_cumsum(w), w)

    @property
    def total_variation(self) -> float:
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.jumps, x, side="right")
        padded = np.concatenate([[0.0], self.cumulative])
        return padded[idx]


def smoothed_counting(sigma: CountingFunction, mol: Mollifier, x_grid, backend=None) -> np.ndarray:
    """(sigma * theta_T)(x) = sum_j w_j Theta_T(x - lambda_j)."""
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    nodes, coef = mol.cdf_rule
    return atom_convolution(x, sigma.jumps, sigma.weights, nodes, coef, 1.0, CDF_CUTOFF / mol.T, 2, backend)


def convolve_counting(sigma: CountingFunction, mol: Mollifier, x_grid, backend=None):
    """(sigma * theta_T)(x) and its derivative (mu * theta_T)(x) on the grid."""
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    smooth = smoothed_counting(sigma, mol, x, backend)
    deriv = mol.theta.sum_over(sigma.jumps, sigma.weights, x, backend=backend)
    return smooth, deriv


def sharp_interval_count(mu: WeylMeasure, a: float, b: float) -> float:
    """Mass of atoms in the closed interval [a, b]."""
    if a > b:
        raise InputError("empty interval: a > b")
    inside = (mu.locations >= a) & (mu.locations <= b)
    return neumaier_sum(mu.weights[inside])


def smoothed_interval_count(mu: WeylMeasure, mol: Mollifier, a: float, b: float) -> float:
    """int_a^b (mu * theta_T)(x) dx = (sigma * theta_T)(b) - (sigma * theta_T)(a)."""
    sigma = CountingFunction.from_measure(mu)
    smooth = smoothed_counting(sigma, mol, [a, b])
    return float(smooth[1] - smooth[0])


def unscaled_locations(mu: WeylMeasure) -> np.ndarray:
    """Inverse of the dilation lambda = k(mu - E) - alpha sqrt(k)."""
    return mu.E + (mu.locations + mu.alpha * math.sqrt(mu.k)) / mu.k


def increment_bound(mu: WeylMeasure, mol: Mollifier, e: float, tau: float) -> tuple[float, float]:
    """(mu([e - tau, e]), (mu * theta_T)(e) / (T delta0)); the first is bounded by the second."""
    if not 0 <= tau < mol.eps0 / mol.T:
        raise InputError(f"tau must lie in [0, eps0/T) = [0, {mol.eps0 / mol.T:.4g})")
    lhs = sharp_interval_count(mu, e - tau, e)
    rhs = float(mol.theta.sum_over(mu.locations, mu.weights, [e])[0]) / (mol.T * mol.delta0)
    return lhs, rhs


def nu_pairing(exp: PredictedExpansion, k: float, g_hat, T: float | None = None) -> complex:
    """int g dnu_T = sum_n rho_1(n T_z / T) G_n e^{-i k n theta^h} ghat(n T_z).

    ``g_hat`` is the transform of the test function in the module convention.
    """
    if exp.branch != "periodic":
        raise InputError("nu pairing needs the periodic branch")
    ns = np.array(sorted(exp.coefficients))
    if T is not None:
        ns = ns[np.abs(ns) * exp.T_z < T]
    G = np.array([exp.coefficients[n] for n in ns])
    taper = rho1(ns * exp.T_z / T) if T is not None else 1.0
    return complex(np.sum(taper * G * exp.phases(k, ns) * g_hat(ns * exp.T_z)))


# -- two-term law --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoTermReport:
    k_values: list
    a: float
    b: float
    sharp: list
    predicted: list
    ratios: list
    monotone: bool
    T_values: list
    discrepancy: list
    T_exponent: float
    sweep: float

    def to_json(self) -> dict:
        return {
            "k_values": self.k_values, "a": self.a, "b": self.b, "sharp": self.sharp,
            "predicted": self.predicted, "ratio": self.ratios, "monotone": self.monotone,
            "T": self.T_values, "smoothed_minus_sharp": self.discrepancy, "T_exponent": self.T_exponent,
            "sweep": self.sweep,
        }


def swept_discrepancy(mu: WeylMeasure, mol: Mollifier, a: float, b: float, sweep: float,
                      samples: int = 64) -> float:
    """(1/d) int_0^d |smoothed - sharp| over [a, b + s], by the midpoint rule in s.

    For atomic measures the gap-aligned discrepancy decays faster than 1/T; moving
    the upper endpoint across one gap picks up the atom-crossing term that carries
    the 1/T law.
    """
    s = (np.arange(samples) + 0.5) * sweep / samples
    sigma = CountingFunction.from_measure(mu)
    sm = smoothed_counting(sigma, mol, np.concatenate([[a], b + s]))
    sharp = np.array([sharp_interval_count(mu, a, b + si) for si in s])
    return float(np.mean(np.abs(sm[1:] - sm[0] - sharp)))


def _monotone_to_one(ratios, noise: float) -> bool:
    d = np.abs(np.asarray(ratios) - 1)
    return bool(np.all(np.diff(d) <= noise))


def two_term_verify(mu_ladder: dict, predicted: PredictedExpansion, a: float, b: float,
                    T_values=(5.0, 10.0, 20.0, 40.0), sweep: float | None = None,
                    noise: float = 1e-3) -> TwoTermReport:
    """Sharp counts against (k/2pi)^{m-1/2} nu_k(a, b), and the 1/T law at the largest k."""
    if predicted.branch == "off_level":
        raise InputError("two-term law needs an on-level prediction")
    ks = sorted(int(k) for k in mu_ladder)
    if len(ks) < 3:
        raise InputError("a k-ladder needs at least three levels")
    sharp, pred = [], []
    for k in ks:
        mu = mu_ladder[k]
        if mu.k != k:
            raise InputError(f"measure for k={k} carries k={mu.k}")
        sharp.append(sharp_interval_count(mu, a, b))
        pred.append(float((predicted.prefactor(k) * nu_interval(predicted, k, a, b)).real))
    ratios = [s / p for s, p in zip(sharp, pred)]
    mu = mu_ladder[ks[-1]]
    if sweep is None:
        sweep = float(np.median(np.diff(np.sort(mu.locations)))) if mu.locations.size > 1 else 1.0
    disc = [swept_discrepancy(mu, build_mollifier(T), a, b, sweep) for T in T_values]
    return TwoTermReport(ks, a, b, sharp, pred, ratios, _monotone_to_one(ratios, noise), list(T_values), disc,
                         fit_exponent(T_values, disc), sweep)


def write_two_term(path, report: TwoTermReport):
    return write_json(path, report.to_json())


def write_convolution_samples(path, x, smooth, deriv):
    return write_csv(path, ["x", "sigma_theta", "d_dx"], zip(map(float, x), map(float, smooth), map(float, deriv)))
