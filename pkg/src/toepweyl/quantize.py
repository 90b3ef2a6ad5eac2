"""Finite Toeplitz Hamiltonians and pointwise eigenspace masses.

Three settings are exactly controllable:

* ``fock_truncated``: Bargmann-Fock space of C^m, weight e^{-k|z|^2}, monomials
  z^a with |a| <= N;
* ``radial_bergman``: C^m with a radial potential phi(|z|^2), monomials still
  orthogonal, norms by radial quadrature;
* ``sphere_spin``: CP^1 with L = O(1), sections z^a for a = 0..k in the affine
  chart, weight (1 + |z|^2)^{-k}.

Volumes follow omega = i sum dz ^ dzbar, so dVol = 2^m d^{2m}x and the Fock norm
of z^a is (2 pi)^m a! / k^{|a| + m}. H_matrix holds <H e_b, e_a> in the
orthonormal monomial basis (multiplication Toeplitz operator). Everything that
can overflow is carried as logarithms.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.linalg import eig_banded, eigh
from scipy.optimize import minimize_scalar
from scipy.special import betaln, gammaln, logsumexp
from scipy.stats import poisson

from .errors import (
    AccuracyError,
    IntegrationError,
    SingularityError,
    UnsupportedError,
    ValidationError,
)
from .export import sha256_file, write_csv, write_json
from .functions import Polynomial, RadialFunction

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2 * np.pi))
DENSE_LIMIT = 20_000


# -- basis bookkeeping ----------------------------------------------------------


def monomial_exponents(m: int, N: int) -> np.ndarray:
    """All a in N^m with |a| <= N, ordered by total degree then lexicographically."""
    if m == 1:
        return np.arange(N + 1)[:, None]
    out = []
    for d in range(N + 1):
        for c in itertools.combinations(range(d + m - 1), m - 1):
            bars = (-1,) + c + (d + m - 1,)
            out.append([bars[i + 1] - bars[i] - 1 for i in range(m)])
    return np.array(out, dtype=int)


def fock_log_norms(exps, k: float) -> np.ndarray:
    """log of (2 pi)^m a! / k^{|a| + m}."""
    exps = np.atleast_2d(exps)
    m = exps.shape[1]
    return m * LOG_2PI + gammaln(exps + 1).sum(axis=1) - (exps.sum(axis=1) + m) * np.log(k)


def _polynomial_matrix(H: Polynomial, exps: np.ndarray, log_norm: Callable[[np.ndarray], np.ndarray]):
    """<H e_b, e_a> for orthogonal monomials with squared norms exp(log_norm(a))."""
    index = {tuple(a): i for i, a in enumerate(exps)}
    lnb = log_norm(exps)
    rows, cols, vals = [], [], []
    for (J, K), c in H.terms.items():
        J, K = np.array(J), np.array(K)
        target = exps + J - K
        ok = np.all(target >= 0, axis=1)
        bs = np.flatnonzero(ok)
        if bs.size == 0:
            continue
        ia = np.array([index.get(tuple(t), -1) for t in target[bs]])
        keep = ia >= 0
        bs, ia = bs[keep], ia[keep]
        if bs.size == 0:
            continue
        lv = log_norm(exps[bs] + J) - 0.5 * lnb[ia] - 0.5 * lnb[bs]
        rows.append(ia)
        cols.append(bs)
        vals.append(c * np.exp(lv))
    n = len(exps)
    if not rows:
        return sparse.csr_array((n, n), dtype=complex)
    M = sparse.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    M.sum_duplicates()
    return M


def _hermitize(M):
    D = M - M.conj().T
    res = float(np.max(np.abs(D.data))) if D.nnz else 0.0
    scale = max(1.0, float(np.max(np.abs(M.data))) if M.nnz else 1.0)
    return (0.5 * (M + M.conj().T)).tocsr(), res / scale


# -- systems --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantizedSystem:
    """A finite Toeplitz Hamiltonian in an orthogonal monomial basis."""

    kind: str
    k: int
    exponents: np.ndarray
    log_norms: np.ndarray
    H: sparse.csr_array
    log_weight: Callable = field(repr=False)
    model: object = field(default=None, repr=False)
    cutoff: int | None = None
    hermitian_residual: float = 0.0
    tail_tol: float = 1e-12

    @property
    def m(self) -> int:
        return self.exponents.shape[1]

    @property
    def dim(self) -> int:
        return self.exponents.shape[0]

    @property
    def basis_norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    @property
    def H_matrix(self) -> np.ndarray:
        if self.dim > DENSE_LIMIT:
            raise UnsupportedError(f"dense H_matrix of dimension {self.dim} is not materialized")
        return self.H.toarray()

    @cached_property
    def is_diagonal(self) -> bool:
        coo = self.H.tocoo()
        return bool(np.all(coo.row == coo.col))

    @cached_property
    def bandwidth(self) -> int:
        coo = self.H.tocoo()
        return int(np.max(np.abs(coo.row - coo.col), initial=0))

    def coherent(self, z) -> np.ndarray:
        """Values e_a(z) h^{k/2}(z) of the orthonormal basis at z."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if z.shape != (self.m,):
            raise ValidationError(f"expected a point of C^{self.m}, got shape {z.shape}")
        r = np.abs(z)
        with np.errstate(divide="ignore"):
            lr = np.where(r > 0, np.log(np.where(r > 0, r, 1.0)), -np.inf)
        E = self.exponents
        with np.errstate(invalid="ignore"):
            logmod = np.where(E > 0, E * lr, 0.0).sum(axis=1)
        logmod = logmod - 0.5 * self.log_norms + 0.5 * float(self.log_weight(z))
        phase = (E * np.angle(z)).sum(axis=1)
        return np.exp(logmod + 1j * phase)

    def bergman_diagonal(self, z) -> float:
        c = self.coherent(z)
        nz = np.abs(c) > 0
        return float(np.exp(logsumexp(2 * np.log(np.abs(c[nz]))))) if nz.any() else 0.0

    def tail_mass(self, z) -> float:
        """Fraction of the coherent state at z beyond the cutoff (Fock only)."""
        if self.kind != "fock_truncated":
            return 0.0
        u = float(np.sum(np.abs(np.atleast_1d(z)) ** 2))
        return float(poisson.sf(self.cutoff, self.k * u))

    def check_tail(self, z, tail_tol: float | None = None):
        tol = self.tail_tol if tail_tol is None else tail_tol
        t = self.tail_mass(z)
        if t > tol:
            raise AccuracyError(
                f"coherent-state tail {t:.3e} beyond cutoff {self.cutoff} exceeds tail_tol {tol:.1e}"
            )
        return t

    @cached_property
    def eigensystem(self) -> tuple[np.ndarray, np.ndarray | None]:
        """(eigenvalues, eigenvectors); eigenvectors are None for diagonal H."""
        if self.is_diagonal:
            return np.real(self.H.diagonal()), None
        if self.m == 1 and self.bandwidth < 16 and self.dim > 400:
            u = self.bandwidth
            band = np.zeros((u + 1, self.dim), dtype=complex)
            for d in range(u + 1):
                band[u - d, d:] = self.H.diagonal(d)
            try:
                w, V = eig_banded(band, lower=False)
            except np.linalg.LinAlgError as exc:
                raise SingularityError(f"banded eigensolver failed: {exc}") from exc
            return w, V
        if self.dim > DENSE_LIMIT:
            raise UnsupportedError(f"dense eigensolve of dimension {self.dim} refused")
        try:
            w, V = eigh(self.H.toarray())
        except np.linalg.LinAlgError as exc:
            raise SingularityError(f"eigensolver failed: {exc}") from exc
        return w, V

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(self.eigensystem[0])


# -- Bargmann-Fock --------------------------------------------------------------


def default_fock_cutoff(k: float, z_eval=None) -> int:
    """N = max(4 k max|z|^2, 64)."""
    if z_eval is None:
        return 64
    pts = np.atleast_2d(np.asarray(z_eval, dtype=complex))
    u = float(np.max(np.sum(np.abs(pts) ** 2, axis=1)))
    return int(max(np.ceil(4 * k * u), 64))


def _require_polynomial(H) -> Polynomial:
    if not isinstance(H, Polynomial):
        raise UnsupportedError(f"Hamiltonian must be a polynomial in (z, conj z), got {type(H).__name__}")
    return H


def _is_flat(phi, m) -> bool:
    if not isinstance(phi, Polynomial):
        return False
    eye = {(tuple(int(i == j) for i in range(m)),) * 2: 1.0 for j in range(m)}
    return phi.terms.keys() == eye.keys() and all(abs(phi.terms[k] - 1) < 1e-15 for k in eye)


def build_fock(model, k: int, cutoff: int | None = None, z_eval=None, tail_tol: float = 1e-12) -> QuantizedSystem:
    """Toeplitz matrix of a polynomial H on truncated Bargmann-Fock space.

    Matrix elements come from the Gaussian moments <z^p, z^p> = (2 pi)^m p!/k^{|p|+m}.
    With ``z_eval`` the Husimi tail beyond the cutoff is checked at build time.
    """
    if not _is_flat(model.potential, model.m):
        raise ValidationError("build_fock needs the flat potential |z|^2")
    H = _require_polynomial(model.hamiltonian)
    N = default_fock_cutoff(k, z_eval) if cutoff is None else int(cutoff)
    exps = monomial_exponents(model.m, N)
    M, res = _hermitize(_polynomial_matrix(H, exps, lambda a: fock_log_norms(a, k)))
    m = model.m
    sysm = QuantizedSystem(
        kind="fock_truncated", k=int(k), exponents=exps, log_norms=fock_log_norms(exps, k), H=M,
        log_weight=lambda z: -k * float(np.sum(np.abs(z) ** 2)), model=model, cutoff=N,
        hermitian_residual=res, tail_tol=tail_tol,
    )
    if z_eval is not None:
        for z in np.atleast_2d(np.asarray(z_eval, dtype=complex)).reshape(-1, m):
            sysm.check_tail(z)
    return sysm


# -- radial Bergman -------------------------------------------------------------


def radial_profile(potential, m: int, n_check: int = 16, seed: int = 0) -> Callable:
    """phi as a function of u = |z|^2, after checking rotational invariance."""
    if isinstance(potential, RadialFunction):
        return lambda u: np.asarray(potential.derivs(np.asarray(u, dtype=float))[0], dtype=float)
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n_check, m)) + 1j * rng.normal(size=(n_check, m))
    u = np.sum(np.abs(Z) ** 2, axis=1)
    axis = np.zeros((n_check, m), dtype=complex)
    axis[:, 0] = np.sqrt(u)
    a, b = potential.value(Z), potential.value(axis)
    if np.max(np.abs(a - b)) > 1e-10 * max(1.0, float(np.max(np.abs(b)))):
        raise ValidationError("potential is not radial", residual=float(np.max(np.abs(a - b))))

    def f(u):
        u = np.asarray(u, dtype=float)
        pts = np.zeros(u.shape + (m,), dtype=complex)
        pts[..., 0] = np.sqrt(np.maximum(u, 0.0))
        return potential.value(pts)

    return f


def _log_integrand(phi_u, k, s):
    def G(v):
        v = np.asarray(v, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            val = (s + 1) * v - k * phi_u(np.exp(v))
        return np.where(np.isfinite(val), val, -np.inf)

    return G


def _peak_window(G, drop: float = 80.0):
    grid = np.linspace(-60.0, 40.0, 4001)
    vals = G(grid)
    i = int(np.argmax(vals))
    if i == grid.size - 1 or not np.isfinite(vals[i]):
        raise IntegrationError("radial weight is not integrable on the sampled range")
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda v: -float(G(v)), bounds=(lo_b, hi_b), method="bounded",
                          options={"xatol": 1e-12})
    v0 = float(res.x)
    g0 = float(G(v0))
    below = np.flatnonzero(vals < g0 - drop)
    left = below[below < i]
    right = below[below > i]
    if right.size == 0:
        raise IntegrationError("radial weight does not decay at large |z|")
    lo = grid[left[-1]] if left.size else grid[0]
    return v0, g0, float(lo), float(grid[right[0]])


def radial_moment(phi_u, k: float, s: float, scheme: str = "quad") -> float:
    """log of int_0^inf u^s e^{-k phi(u)} du, computed in v = log u."""
    G = _log_integrand(phi_u, k, s)
    v0, g0, lo, hi = _peak_window(G)
    h = lambda v: float(np.exp(G(v) - g0))  # noqa: E731
    if scheme == "quad":
        val, err = quad(h, lo, hi, points=[v0], epsabs=0.0, epsrel=1e-13, limit=400)
        if not np.isfinite(val) or val <= 0 or err > 1e-9 * val:
            raise IntegrationError(f"adaptive radial quadrature failed (value {val}, error {err})")
    elif scheme == "trapezoid":
        v = np.linspace(lo, hi, 6001)
        val = float(np.trapezoid(np.exp(G(v) - g0), v))
    else:
        raise ValidationError(f"unknown quadrature scheme {scheme!r}")
    return g0 + float(np.log(val))


def _check_radial_metric(model, phi_u, k, s_max):
    """omega > 0 on the u-range carrying the quadrature mass."""
    G = _log_integrand(phi_u, k, s_max)
    _, _, _, hi = _peak_window(G)
    u = np.exp(np.linspace(-30.0, hi, 200))
    pts = np.zeros((u.size, model.m), dtype=complex)
    pts[:, 0] = np.sqrt(u)
    Gm = model.metric(pts)
    lam = np.linalg.eigvalsh(0.5 * (Gm + np.conj(np.swapaxes(Gm, -1, -2)))).min()
    if lam <= 0:
        raise SingularityError(f"omega is not positive on the quadrature support (min {lam:.3e})",
                               condition=np.inf)


def build_radial_bergman(model, k: int, cutoff: int = 64, scheme: str = "quad") -> QuantizedSystem:
    """Toeplitz matrix of a polynomial H for a radial potential phi(|z|^2).

    Monomials stay orthogonal; |z^a|^2 = (2 pi)^m a!/(|a|+m-1)! R(|a|+m-1) with
    R(s) = int_0^inf u^s e^{-k phi(u)} du by the chosen quadrature scheme.
    """
    m = model.m
    phi_u = radial_profile(model.potential, m)
    H = _require_polynomial(model.hamiltonian)
    exps = monomial_exponents(m, int(cutoff))
    deg = max((sum(J) for J, _ in H.terms), default=0)
    s_max = int(cutoff) + deg + m - 1
    _check_radial_metric(model, phi_u, k, s_max)
    logR = np.array([radial_moment(phi_u, k, s, scheme) for s in range(s_max + 1)])

    def log_norm(a):
        a = np.atleast_2d(a)
        tot = a.sum(axis=1)
        return m * LOG_2PI + gammaln(a + 1).sum(axis=1) - gammaln(tot + m) + logR[tot + m - 1]

    M, res = _hermitize(_polynomial_matrix(H, exps, log_norm))
    return QuantizedSystem(
        kind="radial_bergman", k=int(k), exponents=exps, log_norms=log_norm(exps), H=M,
        log_weight=lambda z: -k * float(phi_u(np.sum(np.abs(z) ** 2))), model=model,
        cutoff=int(cutoff), hermitian_residual=res,
    )


# -- CP^1 spin spaces -----------------------------------------------------------


def _pmul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            key = tuple(x + y for x, y in zip(ka, kb))
            out[key] = out.get(key, 0) + ca * cb
    return out


def spherical_to_w(H: dict) -> dict:
    """Cartesian monomials x1^p1 x2^p2 x3^p3 -> w^p conj(w)^q x3^r with w = x1 + i x2."""
    x1 = {(1, 0, 0): 0.5, (0, 1, 0): 0.5}
    x2 = {(1, 0, 0): -0.5j, (0, 1, 0): 0.5j}
    x3 = {(0, 0, 1): 1.0}
    out: dict = {}
    for (p1, p2, p3), c in H.items():
        if np.iscomplexobj(c) and np.imag(c) != 0:
            raise ValidationError("spherical Hamiltonian coefficients must be real")
        term = {(0, 0, 0): complex(c)}
        for base, e in ((x1, p1), (x2, p2), (x3, p3)):
            for _ in range(int(e)):
                term = _pmul(term, base)
        for key, v in term.items():
            out[key] = out.get(key, 0) + v
    return {k_: v for k_, v in out.items() if abs(v) > 1e-15}


def sphere_log_norms(k: int) -> np.ndarray:
    """log of 2 pi B(a + 1, k + 1 - a), the norm of z^a against (1+|z|^2)^{-k} omega_FS."""
    a = np.arange(k + 1)
    return LOG_2PI + betaln(a + 1, k + 1 - a)


def build_sphere_spin(H_spherical, k: int, max_degree: int = 3) -> QuantizedSystem:
    """(k+1)-dimensional Toeplitz matrix of a polynomial in (x1, x2, x3) on S^2.

    ``H_spherical`` maps exponent triples (p1, p2, p3) to real coefficients. In
    the chart, w = 2z/(1+u) and x3 = (1-u)/(1+u); every matrix element is a
    finite alternating sum of Beta integrals.
    """
    if isinstance(H_spherical, (int, float)):
        H_spherical = {(0, 0, 0): float(H_spherical)}
    deg = max((sum(e) for e in H_spherical), default=0)
    if deg > max_degree:
        raise UnsupportedError(f"spherical Hamiltonian of degree {deg} exceeds {max_degree}")
    k = int(k)
    W = spherical_to_w(H_spherical)
    ln = sphere_log_norms(k)
    a_idx = np.arange(k + 1)
    rows, cols, vals = [], [], []
    for (p, q, r), c in W.items():
        b = a_idx
        a = b + p - q
        ok = (a >= 0) & (a <= k)
        a, b = a[ok], b[ok]
        s = b + p
        t = k + 2 + p + q + r
        acc = np.zeros(a.size)
        for i in range(r + 1):
            sign = (-1) ** i
            acc = acc + sign * np.exp(
                np.log(float(_binom(r, i))) + betaln(s + i + 1, t - s - i - 1)
                + (p + q) * np.log(2.0) + LOG_2PI - 0.5 * ln[a] - 0.5 * ln[b]
            )
        rows.append(a)
        cols.append(b)
        vals.append(c * acc)
    n = k + 1
    if rows:
        M = sparse.coo_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()
        M.sum_duplicates()
    else:
        M = sparse.csr_array((n, n), dtype=complex)
    M, res = _hermitize(M)
    return QuantizedSystem(
        kind="sphere_spin", k=k, exponents=a_idx[:, None], log_norms=ln, H=M,
        log_weight=lambda z: -k * float(np.log1p(np.sum(np.abs(z) ** 2))),
        model=dict(H_spherical), cutoff=k, hermitian_residual=res,
    )


def _binom(n, r):
    from math import comb

    return comb(n, r)


def sphere_chart(x) -> np.ndarray:
    """Affine coordinate z = (x1 + i x2)/(1 + x3) of a point on the unit sphere."""
    x = np.asarray(x, dtype=float)
    if x[2] <= -1 + 1e-14:
        raise ValidationError("the south pole is outside the affine chart")
    return np.array([(x[0] + 1j * x[1]) / (1 + x[2])])


# -- pointwise masses -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    masses: np.ndarray
    multiplicities: np.ndarray
    k: int
    z: np.ndarray
    total_mass: float
    bergman_diagonal: float
    kind: str = ""
    cutoff: int | None = None
    tolerances: dict = field(default_factory=dict)

    def mean(self) -> float:
        return float(np.dot(self.eigenvalues, self.masses) / self.total_mass)

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self.eigenvalues - mu) ** 2, self.masses) / self.total_mass)

    def to_csv(self, path):
        rows = ((j, float(mu), float(w)) for j, (mu, w) in enumerate(zip(self.eigenvalues, self.masses)))
        return write_csv(path, ["j", "mu", "mass"], rows)

    def manifest(self, csv_path=None) -> dict:
        out = {
            "kind": self.kind, "k": self.k, "z": [complex(c) for c in self.z], "cutoff": self.cutoff,
            "tolerances": dict(self.tolerances), "total_mass": self.total_mass,
            "bergman_diagonal": self.bergman_diagonal, "n_atoms": int(self.eigenvalues.size),
        }
        if csv_path is not None:
            out["checksums"] = {str(csv_path): sha256_file(csv_path)}
        return out

    def write(self, stem) -> tuple:
        csv_path = self.to_csv(f"{stem}.csv")
        json_path = write_json(f"{stem}.json", self.manifest(csv_path))
        return csv_path, json_path


def merge_clusters(mu: np.ndarray, w: np.ndarray, rel_gap: float = 1e-10):
    """Merge sorted eigenvalues closer than rel_gap * scale into single atoms."""
    if mu.size == 0:
        return mu, w, np.zeros(0, dtype=int)
    scale = max(1.0, float(np.max(np.abs(mu))))
    starts = np.concatenate([[0], np.flatnonzero(np.diff(mu) > rel_gap * scale) + 1])
    counts = np.diff(np.concatenate([starts, [mu.size]]))
    wm = np.add.reduceat(w, starts)
    mm = np.add.reduceat(mu, starts) / counts
    return mm, wm, counts


def pointwise_masses(system: QuantizedSystem, z, cluster_gap: float = 1e-10,
                     mass_rtol: float = 1e-8) -> SpectralData:
    """Eigenvalues of H_matrix and the weights Pi_{k,j}(z) = sum over the eigenspace of |s(z)|^2_h."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    system.check_tail(z)
    c = system.coherent(z)
    w, V = system.eigensystem
    amp2 = np.abs(c) ** 2 if V is None else np.abs(V.T @ c) ** 2
    order = np.argsort(w, kind="stable")
    mu, masses = np.asarray(w[order], dtype=float), amp2[order]
    neg = masses < 0
    if np.any(masses < -1e-12):
        raise AccuracyError("negative eigenspace mass")
    if neg.any():
        log.info("clipped %d tiny negative masses", int(neg.sum()))
        masses = np.where(neg, 0.0, masses)
    mu, masses, mult = merge_clusters(mu, masses, cluster_gap)
    total = float(masses.sum())
    berg = system.bergman_diagonal(z)
    if berg > 0 and abs(total - berg) > mass_rtol * berg:
        raise AccuracyError(f"eigenspace masses sum to {total}, Bergman diagonal is {berg}")
    return SpectralData(
        eigenvalues=mu, masses=masses, multiplicities=mult, k=system.k, z=z, total_mass=total,
        bergman_diagonal=berg, kind=system.kind, cutoff=system.cutoff,
        tolerances={"cluster_gap": cluster_gap, "mass_rtol": mass_rtol, "tail_tol": system.tail_tol},
    )
