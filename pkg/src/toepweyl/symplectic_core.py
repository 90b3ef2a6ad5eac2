"""Linear algebra on Sp(2m, R): complexification, classification, and the
metaplectic coefficients built from the holomorphic block P.

Real coordinates are ordered (x_1..x_m, y_1..y_m) with z_j = x_j + i y_j, so a
real matrix S = [[A, B], [C, D]] acts as z' = P z + Q conj(z) with

    P = (A + D + i(C - B)) / 2,    Q = (A - D + i(B + C)) / 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import AccuracyError, DimensionError, SingularityError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _half_dim(S):
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    if S.shape[0] % 2:
        raise DimensionError(f"symplectic matrices have even size, got {S.shape[0]}")
    return S.shape[0] // 2


def standard_form(m: int) -> np.ndarray:
    """Matrix of the standard symplectic form, [[0, I], [-I, 0]]."""
    eye, zero = np.eye(m), np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


def standard_complex_structure(m: int) -> np.ndarray:
    """J0 = [[0, -I], [I, 0]], multiplication by i in (x, y) coordinates."""
    return -standard_form(m)


def conjugation_matrix(m: int) -> np.ndarray:
    """W = (1/sqrt 2) [[I, I], [-iI, iI]], taking (z, conj z) to sqrt(2)(x, y)."""
    eye = np.eye(m)
    return np.block([[eye, eye], [-1j * eye, 1j * eye]]) / np.sqrt(2.0)


def realify(c: np.ndarray) -> np.ndarray:
    """Real 2m x 2m matrix of the complex-linear map z -> c z."""
    c = np.asarray(c, dtype=complex)
    return np.block([[c.real, -c.imag], [c.imag, c.real]])


def symplectic_residual(S) -> float:
    S = np.asarray(S, dtype=float)
    m = _half_dim(S)
    Om = standard_form(m)
    return float(np.max(np.abs(S.T @ Om @ S - Om)))


def check_symplectic(S, tol: float = 1e-12) -> tuple[bool, float]:
    """Return (passes, residual) with residual = max |S^T Omega S - Omega|."""
    r = symplectic_residual(S)
    return r <= tol, r


def symplectic_inverse(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    Om = standard_form(_half_dim(S))
    return -Om @ S.T @ Om


def project_symplectic(S) -> np.ndarray:
    """One Newton step S(I - Omega^T R / 2) towards Sp, where R = S^T Omega S - Omega."""
    S = np.asarray(S, dtype=float)
    Om = standard_form(_half_dim(S))
    R = S.T @ Om @ S - Om
    R = 0.5 * (R - R.T)
    return S @ (np.eye(S.shape[0]) - 0.5 * Om.T @ R)


@dataclass(frozen=True)
class SymplecticMap:
    matrix: np.ndarray
    m: int
    tol: float = DEFAULT_TOL

    @classmethod
    def from_matrix(cls, S, tol: float = DEFAULT_TOL, project: bool = True) -> "SymplecticMap":
        S = np.asarray(S, dtype=float)
        m = _half_dim(S)
        scale = max(1.0, float(np.max(np.abs(S))) ** 2)
        r = symplectic_residual(S)
        if r > tol * scale:
            raise ValidationError(
                f"matrix is not symplectic: residual {r:.3e} exceeds {tol:.1e}",
                residual=r,
                invariant="symplectic_residual",
            )
        if project and r > 64 * np.finfo(float).eps * scale:
            S2 = project_symplectic(S)
            log.debug("projected onto Sp(%d): distance %.3e", 2 * m, np.max(np.abs(S2 - S)))
            S = S2
        return cls(_frozen(S), m, tol)

    @property
    def A(self):
        return self.matrix[: self.m, : self.m]

    @property
    def B(self):
        return self.matrix[: self.m, self.m :]

    @property
    def C(self):
        return self.matrix[self.m :, : self.m]

    @property
    def D(self):
        return self.matrix[self.m :, self.m :]

    @property
    def residual(self) -> float:
        return symplectic_residual(self.matrix)

    def inverse(self) -> "SymplecticMap":
        return SymplecticMap(_frozen(symplectic_inverse(self.matrix)), self.m, self.tol)

    def __matmul__(self, other: "SymplecticMap") -> "SymplecticMap":
        return SymplecticMap(_frozen(self.matrix @ other.matrix), self.m, max(self.tol, other.tol))

    def power(self, n: int) -> "SymplecticMap":
        base = self if n >= 0 else self.inverse()
        out = np.linalg.matrix_power(base.matrix, abs(n))
        return SymplecticMap(_frozen(out), self.m, self.tol)


def as_symplectic(S, tol: float = DEFAULT_TOL) -> SymplecticMap:
    if isinstance(S, SymplecticMap):
        return S
    return SymplecticMap.from_matrix(S, tol=tol)


@dataclass(frozen=True)
class ComplexBlocks:
    P: np.ndarray
    Q: np.ndarray

    @property
    def m(self) -> int:
        return self.P.shape[0]

    def matrix(self) -> np.ndarray:
        """[[P, Q], [conj Q, conj P]], the action on (z, conj z)."""
        return np.block([[self.P, self.Q], [self.Q.conj(), self.P.conj()]])

    def folland_residuals(self) -> dict[str, float]:
        P, Q = self.P, self.Q
        eye = np.eye(self.m)
        Ph, Qh = P.conj().T, Q.conj().T
        return {
            "PPh-QQh=I": float(np.max(np.abs(P @ Ph - Q @ Qh - eye))),
            "PQt=QPt": float(np.max(np.abs(P @ Q.T - Q @ P.T))),
            "PhP-QtQbar=I": float(np.max(np.abs(Ph @ P - Q.T @ Q.conj() - eye))),
            "PtQbar=QhP": float(np.max(np.abs(P.T @ Q.conj() - Qh @ P))),
        }

    def folland_residual(self) -> float:
        return max(self.folland_residuals().values())

    def inverse(self) -> "ComplexBlocks":
        return ComplexBlocks(_frozen(self.P.conj().T), _frozen(-self.Q.T))


def complexify(S, tol: float = DEFAULT_TOL) -> ComplexBlocks:
    S = as_symplectic(S, tol)
    P = 0.5 * (S.A + S.D + 1j * (S.C - S.B))
    Q = 0.5 * (S.A - S.D + 1j * (S.B + S.C))
    return ComplexBlocks(_frozen(P), _frozen(Q))


def decomplexify(blocks: ComplexBlocks, tol: float = DEFAULT_TOL) -> SymplecticMap:
    scale = max(1.0, float(np.max(np.abs(blocks.P))) ** 2)
    r = blocks.folland_residual()
    if r > tol * scale:
        raise ValidationError(
            f"Folland identities fail: residual {r:.3e}", residual=r, invariant="folland"
        )
    P, Q = blocks.P, blocks.Q
    A = P.real + Q.real
    D = P.real - Q.real
    C = P.imag + Q.imag
    B = Q.imag - P.imag
    return SymplecticMap.from_matrix(np.block([[A, B], [C, D]]), tol=tol)


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class Classification:
    kind: str  # identity | positive_definite_symmetric | unitary_type | other
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v1_dim: int = 0
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _v1_dim(eigs: np.ndarray, gap: float) -> int:
    return int(np.sum(np.abs(eigs - 1.0) <= gap * np.maximum(1.0, np.abs(eigs))))


def classify_pds(S, tol: float = DEFAULT_TOL, cluster_gap: float = 1e-6) -> Classification:
    S = as_symplectic(S, tol)
    M = S.matrix
    n = 2 * S.m
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - np.eye(n))) <= tol:
        return Classification("identity", np.zeros(S.m), n, np.ones(n))
    if np.max(np.abs(M - M.T)) <= tol * scale:
        mu = np.linalg.eigvalsh(0.5 * (M + M.T))
        if mu[0] > 0:
            logs = np.log(mu)
            lam = 0.5 * (logs[::-1][: S.m] - logs[: S.m])
            lam = np.clip(lam, 0.0, None)
            return Classification(
                "positive_definite_symmetric", lam, _v1_dim(mu, cluster_gap), mu
            )
    eigs = np.linalg.eigvals(M)
    if np.max(np.abs(M.T @ M - np.eye(n))) <= tol * scale:
        return Classification("unitary_type", np.zeros(S.m), _v1_dim(eigs, cluster_gap), eigs)
    return Classification("other", np.zeros(0), _v1_dim(eigs, cluster_gap), eigs)


@dataclass(frozen=True)
class PdsSpectrum:
    """S = exp(X) with complexified generator [[0, q], [conj q, 0]], q = W diag(lambdas) Y^*.

    The holomorphic block of S^n is then W diag(cosh(n lambdas)) W^*.
    """

    lambdas: np.ndarray
    W: np.ndarray

    def holomorphic_block(self, n: int) -> np.ndarray:
        return (self.W * np.cosh(n * self.lambdas)) @ self.W.conj().T

    def det_P(self, n: int) -> float:
        return float(np.prod(np.cosh(n * self.lambdas)))

    def matrix_element(self, alpha: np.ndarray, n: int) -> float:
        c = self.W.conj().T @ alpha
        return float(np.sum(np.abs(c) ** 2 / np.cosh(n * self.lambdas)))


def pds_spectrum(S, tol: float = DEFAULT_TOL) -> PdsSpectrum:
    S = as_symplectic(S, tol)
    M = 0.5 * (S.matrix + S.matrix.T)
    mu, V = np.linalg.eigh(M)
    if mu[0] <= 0:
        raise ValidationError("matrix is not positive definite", residual=float(mu[0]))
    X = (V * np.log(mu)) @ V.T
    m = S.m
    q = X[:m, :m] + 1j * X[:m, m:]
    W, sig, _ = np.linalg.svd(q)
    return PdsSpectrum(_frozen(sig), _frozen(W))


def pds_power(S, n: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """S^n for a positive definite symmetric S via its eigendecomposition."""
    S = as_symplectic(S, tol)
    M = 0.5 * (S.matrix + S.matrix.T)
    mu, V = np.linalg.eigh(M)
    return (V * mu**n) @ V.T


def adapt_to_standard(S, metric) -> np.ndarray:
    """Conjugate a chart-coordinate linear map into a unitary frame of ``metric``.

    ``metric`` is the Hermitian matrix h with omega = i sum h_jk dz_j ^ dz_k-bar.
    With h = L L^*, the coordinates w = L^T z are orthonormal.
    """
    h = np.asarray(metric, dtype=complex)
    L = np.linalg.cholesky(0.5 * (h + h.conj().T))
    R = realify(L.T)
    return R @ np.asarray(S, dtype=float) @ np.linalg.inv(R)


# ---------------------------------------------------------------- coefficients


def holomorphic_block_det(S, tol: float = DEFAULT_TOL) -> complex:
    S = as_symplectic(S, tol)
    d = complex(np.linalg.det(complexify(S).P))
    cls = classify_pds(S, tol)
    if cls.kind == "positive_definite_symmetric":
        ref = float(np.prod(np.cosh(cls.lambdas)))
        if abs(d - ref) > 1e-8 * ref:
            raise AccuracyError(f"det P = {d} disagrees with prod cosh = {ref}")
    return d


@dataclass(frozen=True)
class InvariantVector:
    """Hamilton field xi (real, (x, y) order) and alpha with xi = -i alpha d_z + c.c."""

    xi: np.ndarray
    alpha: np.ndarray

    @classmethod
    def from_xi(cls, xi) -> "InvariantVector":
        xi = np.asarray(xi, dtype=float)
        m = xi.size // 2
        alpha = 1j * (xi[:m] + 1j * xi[m:])
        return cls(_frozen(xi), _frozen(alpha))

    @classmethod
    def from_alpha(cls, alpha) -> "InvariantVector":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
        zdot = -1j * alpha
        return cls(_frozen(np.concatenate([zdot.real, zdot.imag])), _frozen(alpha))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.alpha))


def _invariance_residual(S: SymplecticMap, v: InvariantVector) -> float:
    return float(np.max(np.abs(S.matrix @ v.xi - v.xi))) / max(1.0, float(np.max(np.abs(v.xi))))


def _matrix_element(P: np.ndarray, alpha: np.ndarray) -> complex:
    if np.max(np.abs(P - P.conj().T)) <= 1e-12 * max(1.0, float(np.max(np.abs(P)))):
        w, V = np.linalg.eigh(0.5 * (P + P.conj().T))
        if np.min(np.abs(w)) == 0:
            raise SingularityError("holomorphic block is singular", condition=np.inf)
        c = V.conj().T @ alpha
        return complex(np.sum(np.abs(c) ** 2 / w))
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularityError(f"holomorphic block is singular (cond {cond:.2e})", condition=cond)
    return complex(alpha.conj() @ np.linalg.solve(P, alpha))


def invariant_matrix_element(S, v: InvariantVector, tol: float = 1e-9) -> complex:
    """conj(alpha)^T P^{-1} alpha for the holomorphic block P of S."""
    S = as_symplectic(S)
    r = _invariance_residual(S, v)
    if r > tol:
        raise ValidationError(f"xi is not invariant: residual {r:.3e}", residual=r)
    return _matrix_element(complexify(S).P, v.alpha)


@dataclass(frozen=True)
class GcalCoefficient:
    n: int
    value: complex
    detP: complex
    matrix_element: complex
    winding: float = 0.0  # accumulated phase of det P * matrix element, in turns

    def consistency_residual(self) -> float:
        return abs(self.value**-2 - self.detP * self.matrix_element) / abs(
            self.detP * self.matrix_element
        )


def _track(values: list[complex]) -> np.ndarray:
    """Continuous argument of a sequence starting from the principal branch."""
    ang = np.angle(np.asarray(values, dtype=complex))
    return np.unwrap(ang)


def gcal_series(S, v: InvariantVector, n_max: int, tol: float = 1e-9) -> dict[int, GcalCoefficient]:
    """G_n = (det P_n)^{-1/2} (conj(alpha) P_n^{-1} alpha)^{-1/2} for |n| <= n_max.

    Square roots follow the branch continued from n = 0, where both factors
    are positive.
    """
    S = as_symplectic(S)
    r = _invariance_residual(S, v)
    if r > tol:
        raise ValidationError(f"xi is not invariant: residual {r:.3e}", residual=r)
    alpha = v.alpha
    cls = classify_pds(S)
    out: dict[int, GcalCoefficient] = {}
    if cls.kind in ("identity", "positive_definite_symmetric"):
        spec = pds_spectrum(S)
        for n in range(-n_max, n_max + 1):
            d = spec.det_P(n)
            me = spec.matrix_element(alpha, n)
            out[n] = GcalCoefficient(n, complex((d * me) ** -0.5), complex(d), complex(me), 0.0)
        return out
    for sign in (1, -1):
        step = S.matrix if sign > 0 else symplectic_inverse(S.matrix)
        cur = np.eye(2 * S.m)
        dets, mes = [], []
        for _ in range(n_max + 1):
            P = complexify(SymplecticMap(cur, S.m, S.tol)).P
            dets.append(complex(np.linalg.det(P)))
            mes.append(_matrix_element(P, alpha))
            cur = cur @ step
        arg_d, arg_me = _track(dets), _track(mes)
        for j in range(n_max + 1):
            n = sign * j
            log_mod = np.log(abs(dets[j])) + np.log(abs(mes[j]))
            phase = arg_d[j] + arg_me[j]
            val = np.exp(-0.5 * (log_mod + 1j * phase))
            out[n] = GcalCoefficient(n, complex(val), dets[j], mes[j], float(phase / (2 * np.pi)))
    return dict(sorted(out.items()))


def gcal_coefficient(S, v: InvariantVector, n: int) -> GcalCoefficient:
    return gcal_series(S, v, abs(n))[n]


@dataclass(frozen=True)
class EtaResult:
    value: complex
    beta: float
    daub_residual: float
    beta_residual: float


def metaplectic_eta(S, tol: float = DEFAULT_TOL) -> EtaResult:
    """eta with conj(eta)^{-1} = det P^*, so eta = 1 / det P.

    The modulus is checked against beta = 2^{-m/2} det(I + S^T S)^{1/4}
    through |eta| beta^2 = 1, which follows from det(I + S^T S) = 4^m |det P|^2.
    """
    S = as_symplectic(S, tol)
    P = complexify(S).P
    dP = complex(np.linalg.det(P))
    if abs(dP) < 1e-300:
        raise SingularityError("holomorphic block is singular", condition=np.inf)
    eta = 1.0 / dP
    M = S.matrix
    beta = 2.0 ** (-S.m / 2) * np.linalg.det(np.eye(2 * S.m) + M.T @ M) ** 0.25
    daub = abs(np.conj(eta) * np.conj(dP) - 1.0)
    beta_res = abs(abs(eta) * beta**2 - 1.0)
    return EtaResult(complex(eta), float(beta), float(daub), float(beta_res))


# ---------------------------------------------------------------- random samples


def random_unitary_symplectic(m: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return realify(q)


def random_symplectic(m: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """exp(Omega^T H) for a random symmetric H, composed with a random unitary."""
    H = rng.normal(scale=scale, size=(2 * m, 2 * m))
    H = 0.5 * (H + H.T)
    X = standard_form(m).T @ H
    return expm(X) @ random_unitary_symplectic(m, rng)


def random_pds(
    m: int,
    rng: np.random.Generator,
    lambdas=None,
    invariant: bool = False,
    max_lambda: float = 1.5,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Random positive definite symmetric symplectic matrix U^T diag(e^l, e^-l) U.

    With ``invariant`` the first exponent is 0 and a fixed vector xi is returned.
    """
    if lambdas is None:
        lambdas = rng.uniform(0.05, max_lambda, size=m)
    lambdas = np.array(lambdas, dtype=float)
    if invariant:
        lambdas[0] = 0.0
    U = random_unitary_symplectic(m, rng)
    Lam = np.diag(np.concatenate([np.exp(lambdas), np.exp(-lambdas)]))
    S = U.T @ Lam @ U
    S = 0.5 * (S + S.T)
    xi = None
    if invariant:
        e = np.zeros(2 * m)
        e[0] = 1.0
        xi = U.T @ e
    return S, xi
