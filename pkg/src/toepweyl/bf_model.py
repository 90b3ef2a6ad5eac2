"""Bargmann-Fock model space: Szego kernels on C^m x S^1, Heisenberg translations,
metaplectic kernels, and quadrature oracles for the Gaussian identities they obey.

Conventions. Points of C^m are complex arrays with the coordinate on the last
axis. The volume is omega^m / m! = 2^m d^{2m}x with omega = i sum dz ^ dz-bar,
and the fiber circle carries the probability measure d theta / 2 pi, so the
Szego projector is idempotent with these normalizations. Every kernel has a
``log_`` twin returning the complex logarithm, which is what large k needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError, SingularityError, UnsupportedError, ValidationError
from .quadrature import convergence_ladder, log_gaussian_integral
from .symplectic_core import (
    ComplexBlocks,
    InvariantVector,
    SymplecticMap,
    as_symplectic,
    complexify,
    standard_complex_structure,
    standard_form,
)

TWO_PI = 2.0 * math.pi


def _cvec(z, m=None):
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z[None]
    if m is not None and z.shape[-1] != m:
        raise ValidationError(f"expected {m} complex coordinates, got {z.shape[-1]}")
    return z


def _hdot(z, w):
    """Bilinear z . conj(w) over the last axis."""
    return np.sum(z * np.conj(w), axis=-1)


def _norm2(z):
    return np.sum(np.abs(z) ** 2, axis=-1)


@dataclass(frozen=True)
class LiftedPoint:
    """Point (z, theta) of the circle bundle over C^m, theta reduced mod 2 pi."""

    z: np.ndarray
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "z", _cvec(self.z).copy())
        object.__setattr__(self, "theta", float(np.mod(self.theta, TWO_PI)))

    @property
    def m(self) -> int:
        return self.z.shape[-1]

    def rotate(self, phi: float) -> "LiftedPoint":
        return LiftedPoint(self.z, self.theta + phi)


# -- Szego / Bergman kernels --------------------------------------------------


def log_bergman_kernel(k: float, m: int, z, w):
    z, w = _cvec(z, m), _cvec(w, m)
    return m * np.log(k / TWO_PI) + k * (_hdot(z, w) - _norm2(z) / 2 - _norm2(w) / 2)


def bergman_kernel(k: float, m: int, z, w):
    """(k / 2 pi)^m exp(k (z.conj(w) - |z|^2/2 - |w|^2/2)), broadcasting over points."""
    if k <= 0:
        raise ValidationError("k must be positive")
    return np.exp(log_bergman_kernel(k, m, z, w))


def log_lifted_kernel(k: float, x: LiftedPoint, y: LiftedPoint):
    return 1j * k * (x.theta - y.theta) + log_bergman_kernel(k, x.m, x.z, y.z)


def lifted_kernel(k: float, x: LiftedPoint, y: LiftedPoint) -> complex:
    """Szego kernel on C^m x S^1; picks up e^{ik phi} when x is rotated by phi."""
    if x.m != y.m:
        raise ValidationError("points live over different dimensions")
    return complex(np.exp(log_lifted_kernel(k, x, y)))


def sigma(u, v):
    """Real symplectic pairing normalized so that sigma(z, w) = Im(z conj w).

    In (x, y) coordinates this is u^T J0 v.
    """
    u, v = np.asarray(u, float), np.asarray(v, float)
    m = u.shape[-1] // 2
    return np.einsum("...i,ij,...j->...", u, standard_complex_structure(m), v)


def check_compatible(J, tol: float = 1e-10) -> float:
    """Validate a complex structure against sigma; returns the smallest
    eigenvalue of the metric g(v, v) = sigma(Jv, v)."""
    J = np.asarray(J, float)
    n = J.shape[0]
    if J.shape != (n, n) or n % 2:
        raise ValidationError(f"J must be a square matrix of even size, got {J.shape}")
    scale = max(1.0, np.abs(J).max()) ** 2
    if np.abs(J @ J + np.eye(n)).max() > tol * scale:
        raise ValidationError("J^2 != -I", invariant="J^2=-I")
    Om = standard_form(n // 2)
    if np.abs(J.T @ Om @ J - Om).max() > tol * scale:
        raise ValidationError("J does not preserve the symplectic form", invariant="J^T Om J = Om")
    g = J.T @ standard_complex_structure(n // 2)
    g = (g + g.T) / 2
    lam = np.linalg.eigvalsh(g).min()
    if lam <= 0:
        raise ValidationError("sigma(Jv, v) is not positive definite", invariant="positivity")
    return float(lam)


def general_J_kernel(J, z, w, validate: bool = True) -> complex:
    """exp(i sigma(z, w)) exp(-sigma(J d, d) / 2) with d = z - w, for real 2m-vectors."""
    J = np.asarray(J, float)
    if validate:
        check_compatible(J)
    z, w = np.asarray(z, float), np.asarray(w, float)
    d = z - w
    g = sigma(J @ d if d.ndim == 1 else d @ J.T, d)
    return np.exp(1j * sigma(z, w) - 0.5 * g)


# -- Heisenberg translations ----------------------------------------------------


def coherent_state(k: float):
    """Unnormalized coherent state exp(-k|z|^2 / 2) at the origin."""

    def v(z):
        return np.exp(-k * _norm2(_cvec(z)) / 2)

    return v


def coherent_norm_squared(k: float, m: int) -> float:
    """Squared L^2 norm of ``coherent_state(k)``, equal to (2 pi / k)^m."""
    return (TWO_PI / k) ** m


def heisenberg_translate(w, v=None, k: float = 1.0):
    """Translation by w on the weighted Fock picture:
    [beta(w) f](z) = exp(i k Im(z conj w)) f(z - w).

    Applied to the coherent state this gives exp(k (z.conj(w) - |z|^2/2 - |w|^2/2)).
    """
    w = _cvec(w)
    f = coherent_state(k) if v is None else v

    def translated(z):
        z = _cvec(z, w.shape[-1])
        return np.exp(1j * k * np.imag(_hdot(z, w))) * f(z - w)

    return translated


def group_law_phase(w1, w2, k: float) -> complex:
    """c with beta(w1 + w2) = c beta(w1) beta(w2), namely exp(i k Im(w1 . conj w2))."""
    return complex(np.exp(1j * k * np.imag(_hdot(_cvec(w1), _cvec(w2)))))


# -- metaplectic kernels ----------------------------------------------------------


@dataclass(frozen=True)
class MetaplecticKernelSpec:
    """Level k and complex blocks of a symplectic map; ``sign`` picks the sheet
    of (det P)^{-1/2} on the double cover."""

    k: float
    blocks: ComplexBlocks
    sign: int = 1
    tol: float = 1e-9

    def __post_init__(self):
        if self.k <= 0:
            raise ValidationError("k must be positive")
        if self.sign not in (1, -1):
            raise ValidationError("sign must be +1 or -1")
        res = self.blocks.folland_residual()
        scale = max(1.0, np.abs(self.blocks.P).max()) ** 2
        if res > self.tol * scale:
            raise ValidationError("Folland identities fail", residual=res, invariant="folland")

    @classmethod
    def from_symplectic(cls, k, S, sign: int = 1) -> "MetaplecticKernelSpec":
        return cls(k, complexify(as_symplectic(S).matrix), sign)

    @property
    def m(self) -> int:
        return self.blocks.P.shape[0]

    def sqrt_det_P(self) -> complex:
        d = np.linalg.det(self.blocks.P)
        if abs(d) < 1e-300:
            raise SingularityError("P is singular", condition=np.inf)
        return self.sign * np.sqrt(complex(d))


def _metaplectic_exponent(blocks: ComplexBlocks, z, wbar):
    P, Q = blocks.P, blocks.Q
    Pinv = np.linalg.inv(P)
    A = np.conj(Q) @ Pinv
    B = Pinv @ Q
    quad = z @ A @ z + 2 * (wbar @ Pinv @ z) - wbar @ B @ wbar
    return 0.5 * quad


def log_metaplectic_kernel(spec: MetaplecticKernelSpec, x: LiftedPoint, y: LiftedPoint) -> complex:
    k = spec.k
    cond = np.linalg.cond(spec.blocks.P)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularityError("P is numerically singular", condition=cond)
    z, w = x.z, y.z
    out = spec.m * np.log(k / TWO_PI) - np.log(spec.sqrt_det_P())
    out += k * _metaplectic_exponent(spec.blocks, z, np.conj(w))
    out += k * (1j * x.theta - _norm2(z) / 2) + k * (-1j * y.theta - _norm2(w) / 2)
    return complex(out)


def metaplectic_kernel(spec: MetaplecticKernelSpec, x: LiftedPoint, y: LiftedPoint) -> complex:
    """Lifted metaplectic kernel: the Gaussian closed form in (z, conj w) times
    the fiber factors exp(k(i theta_x - |z|^2/2)) exp(k(-i theta_y - |w|^2/2))."""
    return complex(np.exp(log_metaplectic_kernel(spec, x, y)))


def _split(u, m):
    return u[..., :m] + 1j * u[..., m:]


def log_factorization_integral(spec: MetaplecticKernelSpec, x: LiftedPoint, y: LiftedPoint,
                               order: int = 40, workers=None) -> complex:
    """log of the integral over u in C^m of Pi(x, A u) Pi(u, y) dVol(u).

    The contact lift fixes the fiber, so the fiber variable drops out.
    """
    k, m = spec.k, spec.m
    P, Q = spec.blocks.P, spec.blocks.Q

    def logf(u):
        uc = _split(u, m)
        au = uc @ P.T + np.conj(uc) @ Q.T
        a = k * (_hdot(x.z, au) - _norm2(x.z) / 2 - _norm2(au) / 2)
        b = k * (_hdot(uc, y.z) - _norm2(uc) / 2 - _norm2(y.z) / 2)
        return a + b

    phase = 1j * k * (x.theta - y.theta)
    log_vol = m * np.log(2.0)
    return 2 * m * np.log(k / TWO_PI) + phase + log_vol + log_gaussian_integral(logf, 2 * m, order, workers)


def toep_met_factorization_check(spec: MetaplecticKernelSpec, x: LiftedPoint, y: LiftedPoint,
                                 quadrature_order: int = 40, workers=None) -> float:
    """Relative residual between (det P*)^{1/2} times the Toeplitz integral and
    the metaplectic kernel."""
    if spec.m > 2:
        raise UnsupportedError("tensor quadrature is only supported for m <= 2")
    ref = log_metaplectic_kernel(spec, x, y)
    quad = log_factorization_integral(spec, x, y, quadrature_order, workers)
    quad += np.log(np.conj(spec.sqrt_det_P()))
    return float(abs(np.expm1(quad - ref)))


def factorization_ladder(spec, x, y, orders=(5, 10, 20, 40), workers=None) -> list[float]:
    """Residuals on a ladder of orders; raises AccuracyError when they stall."""
    ref = metaplectic_kernel(spec, x, y)

    def evaluate(n):
        q = log_factorization_integral(spec, x, y, n, workers) + np.log(np.conj(spec.sqrt_det_P()))
        return complex(np.exp(q))

    return convergence_ladder(evaluate, orders, ref)


# -- BPU matrix element -----------------------------------------------------------


@dataclass(frozen=True)
class BpuResult:
    value: complex
    quadrature: complex
    residual: float
    residual_adjoint: float
    residual_plain: float
    orientation: str


def bpu_closed_form(P, alpha, k: float, adjoint: bool = True) -> complex:
    """(k/2pi)^{-m-1/2} (conj(a) R^{-1} a)^{-1/2} (det R)^{-1/2} with R = P* or P."""
    P = np.asarray(P, complex)
    R = P.conj().T if adjoint else P
    alpha = _cvec(alpha, P.shape[0])
    m = P.shape[0]
    me = complex(np.conj(alpha) @ np.linalg.solve(R, alpha))
    return (k / TWO_PI) ** (-m - 0.5) * me ** -0.5 * complex(np.linalg.det(R)) ** -0.5


def bpu_log_quadrature(S, alpha, k: float, order: int = 60, workers=None) -> complex:
    """log of <M^{-1} v, P_Xi v> by quadrature over C^m x R."""
    S = as_symplectic(S)
    inv = complexify(S.inverse().matrix)
    P1, Q1 = inv.P, inv.Q
    m = S.m
    alpha = _cvec(alpha, m)
    A = np.conj(Q1) @ np.linalg.inv(P1)
    log_pref = -np.log(complex(np.sqrt(complex(np.linalg.det(P1)))))

    def logf(u):
        z = _split(u[:, :2 * m], m)
        t = u[:, 2 * m]
        left = k * (0.5 * np.einsum("ni,ij,nj->n", z, A, z) - _norm2(z) / 2)
        # conj of [beta(-i alpha t) v](z) = exp(k(i t z.conj(alpha) - |z|^2/2 - |alpha t|^2/2))
        right = k * (-1j * t * np.conj(_hdot(z, alpha)) - _norm2(z) / 2 - _norm2(alpha) * t**2 / 2)
        return left + right

    return log_pref + m * np.log(2.0) + log_gaussian_integral(logf, 2 * m + 1, order, workers)


def bpu_matrix_element(S, alpha, k: float, order: int = 60, tol: float = 1e-9, workers=None) -> BpuResult:
    """Both sides of the BPU matrix-element identity for an invariant alpha.

    The returned value is the closed form with P*; the residuals of both the P*
    and the P orientation against quadrature are reported.
    """
    S = as_symplectic(S)
    alpha = _cvec(alpha, S.m)
    blocks = complexify(S.matrix)
    inv_res = np.abs(blocks.P @ alpha - blocks.Q @ np.conj(alpha) - alpha).max()
    if inv_res > tol * max(1.0, np.abs(alpha).max()) * max(1.0, np.abs(blocks.P).max()):
        raise ValidationError("alpha is not invariant under S", residual=inv_res, invariant="alpha=P alpha - Q conj(alpha)")
    quad = complex(np.exp(bpu_log_quadrature(S, alpha, k, order, workers)))
    adj = bpu_closed_form(blocks.P, alpha, k, adjoint=True)
    plain = bpu_closed_form(blocks.P, alpha, k, adjoint=False)
    r_adj = abs(quad - adj) / abs(adj)
    r_plain = abs(quad - plain) / abs(plain)
    return BpuResult(
        value=adj,
        quadrature=quad,
        residual=r_adj,
        residual_adjoint=r_adj,
        residual_plain=r_plain,
        orientation="adjoint" if r_adj <= r_plain else "plain",
    )


def bpu_from_invariant(S: SymplecticMap, v: InvariantVector, k: float, **kw) -> BpuResult:
    return bpu_matrix_element(S, v.alpha, k, **kw)
