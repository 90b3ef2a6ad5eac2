"""Real-valued functions of (z, conj z) with the Wirtinger derivatives the flows need.

Two families cover every model here: polynomials in (z, conj z), used for
K-coordinate potentials and Hamiltonians, and radial functions f(|z|^2), used for
the Fubini-Study sphere and radial Bergman weights. Points carry the coordinate
index on the last axis, and every method broadcasts over leading axes.

Index conventions for the derivative arrays:
    hess_zzbar[..., j, k]        = d_{z_j} d_{zbar_k}
    hess_zz[..., j, k]           = d_{z_j} d_{z_k}
    hess_zbarzbar[..., j, k]     = d_{zbar_j} d_{zbar_k}
    third_z[..., l, j, k]        = d_{z_l} d_{z_j} d_{zbar_k}
    third_zbar[..., l, j, k]     = d_{zbar_l} d_{z_j} d_{zbar_k}
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import ValidationError


def _pts(z, m):
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] != m:
        raise ValidationError(f"expected {m} complex coordinates, got shape {z.shape}")
    return z


class WirtingerFunction:
    m: int

    def value(self, z):
        raise NotImplementedError

    def dz(self, z):
        raise NotImplementedError

    def dzbar(self, z):
        raise NotImplementedError

    def hess_zzbar(self, z):
        raise NotImplementedError

    def hess_zz(self, z):
        raise NotImplementedError

    def hess_zbarzbar(self, z):
        raise NotImplementedError

    def third_z(self, z):
        raise NotImplementedError

    def third_zbar(self, z):
        raise NotImplementedError

    def __call__(self, z):
        return self.value(z)

    def __add__(self, other: "WirtingerFunction") -> "WirtingerFunction":
        return SumFunction([self, other])


class SumFunction(WirtingerFunction):
    def __init__(self, parts):
        flat = []
        for p in parts:
            flat.extend(p.parts if isinstance(p, SumFunction) else [p])
        if len({p.m for p in flat}) != 1:
            raise ValidationError("summands live in different dimensions")
        self.parts = flat
        self.m = flat[0].m

    def _sum(self, name, z):
        return sum(getattr(p, name)(z) for p in self.parts)

    def value(self, z):
        return self._sum("value", z)

    def dz(self, z):
        return self._sum("dz", z)

    def dzbar(self, z):
        return self._sum("dzbar", z)

    def hess_zzbar(self, z):
        return self._sum("hess_zzbar", z)

    def hess_zz(self, z):
        return self._sum("hess_zz", z)

    def hess_zbarzbar(self, z):
        return self._sum("hess_zbarzbar", z)

    def third_z(self, z):
        return self._sum("third_z", z)

    def third_zbar(self, z):
        return self._sum("third_zbar", z)


class Polynomial(WirtingerFunction):
    """sum_t c_t z^{J_t} conj(z)^{K_t}; ``terms`` maps (J, K) tuples to coefficients."""

    def __init__(self, m: int, terms: dict):
        self.m = int(m)
        clean = {}
        for (J, K), c in terms.items():
            J, K = tuple(int(a) for a in J), tuple(int(a) for a in K)
            if len(J) != m or len(K) != m or min(J + K, default=0) < 0:
                raise ValidationError(f"bad multi-index pair {(J, K)} for m={m}")
            if c != 0:
                clean[(J, K)] = clean.get((J, K), 0) + complex(c)
        self.terms = clean
        self._cache: dict = {}

    @classmethod
    def k_coordinates(cls, m: int, coeffs: dict) -> "Polynomial":
        """|z|^2 + sum a_JK z^J conj(z)^K with |J|, |K| >= 2."""
        terms = {}
        for j in range(m):
            e = tuple(int(i == j) for i in range(m))
            terms[(e, e)] = 1.0
        for (J, K), a in coeffs.items():
            if sum(J) < 2 or sum(K) < 2:
                raise ValidationError(f"K-coordinate terms need |J|, |K| >= 2, got {(J, K)}")
            terms[(tuple(J), tuple(K))] = terms.get((tuple(J), tuple(K)), 0) + a
        p = cls(m, terms)
        p.check_real()
        return p

    def check_real(self, tol: float = 1e-12):
        for (J, K), c in self.terms.items():
            d = self.terms.get((K, J), 0)
            if abs(c - np.conj(d)) > tol * max(1.0, abs(c)):
                raise ValidationError(
                    f"not real-valued: coefficient of {(J, K)} is {c}, of {(K, J)} is {d}",
                    invariant="real-valuedness",
                )
        return self

    @property
    def degree(self) -> int:
        return max((sum(J) + sum(K) for J, K in self.terms), default=0)

    @cached_property
    def _arrays(self):
        if not self.terms:
            z = np.zeros((0, self.m), dtype=int)
            return z, z, np.zeros(0, complex)
        keys = list(self.terms)
        J = np.array([k[0] for k in keys], dtype=int)
        K = np.array([k[1] for k in keys], dtype=int)
        c = np.array([self.terms[k] for k in keys], dtype=complex)
        return J, K, c

    def _eval(self, z):
        z = _pts(z, self.m)
        J, K, c = self._arrays
        if c.size == 0:
            return np.zeros(z.shape[:-1], dtype=complex)
        zz = z[..., None, :]
        mono = np.prod(zz**J * np.conj(zz) ** K, axis=-1)
        return mono @ c

    def diff(self, l: int, bar: bool = False) -> "Polynomial":
        key = (l, bar)
        if key not in self._cache:
            out = {}
            for (J, K), c in self.terms.items():
                e = K if bar else J
                if e[l] == 0:
                    continue
                e2 = tuple(a - (i == l) for i, a in enumerate(e))
                new = (J, e2) if bar else (e2, K)
                out[new] = out.get(new, 0) + c * e[l]
            self._cache[key] = Polynomial(self.m, out)
        return self._cache[key]

    def _d(self, spec):
        p = self
        for l, bar in spec:
            p = p.diff(l, bar)
        return p

    def value(self, z):
        return self._eval(z).real

    def _stack(self, z, specs, shape):
        z = _pts(z, self.m)
        vals = [self._d(s)._eval(z) for s in specs]
        return np.stack(vals, axis=-1).reshape(z.shape[:-1] + shape)

    def dz(self, z):
        return self._stack(z, [[(l, False)] for l in range(self.m)], (self.m,))

    def dzbar(self, z):
        return self._stack(z, [[(l, True)] for l in range(self.m)], (self.m,))

    def _pairs(self, a, b):
        return [[(j, a), (k, b)] for j in range(self.m) for k in range(self.m)]

    def hess_zzbar(self, z):
        return self._stack(z, self._pairs(False, True), (self.m, self.m))

    def hess_zz(self, z):
        return self._stack(z, self._pairs(False, False), (self.m, self.m))

    def hess_zbarzbar(self, z):
        return self._stack(z, self._pairs(True, True), (self.m, self.m))

    def _triples(self, first_bar):
        m = self.m
        return [[(l, first_bar), (j, False), (k, True)] for l in range(m) for j in range(m) for k in range(m)]

    def third_z(self, z):
        return self._stack(z, self._triples(False), (self.m,) * 3)

    def third_zbar(self, z):
        return self._stack(z, self._triples(True), (self.m,) * 3)


class RadialFunction(WirtingerFunction):
    """f(u) with u = |z|^2; ``derivs(u)`` returns (f, f', f'', f''')."""

    def __init__(self, m: int, derivs, name: str = "radial"):
        self.m = int(m)
        self.derivs = derivs
        self.name = name

    def _u(self, z):
        z = _pts(z, self.m)
        return z, np.sum(np.abs(z) ** 2, axis=-1)

    def value(self, z):
        _, u = self._u(z)
        return np.asarray(self.derivs(u)[0], dtype=float)

    def dz(self, z):
        z, u = self._u(z)
        return self.derivs(u)[1][..., None] * np.conj(z)

    def dzbar(self, z):
        z, u = self._u(z)
        return self.derivs(u)[1][..., None] * z

    def hess_zzbar(self, z):
        z, u = self._u(z)
        _, f1, f2, _ = self.derivs(u)
        eye = np.eye(self.m)
        return f2[..., None, None] * np.conj(z)[..., :, None] * z[..., None, :] + f1[..., None, None] * eye

    def hess_zz(self, z):
        z, u = self._u(z)
        f2 = self.derivs(u)[2]
        zb = np.conj(z)
        return f2[..., None, None] * zb[..., :, None] * zb[..., None, :]

    def hess_zbarzbar(self, z):
        z, u = self._u(z)
        f2 = self.derivs(u)[2]
        return f2[..., None, None] * z[..., :, None] * z[..., None, :]

    def third_z(self, z):
        z, u = self._u(z)
        _, _, f2, f3 = self.derivs(u)
        zb = np.conj(z)
        eye = np.eye(self.m)
        t = f3[..., None, None, None] * zb[..., :, None, None] * zb[..., None, :, None] * z[..., None, None, :]
        t = t + f2[..., None, None, None] * zb[..., None, :, None] * eye[:, None, :]
        t = t + f2[..., None, None, None] * zb[..., :, None, None] * eye[None, :, :]
        return t

    def third_zbar(self, z):
        z, u = self._u(z)
        _, _, f2, f3 = self.derivs(u)
        zb = np.conj(z)
        eye = np.eye(self.m)
        t = f3[..., None, None, None] * z[..., :, None, None] * zb[..., None, :, None] * z[..., None, None, :]
        t = t + f2[..., None, None, None] * eye[:, :, None] * z[..., None, None, :]
        t = t + f2[..., None, None, None] * z[..., :, None, None] * eye[None, :, :]
        return t


def _fs_derivs(u):
    u = np.asarray(u, dtype=float)
    s = 1.0 + u
    return np.log(s), 1 / s, -1 / s**2, 2 / s**3


def _x3_derivs(u):
    u = np.asarray(u, dtype=float)
    s = 1.0 + u
    return (1 - u) / s, -2 / s**2, 4 / s**3, -12 / s**4


def fubini_study(m: int = 1) -> RadialFunction:
    """log(1 + |z|^2)."""
    return RadialFunction(m, _fs_derivs, "fubini_study")


def height_x3(m: int = 1) -> RadialFunction:
    """x_3 = (1 - |z|^2) / (1 + |z|^2) on the affine chart of CP^1."""
    return RadialFunction(m, _x3_derivs, "x3")


def radial_power_series(m: int, coeffs) -> RadialFunction:
    """sum_n c_n u^n as a radial function."""
    c = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2, d3 = c.deriv(1), c.deriv(2), c.deriv(3)

    def derivs(u):
        u = np.asarray(u, dtype=float)
        return c(u), d1(u), d2(u), d3(u)

    return RadialFunction(m, derivs, "power_series")


def flat(m: int) -> Polynomial:
    """|z|^2."""
    return Polynomial.k_coordinates(m, {})
