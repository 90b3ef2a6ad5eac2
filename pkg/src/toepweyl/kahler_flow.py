"""Hamiltonian flows on Kahler charts, their contact lifts, and periodic orbits.

A model is a potential phi and a Hamiltonian H on a single chart of C^m, with
omega = i d dbar phi. Writing G_jk = d_{z_j} d_{zbar_k} phi, the Hamilton field
solving dH = iota(xi) omega is

    zdot = -i G^{-T} d_zbar H,

and the contact lift rotates the fiber at rate theta_dot = (1/2) d^c phi(xi) - H,
where (1/2) d^c phi(v) = -Im sum_j phi_{z_j} v_j. The horizontal lift drops the
-H term. Both angles are integrated so that theta_h - theta_hat - t H(z) is a
check on the energy rather than an identity.

The variational equation is integrated in the same pass as the base flow.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import IntegrationError, SingularityError, TruncationError, ValidationError
from .functions import Polynomial, WirtingerFunction, flat, fubini_study, height_x3
from .symplectic_core import (
    Classification,
    InvariantVector,
    SymplecticMap,
    adapt_to_standard,
    classify_pds,
    symplectic_residual,
)

log = logging.getLogger(__name__)

DEFAULT_ODE_TOL = 1e-10


@dataclass(frozen=True)
class KahlerModel:
    m: int
    potential: WirtingerFunction
    hamiltonian: WirtingerFunction
    E: float | None = None
    domain_radius: float = np.inf
    name: str = "model"

    def __post_init__(self):
        if self.potential.m != self.m or self.hamiltonian.m != self.m:
            raise ValidationError("potential and Hamiltonian must share the dimension m")

    @classmethod
    def k_coordinates(cls, m, potential_coeffs, hamiltonian_terms, E=None, domain_radius=np.inf,
                      check_radius: float | None = None, name="k_coordinates") -> "KahlerModel":
        """phi = |z|^2 + sum a_JK z^J conj(z)^K, H a real polynomial in (z, conj z)."""
        phi = Polynomial.k_coordinates(m, potential_coeffs)
        H = Polynomial(m, hamiltonian_terms).check_real()
        model = cls(m, phi, H, E, domain_radius, name)
        r = check_radius if check_radius is not None else (domain_radius if np.isfinite(domain_radius) else 1.0)
        model.check_positive(r)
        return model

    @classmethod
    def flat(cls, m, hamiltonian_terms, E=None) -> "KahlerModel":
        return cls(m, flat(m), Polynomial(m, hamiltonian_terms).check_real(), E, np.inf, "flat")

    @classmethod
    def sphere(cls, E=None, domain_radius=1e6) -> "KahlerModel":
        """CP^1 in the affine chart: phi = log(1 + |z|^2), H = x_3."""
        return cls(1, fubini_study(1), height_x3(1), E, domain_radius, "sphere")

    def metric(self, z):
        return self.potential.hess_zzbar(z)

    def check_positive(self, radius: float, n: int = 9):
        """Sample omega on a grid in the polydisc of the given radius."""
        g = np.linspace(-radius, radius, n) / np.sqrt(2)
        pts = np.array(np.meshgrid(*([g] * (2 * self.m)), indexing="ij")).reshape(2 * self.m, -1).T
        z = pts[:, : self.m] + 1j * pts[:, self.m :]
        G = self.metric(z)
        lam = np.linalg.eigvalsh(0.5 * (G + np.conj(np.swapaxes(G, -1, -2)))).min()
        if lam <= 0:
            raise SingularityError(f"omega degenerates on the working domain (min eigenvalue {lam:.3e})",
                                   condition=np.inf)
        return float(lam)

    def energy(self, z):
        return self.hamiltonian.value(z)


def _as_z(z, m):
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z[None]
    if z.shape[-1] != m:
        raise ValidationError(f"expected {m} complex coordinates")
    return z


def complex_field(model: KahlerModel, z):
    """zdot = -i G^{-T} d_zbar H, batched over leading axes."""
    z = _as_z(z, model.m)
    G = model.metric(z)
    Gt = np.swapaxes(G, -1, -2)
    h = model.hamiltonian.dzbar(z)
    try:
        return np.linalg.solve(Gt, -1j * h[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularityError("omega is degenerate at z", condition=np.inf) from exc


def hamilton_field(model: KahlerModel, z) -> np.ndarray:
    """xi_H as a real 2m-vector in (x, y) order."""
    xi = complex_field(model, z)
    return np.concatenate([xi.real, xi.imag], axis=-1)


def half_dc_phi(model: KahlerModel, z, v):
    """(1/2) d^c phi at z applied to the complex tangent vector v."""
    return -np.imag(np.sum(model.potential.dz(z) * v, axis=-1))


def contact_lift_field(model: KahlerModel, z, theta: float = 0.0) -> np.ndarray:
    """Contact lift (xi_H, theta_dot) as a real (2m + 1)-vector; the fiber is
    invariant so theta only labels the point."""
    z = _as_z(z, model.m)
    xi = complex_field(model, z)
    th = half_dc_phi(model, z, xi) - model.energy(z)
    return np.concatenate([xi.real, xi.imag, np.atleast_1d(th)], axis=-1)


def contact_form(model: KahlerModel, z, v, dtheta):
    """alpha(v, dtheta) = dtheta - (1/2) d^c phi(v)."""
    return dtheta - half_dc_phi(model, z, v)


def field_jacobian(model: KahlerModel, z) -> np.ndarray:
    """Real 2m x 2m derivative of xi_H at a single point."""
    z = _as_z(z, model.m)
    m = model.m
    G = model.metric(z)
    Gt = G.T
    xi = complex_field(model, z)
    H = model.hamiltonian
    t_z, t_zb = model.potential.third_z(z), model.potential.third_zbar(z)
    rhs_z = -1j * H.hess_zzbar(z) - np.einsum("ljk,j->lk", t_z, xi)
    rhs_zb = -1j * H.hess_zbarzbar(z) - np.einsum("ljk,j->lk", t_zb, xi)
    Dz = np.linalg.solve(Gt, rhs_z.T)  # column l is d_{z_l} xi
    Dzb = np.linalg.solve(Gt, rhs_zb.T)
    dx = Dz + Dzb
    dy = 1j * (Dz - Dzb)
    top = np.hstack([dx.real, dy.real])
    bot = np.hstack([dx.imag, dy.imag])
    return np.vstack([top, bot]).reshape(2 * m, 2 * m)


# -- trajectories ---------------------------------------------------------------


@dataclass(frozen=True)
class LiftedTrajectory:
    times: np.ndarray
    base_points: np.ndarray
    theta_hat: np.ndarray
    theta_h: np.ndarray
    monodromy: np.ndarray | None
    energies: np.ndarray
    frames: np.ndarray | None = None
    theta0: float = 0.0

    @property
    def m(self) -> int:
        return self.base_points.shape[-1]

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def adapted_monodromy(self, i: int = -1) -> np.ndarray:
        """Chart monodromy expressed in the unitary frames at both ends."""
        return self.frames[i] @ self.monodromy[i] @ np.linalg.inv(self.frames[0])

    def symplectic_residuals(self) -> np.ndarray:
        if self.monodromy is None:
            return np.zeros(0)
        return np.array([symplectic_residual(self.adapted_monodromy(i)) for i in range(len(self.times))])

    def lift_relation_residual(self) -> float:
        """max |theta_h - theta_hat - t H(z)|."""
        return float(np.max(np.abs(self.theta_h - self.theta_hat - self.times * self.energies[0])))

    def monodromy_at(self, i: int = -1) -> SymplecticMap:
        return SymplecticMap.from_matrix(self.adapted_monodromy(i), tol=1e-6)

    def to_csv(self, path):
        m = self.m
        head = ["t"] + [f"re_z{i + 1}" for i in range(m)] + [f"im_z{i + 1}" for i in range(m)]
        head += ["theta_hat", "theta_h", "H"]
        n = 2 * m
        if self.monodromy is not None:
            head += [f"M{i + 1}{j + 1}" for i in range(n) for j in range(n)] + ["symplectic_residual"]
            res = self.symplectic_residuals()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(head)
            for i, t in enumerate(self.times):
                z = self.base_points[i]
                row = [t, *z.real, *z.imag, self.theta_hat[i], self.theta_h[i], self.energies[i]]
                if self.monodromy is not None:
                    row += list(self.monodromy[i].ravel()) + [res[i]]
                w.writerow([repr(float(x)) for x in row])


def _unpack(y, m):
    z = y[:m] + 1j * y[m : 2 * m]
    return z


def _rhs(model: KahlerModel, variational: bool):
    m = model.m
    n = 2 * m

    def f(t, y):
        z = _unpack(y, m)
        xi = complex_field(model, z)
        hor = half_dc_phi(model, z, xi)
        out = np.empty_like(y)
        out[:m], out[m:n] = xi.real, xi.imag
        out[n] = hor - model.energy(z)
        out[n + 1] = hor
        if variational:
            M = y[n + 2 :].reshape(n, n)
            out[n + 2 :] = (field_jacobian(model, z) @ M).ravel()
        return out

    return f


def _exit_event(model: KahlerModel):
    R2 = model.domain_radius**2
    m = model.m

    def ev(t, y):
        return R2 - np.sum(y[: 2 * m] ** 2)

    ev.terminal = True
    ev.direction = -1
    return ev


def _solve(model, y0, t_span, t_eval, ode_tol, variational, dense=False):
    events = [_exit_event(model)] if np.isfinite(model.domain_radius) else None
    atol = np.full(y0.shape, ode_tol * 1e-6)
    sol = solve_ivp(_rhs(model, variational), t_span, y0, method="DOP853", t_eval=t_eval,
                    rtol=ode_tol, atol=atol, events=events, dense_output=dense)
    if sol.status == 1:
        t_exit = float(sol.t_events[0][0])
        raise TruncationError(f"trajectory left the chart at t = {t_exit:.6g}", exit_time=t_exit)
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}")
    return sol


def _initial(z, m, variational):
    n = 2 * m
    y0 = np.concatenate([z.real, z.imag, [0.0, 0.0]])
    if variational:
        y0 = np.concatenate([y0, np.eye(n).ravel()])
    return y0


def flow(model: KahlerModel, z, t_grid, ode_tol: float = DEFAULT_ODE_TOL, theta0: float = 0.0,
         variational: bool = True) -> LiftedTrajectory:
    """Integrate the lifted flow and (optionally) its linearization on ``t_grid``."""
    z = _as_z(z, model.m).reshape(model.m)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    if np.sum(np.abs(z) ** 2) >= model.domain_radius**2:
        raise TruncationError("initial point outside the chart", exit_time=0.0)
    m, n = model.m, 2 * model.m
    y0 = _initial(z, m, variational)
    t0 = min(0.0, t_grid[0])
    if t_grid[-1] == t0:
        Y = y0[:, None]
    else:
        sol = _solve(model, y0, (t0, t_grid[-1]), t_grid if t0 == t_grid[0] else np.r_[t0, t_grid],
                     ode_tol, variational)
        Y = sol.y if t0 == t_grid[0] else sol.y[:, 1:]
    Z = (Y[:m] + 1j * Y[m:n]).T
    mono = Y[n + 2 :].T.reshape(-1, n, n) if variational else None
    return LiftedTrajectory(t_grid, Z, Y[n], Y[n + 1], mono, model.energy(Z), frame_matrices(model, Z), theta0)


def flow_points(model: KahlerModel, Z, T: float, ode_tol: float = DEFAULT_ODE_TOL):
    """Flow a batch of points to time T; returns (g^T Z, theta_hat, theta_h)."""
    Z = _as_z(Z, model.m).reshape(-1, model.m)
    N, m = Z.shape
    if T == 0:
        return Z.copy(), np.zeros(N), np.zeros(N)

    def f(t, y):
        z = y[: 2 * N * m].reshape(2, N, m)
        z = z[0] + 1j * z[1]
        xi = complex_field(model, z)
        hor = half_dc_phi(model, z, xi)
        return np.concatenate([xi.real.ravel(), xi.imag.ravel(), hor - model.energy(z), hor])

    y0 = np.concatenate([Z.real.ravel(), Z.imag.ravel(), np.zeros(2 * N)])
    sol = solve_ivp(f, (0.0, T), y0, method="DOP853", t_eval=[T], rtol=ode_tol,
                    atol=ode_tol * 1e-6)
    if sol.status != 0:
        raise IntegrationError(f"integration failed: {sol.message}")
    y = sol.y[:, -1]
    zt = y[: N * m].reshape(N, m) + 1j * y[N * m : 2 * N * m].reshape(N, m)
    if np.isfinite(model.domain_radius) and np.any(np.sum(np.abs(zt) ** 2, -1) >= model.domain_radius**2):
        raise TruncationError("a flowed point left the chart", exit_time=T)
    return zt, y[2 * N * m : 2 * N * m + N], y[2 * N * m + N :]


# -- periodic orbits ----------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicOrbitData:
    z: np.ndarray
    T_z: float
    holonomy_angle: float
    theta_hat: float
    monodromy: SymplecticMap
    classification: Classification
    return_residual: float
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    @property
    def invariant_vector(self) -> InvariantVector:
        return InvariantVector.from_alpha(self.alpha)

    @property
    def k_frame_monodromy(self) -> np.ndarray:
        return self.monodromy.matrix


def frame_matrices(model: KahlerModel, Z) -> np.ndarray:
    """Real matrices of w = L^T z for each point, where G = L L^*."""
    G = model.metric(Z)
    L = np.linalg.cholesky(0.5 * (G + np.conj(np.swapaxes(G, -1, -2))))
    Lt = np.swapaxes(L, -1, -2)
    return np.block([[Lt.real, -Lt.imag], [Lt.imag, Lt.real]])


def k_frame(model: KahlerModel, z):
    """Cholesky factor L of the metric at z; w = L^T z is a unitary frame."""
    G = model.metric(_as_z(z, model.m).reshape(model.m))
    return np.linalg.cholesky(0.5 * (G + G.conj().T))


def k_frame_alpha(model: KahlerModel, z) -> np.ndarray:
    """alpha = i wdot in the unitary frame, so ||xi_H||^2 = 2 |alpha|^2."""
    z = _as_z(z, model.m).reshape(model.m)
    L = k_frame(model, z)
    return 1j * (L.T @ complex_field(model, z))


def orbit_data(model: KahlerModel, z, T: float, ode_tol: float = DEFAULT_ODE_TOL) -> PeriodicOrbitData:
    """Holonomy and K-frame monodromy after time T, without checking closure."""
    z = _as_z(z, model.m).reshape(model.m)
    tr = flow(model, z, [0.0, T], ode_tol)
    M = tr.monodromy[-1]
    Mk = adapt_to_standard(M, model.metric(z))
    Sk = SymplecticMap.from_matrix(Mk, tol=1e-6)
    ret = float(np.linalg.norm(tr.base_points[-1] - z))
    return PeriodicOrbitData(
        z=z, T_z=float(T), holonomy_angle=float(tr.theta_h[-1]), theta_hat=float(tr.theta_hat[-1]),
        monodromy=Sk, classification=classify_pds(Sk, tol=1e-7), return_residual=ret,
        alpha=k_frame_alpha(model, z),
    )


def find_period(model: KahlerModel, z, T_max: float, return_tol: float = 1e-8,
                ode_tol: float = 1e-12, n_samples: int = 10_000) -> PeriodicOrbitData | None:
    """Smallest T in (0, T_max] with |g^T z - z| <= return_tol, or None."""
    z = _as_z(z, model.m).reshape(model.m)
    m = model.m
    if np.linalg.norm(complex_field(model, z)) == 0:
        return None
    y0 = _initial(z, m, False)
    sol = _solve(model, y0, (0.0, T_max), None, ode_tol, False, dense=True)
    ts = np.linspace(0.0, T_max, n_samples + 1)
    Y = sol.sol(ts)
    Z = (Y[:m] + 1j * Y[m : 2 * m]).T
    d = np.linalg.norm(Z - z, axis=1)
    thresh = max(100 * return_tol, 1e-3 * d.max())
    away = np.flatnonzero(d > thresh)
    if away.size == 0:
        return None

    def g(t):
        y = sol.sol(t)
        zt = y[:m] + 1j * y[m : 2 * m]
        return float(np.real(np.vdot(zt - z, complex_field(model, zt))))

    gs = np.real(np.sum(np.conj(Z - z) * complex_field(model, Z), axis=1))
    start = away[0]
    for i in range(start, n_samples):
        if gs[i] < 0 <= gs[i + 1] and d[i] + d[i + 1] < 2 * max(thresh, 0.5 * d.max()):
            T = brentq(g, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15)
            T = _polish(model, z, T, ode_tol)
            data = orbit_data(model, z, T, ode_tol)
            if data.return_residual <= return_tol:
                return data
    return None


def _polish(model, z, T, ode_tol, steps: int = 3):
    """Secant iterations on g(T) = Re <g^T z - z, xi(g^T z)> with exact integration."""
    m = model.m
    y0 = _initial(z, m, False)

    def g(t):
        sol = _solve(model, y0, (0.0, t), [t], ode_tol, False)
        zt = sol.y[:m, -1] + 1j * sol.y[m : 2 * m, -1]
        return float(np.real(np.vdot(zt - z, complex_field(model, zt))))

    h = 1e-6 * max(1.0, T)
    t0, t1 = T - h, T
    g0, g1 = g(t0), g(t1)
    for _ in range(steps):
        if g1 == g0:
            break
        t2 = t1 - g1 * (t1 - t0) / (g1 - g0)
        t0, g0, t1 = t1, g1, t2
        g1 = g(t1)
    return t1


# -- holonomy checks -------------------------------------------------------------------


@dataclass(frozen=True)
class HolonomyFit:
    slope: float
    radii: np.ndarray
    differences: np.ndarray
    below_noise: bool
    noise_floor: float


def holonomy_hessian_check(model: KahlerModel, orbit: PeriodicOrbitData, radii,
                           ode_tol: float = 1e-12, n_directions: int = 8,
                           noise_floor: float = 1e-13, seed: int = 0) -> HolonomyFit:
    """Fit the log-log slope of max |theta_hat_w(T) - theta_hat_z(T)| over |w - z| = r."""
    radii = np.asarray(radii, dtype=float)
    m = model.m
    if m == 1:
        dirs = np.exp(2j * np.pi * np.arange(n_directions) / n_directions)[:, None]
    else:
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n_directions, m)) + 1j * rng.normal(size=(n_directions, m))
        dirs = v / np.linalg.norm(v, axis=1, keepdims=True)
    pts = orbit.z + (radii[:, None, None] * dirs[None]).reshape(-1, m)
    pts = np.vstack([orbit.z[None], pts])
    _, th, _ = flow_points(model, pts, orbit.T_z, ode_tol)
    diffs = np.abs(th[1:] - th[0]).reshape(len(radii), n_directions).max(axis=1)
    ok = diffs > noise_floor
    if ok.sum() < 2:
        return HolonomyFit(np.inf, radii, diffs, True, noise_floor)
    slope = np.polyfit(np.log(radii[ok]), np.log(diffs[ok]), 1)[0]
    return HolonomyFit(float(slope), radii, diffs, False, noise_floor)


def fixed_point_orbit(model: KahlerModel, z, T: float, ode_tol: float = 1e-12) -> PeriodicOrbitData:
    """Orbit data for a fixed point of the flow, using T as the period."""
    data = orbit_data(model, z, T, ode_tol)
    if data.return_residual > 1e-12:
        raise ValidationError("point is not fixed by the flow", residual=data.return_residual)
    return data


def loop_potential_integral(model: KahlerModel, path_samples, closed: bool = False,
                            nodes: int = 8) -> float:
    """Integral of (1/2) d^c phi along a path through the given samples.

    The path is a cubic spline in a uniform parameter (periodic when closed) and
    each segment is integrated with Gauss-Legendre.
    """
    P = _as_z(path_samples, model.m)
    if P.ndim != 2 or len(P) < 2:
        raise ValidationError("need an (N, m) array of path samples")
    if np.isfinite(model.domain_radius) and np.any(np.sum(np.abs(P) ** 2, -1) >= model.domain_radius**2):
        raise TruncationError("path leaves the chart", exit_time=float("nan"))
    s = np.linspace(0.0, 1.0, len(P))
    vals = np.hstack([P.real, P.imag])
    if closed:
        if np.abs(P[0] - P[-1]).max() > 1e-12:
            raise ValidationError("closed paths must repeat the first sample at the end")
        vals[-1] = vals[0]
        spline = CubicSpline(s, vals, bc_type="periodic")
    elif len(P) == 2:
        spline = CubicSpline(s, vals, bc_type="natural")
    else:
        spline = CubicSpline(s, vals, bc_type="not-a-knot")
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = s[:-1, None], s[1:, None]
    q = (0.5 * (b - a) * (x + 1) + a).ravel()
    wq = (0.5 * (b - a) * w).ravel()
    pos, vel = spline(q), spline(q, 1)
    m = model.m
    z = pos[:, :m] + 1j * pos[:, m:]
    v = vel[:, :m] + 1j * vel[:, m:]
    return float(np.sum(wq * half_dc_phi(model, z, v)))


@dataclass(frozen=True)
class PhaseLocalCheck:
    lhs: float
    rhs: float
    residual: float


def phase_local_check(model: KahlerModel, z0, w, T: float, n_samples: int = 129,
                      ode_tol: float = 1e-12) -> PhaseLocalCheck:
    """Compare theta_hat_w(T) with theta_hat_z0(T) - int_gamma + int_{g^T gamma}
    of (1/2) d^c phi, for the straight segment gamma from z0 to w."""
    z0 = _as_z(z0, model.m).reshape(model.m)
    w = _as_z(w, model.m).reshape(model.m)
    s = np.linspace(0.0, 1.0, n_samples)[:, None]
    gamma = z0 + s * (w - z0)
    img, th, _ = flow_points(model, gamma, T, ode_tol)
    rhs = th[0] - loop_potential_integral(model, gamma) + loop_potential_integral(model, img)
    return PhaseLocalCheck(float(th[-1]), float(rhs), float(abs(th[-1] - rhs)))


def contact_pullback_residual(model: KahlerModel, z, t: float, vectors, ode_tol: float = 1e-12,
                              h: float = 1e-5) -> float:
    """max |alpha(D g^t V) - alpha(V)| over tangent samples V = (v, c), with the
    theta derivative of the lift taken by central differences."""
    z = _as_z(z, model.m).reshape(model.m)
    m = model.m
    tr = flow(model, z, [0.0, t], ode_tol)
    M, zt = tr.monodromy[-1], tr.base_points[-1]
    worst = 0.0
    for v, c in vectors:
        v = np.asarray(v, dtype=complex).reshape(m)
        vr = np.concatenate([v.real, v.imag])
        Mv = M @ vr
        Mv = Mv[:m] + 1j * Mv[m:]
        _, thp, _ = flow_points(model, (z + h * v)[None], t, ode_tol)
        _, thm, _ = flow_points(model, (z - h * v)[None], t, ode_tol)
        dth = (thp[0] - thm[0]) / (2 * h)
        before = contact_form(model, z, v, c)
        after = contact_form(model, zt, Mv, c + dth)
        worst = max(worst, float(abs(after - before)))
    return worst
