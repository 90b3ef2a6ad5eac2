import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from toepweyl.bf_model import (
    LiftedPoint,
    MetaplecticKernelSpec,
    bergman_kernel,
    bpu_closed_form,
    bpu_matrix_element,
    check_compatible,
    coherent_norm_squared,
    coherent_state,
    factorization_ladder,
    general_J_kernel,
    group_law_phase,
    heisenberg_translate,
    lifted_kernel,
    log_bergman_kernel,
    metaplectic_kernel,
    toep_met_factorization_check,
)
from toepweyl.errors import SingularityError, UnsupportedError, ValidationError
from toepweyl.quadrature import log_gaussian_integral
from toepweyl.symplectic_core import (
    ComplexBlocks,
    random_symplectic,
    standard_complex_structure,
)

LN2 = np.log(2.0)
coords = st.floats(-1.5, 1.5)
cplx = st.builds(complex, coords, coords)


def hyperbolic_spec(k, lam, m=1):
    S = np.diag(np.concatenate([np.full(m, np.exp(lam)), np.full(m, np.exp(-lam))]))
    return MetaplecticKernelSpec.from_symplectic(k, S)


def to_real(z):
    z = np.atleast_1d(np.asarray(z, complex))
    return np.concatenate([z.real, z.imag])


# -- kernels


def test_bergman_examples():
    assert bergman_kernel(1, 1, 0, 0) == pytest.approx(1 / (2 * np.pi))
    assert bergman_kernel(1, 1, 1, 0) == pytest.approx(np.exp(-0.5) / (2 * np.pi), rel=1e-15)
    assert bergman_kernel(1, 1, 1, 0).real == pytest.approx(0.0965, abs=5e-5)


@given(st.integers(1, 50), st.lists(cplx, min_size=2, max_size=2))
def test_bergman_diagonal(k, z):
    assert bergman_kernel(k, 2, z, z) == pytest.approx((k / (2 * np.pi)) ** 2, rel=1e-12)


def test_log_kernel_survives_large_k():
    z, w = np.array([30.0]), np.array([30.5])
    lk = log_bergman_kernel(5000, 1, z, w)
    assert np.isfinite(lk)
    assert lk.real == pytest.approx(np.log(5000 / (2 * np.pi)) - 5000 * 0.25 / 2, rel=1e-12)


@given(st.integers(1, 8), cplx, cplx, st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_lifted_kernel_hermitian(k, z, w, a, b):
    x, y = LiftedPoint([z], a), LiftedPoint([w], b)
    assert_allclose(lifted_kernel(k, x, y), np.conj(lifted_kernel(k, y, x)), atol=1e-13)


@given(st.integers(1, 8), cplx, cplx, st.floats(-10, 10))
def test_lifted_kernel_equivariance(k, z, w, phi):
    x, y = LiftedPoint([z], 0.3), LiftedPoint([w], 1.1)
    base = lifted_kernel(k, x, y)
    assert_allclose(lifted_kernel(k, x.rotate(phi), y), np.exp(1j * k * phi) * base, atol=1e-12)
    assert_allclose(lifted_kernel(k, x, y.rotate(phi)), np.exp(-1j * k * phi) * base, atol=1e-12)


def test_lifted_kernel_examples():
    o = LiftedPoint([0.0])
    assert lifted_kernel(3, o, o) == pytest.approx(bergman_kernel(3, 1, 0, 0))
    val = lifted_kernel(2, LiftedPoint([0.0], np.pi / 2), o)
    assert val == pytest.approx(-1 / np.pi, abs=1e-15)


def test_lifted_point_normalizes_angle():
    assert LiftedPoint([0.0], -np.pi / 2).theta == pytest.approx(3 * np.pi / 2)
    assert LiftedPoint([0.0], 4 * np.pi).theta == pytest.approx(0.0)


def test_reproducing_property():
    # int Pi(x, u) Pi(u, y) dVol(u) = Pi(x, y) with dVol = 2 dx dy
    k = 3.0
    z, w = 0.4 - 0.2j, -0.1 + 0.7j

    def logf(u):
        uc = u[:, 0] + 1j * u[:, 1]
        return log_bergman_kernel(k, 1, z, uc[:, None]) + log_bergman_kernel(k, 1, uc[:, None], w)

    val = np.exp(np.log(2.0) + log_gaussian_integral(logf, 2, order=20))
    assert_allclose(val, bergman_kernel(k, 1, z, w), rtol=1e-12)


# -- general complex structures


def test_general_J_diagonal_is_one():
    assert general_J_kernel(standard_complex_structure(2), [1, 2, 3, 4], [1, 2, 3, 4]) == 1.0


@given(cplx, cplx)
def test_general_J_reduces_to_standard(z, w):
    J0 = standard_complex_structure(1)
    ref = np.exp(1j * (z * np.conj(w)).imag - 0.5 * abs(z - w) ** 2)
    assert_allclose(general_J_kernel(J0, to_real(z), to_real(w)), ref, atol=1e-14)
    # and equals the unit-k Bergman kernel up to its prefactor
    assert_allclose(ref, 2 * np.pi * bergman_kernel(1, 1, z, w), atol=1e-14)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_conjugated_structures_are_compatible(seed, m):
    rng = np.random.default_rng(seed)
    T = random_symplectic(m, rng, scale=0.4)
    J = T @ standard_complex_structure(m) @ np.linalg.inv(T)
    assert check_compatible(J, tol=1e-8) > 0
    v = rng.normal(size=(2 * m))
    assert abs(general_J_kernel(J, v, v, validate=False) - 1.0) < 1e-12


def test_incompatible_J_rejected():
    with pytest.raises(ValidationError):
        general_J_kernel(-standard_complex_structure(1), [0, 0], [1, 0])
    with pytest.raises(ValidationError):
        general_J_kernel(np.eye(2), [0, 0], [1, 0])
    with pytest.raises(ValidationError):
        T = np.eye(4)
        T[1, 0] = 0.5
        J = T @ standard_complex_structure(2) @ np.linalg.inv(T)
        general_J_kernel(J, np.zeros(4), np.ones(4))


# -- Heisenberg translations


def test_translation_identity():
    v = coherent_state(2.0)
    z = np.array([0.3 + 0.1j])
    assert heisenberg_translate([0.0], v, 2.0)(z) == pytest.approx(v(z))


@given(st.floats(0.5, 8), cplx, cplx)
def test_translated_coherent_state_closed_form(k, w, z):
    val = heisenberg_translate([w], k=k)(np.array([z]))
    ref = np.exp(k * (z * np.conj(w) - abs(z) ** 2 / 2 - abs(w) ** 2 / 2))
    assert_allclose(val, ref, rtol=1e-12, atol=1e-300)


@given(st.floats(0.5, 8), cplx)
def test_translated_state_peaks_at_w(k, w):
    assert abs(heisenberg_translate([w], k=k)(np.array([w]))) == pytest.approx(1.0)


@given(st.floats(0.5, 4), cplx, cplx, cplx)
def test_group_law(k, w1, w2, z):
    inner = heisenberg_translate([w2], k=k)
    both = heisenberg_translate([w1], inner, k)
    total = heisenberg_translate([w1 + w2], k=k)
    zz = np.array([z])
    assert_allclose(total(zz), group_law_phase([w1], [w2], k) * both(zz), rtol=1e-11, atol=1e-300)


def test_group_law_phase_example():
    assert group_law_phase([1.0], [1j], 1.0) == pytest.approx(np.exp(-1j))


def test_coherent_norm():
    k = 2.5

    def logf(u):
        uc = u[:, 0] + 1j * u[:, 1]
        return 2 * np.log(coherent_state(k)(uc[:, None]))

    val = np.exp(np.log(2.0) + log_gaussian_integral(logf, 2, order=10))
    assert val.real == pytest.approx(coherent_norm_squared(k, 1), rel=1e-13)


# -- metaplectic kernels


@given(st.integers(1, 6), cplx, cplx, st.floats(0, 6.28), st.floats(0, 6.28))
def test_identity_blocks_give_lifted_kernel(k, z, w, a, b):
    spec = MetaplecticKernelSpec(k, ComplexBlocks(np.eye(1, dtype=complex), np.zeros((1, 1), complex)))
    x, y = LiftedPoint([z], a), LiftedPoint([w], b)
    assert_allclose(metaplectic_kernel(spec, x, y), lifted_kernel(k, x, y), rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("k", [1, 4, 16])
@pytest.mark.parametrize("lam", [0.0, LN2, 1.0])
def test_metaplectic_origin_value(k, lam):
    o = LiftedPoint([0.0])
    val = metaplectic_kernel(hyperbolic_spec(k, lam), o, o)
    assert val == pytest.approx(k / (2 * np.pi) / np.sqrt(np.cosh(lam)), rel=1e-14)


@given(st.floats(-3, 3), st.integers(1, 5), cplx, cplx)
def test_unitary_blocks_preserve_modulus(phi, k, z, w):
    u = np.exp(1j * phi)
    spec = MetaplecticKernelSpec(k, ComplexBlocks(np.array([[u]]), np.zeros((1, 1), complex)))
    val = metaplectic_kernel(spec, LiftedPoint([z]), LiftedPoint([w]))
    # the unitary moves the first argument; the modulus is the Bergman one
    assert abs(val) == pytest.approx(abs(bergman_kernel(k, 1, np.conj(u) * z, w)), rel=1e-12)
    at_origin = metaplectic_kernel(spec, LiftedPoint([0.0]), LiftedPoint([w]))
    assert abs(at_origin) == pytest.approx(abs(bergman_kernel(k, 1, 0.0, w)), rel=1e-12)


def test_metaplectic_spec_rejects_non_folland():
    with pytest.raises(ValidationError):
        MetaplecticKernelSpec(1, ComplexBlocks(np.array([[2.0 + 0j]]), np.array([[0j]])))


def test_sign_selects_other_sheet():
    o = LiftedPoint([0.0])
    b = hyperbolic_spec(2, LN2).blocks
    plus = metaplectic_kernel(MetaplecticKernelSpec(2, b, 1), o, o)
    minus = metaplectic_kernel(MetaplecticKernelSpec(2, b, -1), o, o)
    assert minus == pytest.approx(-plus)


def test_singular_condition_is_reported():
    zero = np.zeros((1, 1), complex)
    spec = MetaplecticKernelSpec(1, ComplexBlocks(zero, zero), tol=np.inf)
    with pytest.raises(SingularityError):
        metaplectic_kernel(spec, LiftedPoint([0.1]), LiftedPoint([0.0]))


def test_factorization_identity():
    spec = MetaplecticKernelSpec(4, ComplexBlocks(np.eye(1, dtype=complex), np.zeros((1, 1), complex)))
    x, y = LiftedPoint([0.3 + 0.2j], 0.5), LiftedPoint([-0.4j], 2.0)
    assert toep_met_factorization_check(spec, x, y, 40) <= 1e-8


def test_factorization_hyperbolic_origin():
    o = LiftedPoint([0.0])
    assert toep_met_factorization_check(hyperbolic_spec(4, LN2), o, o, 40) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]), st.floats(0.5, 6))
def test_factorization_random(seed, m, k):
    rng = np.random.default_rng(seed)
    spec = MetaplecticKernelSpec.from_symplectic(k, random_symplectic(m, rng, scale=0.3))
    z = rng.normal(scale=0.4, size=(2, m)) + 1j * rng.normal(scale=0.4, size=(2, m))
    x, y = LiftedPoint(z[0], 1.0), LiftedPoint(z[1], 4.0)
    assert toep_met_factorization_check(spec, x, y, 16) <= 1e-8


def test_factorization_ladder_is_monotone():
    spec = MetaplecticKernelSpec.from_symplectic(2.0, random_symplectic(1, np.random.default_rng(9), 0.8))
    res = factorization_ladder(spec, LiftedPoint([0.5j]), LiftedPoint([0.2]), orders=(2, 4, 8, 16, 32))
    assert res[-1] < 1e-10
    assert res[0] > res[-1]


def test_factorization_dimension_guard():
    spec = MetaplecticKernelSpec.from_symplectic(1, np.eye(6))
    with pytest.raises(UnsupportedError):
        toep_met_factorization_check(spec, LiftedPoint(np.zeros(3)), LiftedPoint(np.zeros(3)), 4)


# -- BPU matrix element


def test_bpu_identity_example():
    r = bpu_matrix_element(np.eye(2), [1.0], 1.0, order=40)
    assert r.value == pytest.approx((2 * np.pi) ** 1.5, rel=1e-14)
    assert r.residual < 1e-12


def test_bpu_hyperbolic_plus_identity():
    S = np.diag([1.0, 2.0, 1.0, 0.5])
    r = bpu_matrix_element(S, [1.0, 0.0], 1.0, order=60)
    assert r.residual <= 1e-5


def test_bpu_k_scaling():
    S = np.diag([1.0, 2.0, 1.0, 0.5])
    ks = np.array([1.0, 2.0, 4.0])
    vals = [abs(bpu_matrix_element(S, [1.0, 0.0], k, order=30).quadrature) for k in ks]
    slope = np.polyfit(np.log(ks), np.log(vals), 1)[0]
    assert slope == pytest.approx(-2.5, abs=1e-8)


def test_bpu_orientation_is_adjoint():
    # identity on the first pair, rotation on the second: det P and det P* differ
    c, s = np.cos(0.7), np.sin(0.7)
    S = np.eye(4)
    S[1, 1], S[1, 3], S[3, 1], S[3, 3] = c, -s, s, c
    r = bpu_matrix_element(S, [1.0, 0.0], 1.0, order=30)
    assert r.orientation == "adjoint"
    assert r.residual_adjoint < 1e-12
    assert r.residual_plain > 0.1


def test_bpu_shear():
    r = bpu_matrix_element(np.array([[1.0, 0.8], [0.0, 1.0]]), [1j], 1.0, order=60)
    assert r.residual < 1e-10


def test_bpu_rejects_non_invariant():
    with pytest.raises(ValidationError):
        bpu_matrix_element(np.diag([2.0, 0.5]), [1.0], 1.0)


def test_bpu_closed_form_alpha_scaling():
    assert bpu_closed_form(np.array([[1.0 + 0j]]), [2.0], 1.0) == pytest.approx((2 * np.pi) ** 1.5 / 2)
