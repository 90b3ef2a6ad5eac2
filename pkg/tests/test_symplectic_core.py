import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from toepweyl.errors import SingularityError, ValidationError
from toepweyl.symplectic_core import (
    ComplexBlocks,
    InvariantVector,
    SymplecticMap,
    check_symplectic,
    classify_pds,
    complexify,
    conjugation_matrix,
    decomplexify,
    gcal_coefficient,
    gcal_series,
    holomorphic_block_det,
    invariant_matrix_element,
    metaplectic_eta,
    pds_spectrum,
    random_pds,
    random_symplectic,
    random_unitary_symplectic,
    standard_complex_structure,
    standard_form,
)

LN2 = np.log(2.0)
J0 = standard_complex_structure(1)


def hyperbolic(m, lams):
    """diag(e^l, e^-l) on each (x_j, y_j) pair, ordered (x.., y..)."""
    lams = np.asarray(lams, float)
    return np.diag(np.concatenate([np.exp(lams), np.exp(-lams)]))


seeds = st.integers(0, 2**32 - 1)


def test_check_symplectic_examples():
    ok, r = check_symplectic(np.eye(2))
    assert ok and r == 0.0
    ok, r = check_symplectic(J0)
    assert ok and r == 0.0
    ok, r = check_symplectic(np.diag([2.0, 2.0]))
    assert not ok
    assert r == pytest.approx(3.0)


def test_non_symplectic_is_rejected_with_residual():
    with pytest.raises(ValidationError) as info:
        complexify(np.diag([2.0, 2.0]))
    assert info.value.residual == pytest.approx(3.0)


def test_near_symplectic_is_projected():
    S = hyperbolic(1, [LN2]) + 1e-12
    mat = SymplecticMap.from_matrix(S).matrix
    assert check_symplectic(mat, tol=1e-14)[0]


@pytest.mark.parametrize(
    "S, P, Q",
    [
        (np.eye(2), 1.0, 0.0),
        (J0, 1j, 0.0),
        (hyperbolic(1, [LN2]), 1.25, 0.75),
    ],
)
def test_complexify_examples(S, P, Q):
    b = complexify(S)
    assert_allclose(b.P, [[P]], atol=1e-15)
    assert_allclose(b.Q, [[Q]], atol=1e-15)
    assert_allclose(decomplexify(b).matrix, S, atol=1e-15)


def test_conjugation_matrix_is_unitary():
    W = conjugation_matrix(3)
    assert_allclose(W.conj().T @ W, np.eye(6), atol=1e-15)


@given(seeds, st.integers(1, 3))
def test_block_matrix_is_conjugate_of_real_matrix(seed, m):
    S = random_symplectic(m, np.random.default_rng(seed), scale=0.7)
    W = conjugation_matrix(m)
    assert_allclose(np.linalg.inv(W) @ S @ W, complexify(S).matrix(), atol=1e-11)


@settings(max_examples=200)
@given(seeds, st.integers(1, 3), st.floats(0.05, 3.0))
def test_folland_identities_relative(seed, m, scale):
    # residuals are measured relative to |P|^2, which is the size of each product
    S = random_symplectic(m, np.random.default_rng(seed), scale=scale)
    b = complexify(S, tol=1e-6)
    size = max(1.0, np.abs(b.P).max()) ** 2
    assert b.folland_residual() / size <= 1e-12


@given(seeds, st.integers(1, 3))
def test_round_trip(seed, m):
    S = random_symplectic(m, np.random.default_rng(seed), scale=0.5)
    back = decomplexify(complexify(S)).matrix
    assert np.abs(back - S).max() <= 1e-12 * max(1.0, np.abs(S).max())


def test_decomplexify_rejects_non_folland():
    with pytest.raises(ValidationError):
        decomplexify(ComplexBlocks(np.array([[2.0 + 0j]]), np.array([[0j]])))


def test_inverse_blocks():
    S = random_symplectic(2, np.random.default_rng(4))
    b = complexify(S)
    assert_allclose(b.inverse().matrix() @ b.matrix(), np.eye(4), atol=1e-12)


@pytest.mark.parametrize(
    "S, kind",
    [
        (np.eye(2), "identity"),
        (hyperbolic(1, [LN2]), "positive_definite_symmetric"),
        (J0, "unitary_type"),
        (np.array([[1.0, 1.0], [0.0, 1.0]]), "other"),
    ],
)
def test_classification(S, kind):
    assert classify_pds(S).kind == kind


def test_classification_lambdas_and_v1():
    c = classify_pds(hyperbolic(1, [LN2]))
    assert_allclose(c.lambdas, [LN2], rtol=1e-14)
    c = classify_pds(hyperbolic(2, [0.0, LN2]))
    assert_allclose(c.lambdas, [LN2, 0.0], atol=1e-14)
    assert c.v1_dim == 2


@settings(max_examples=50)
@given(seeds, st.integers(1, 3))
def test_pds_det_is_cosh_product(seed, m):
    rng = np.random.default_rng(seed)
    S, _ = random_pds(m, rng)
    c = classify_pds(S)
    assert c.kind == "positive_definite_symmetric"
    spec = pds_spectrum(S)
    for n in range(-6, 7):
        Sn = np.linalg.matrix_power(S if n >= 0 else np.linalg.inv(S), abs(n))
        det = np.linalg.det(complexify(Sn, tol=1e-8).P)
        ref = np.prod(np.cosh(n * c.lambdas))
        assert abs(det - ref) <= 1e-9 * ref
        assert spec.det_P(n) == pytest.approx(ref, rel=1e-12)


@given(seeds, st.integers(1, 3))
def test_projected_symmetric_map_averages_with_inverse(seed, m):
    # P_J S P_J = (S + S^{-1}) P_J / 2 on the complexification
    S, _ = random_pds(m, np.random.default_rng(seed))
    A = complexify(S).matrix()
    PJ = np.zeros_like(A)
    PJ[:m, :m] = np.eye(m)
    lhs = PJ @ A @ PJ
    rhs = 0.5 * (A + np.linalg.inv(A)) @ PJ
    assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.abs(A).max()))


@given(seeds, st.integers(1, 3))
def test_eigenvector_pairing(seed, m):
    S, _ = random_pds(m, np.random.default_rng(seed))
    mu, V = np.linalg.eigh(S)
    J = standard_complex_structure(m)
    for lam, e in zip(mu, V.T):
        assert_allclose(S @ (J @ e), (J @ e) / lam, atol=1e-10 * mu.max())


@pytest.mark.parametrize(
    "S, det",
    [
        (np.eye(2), 1.0),
        (hyperbolic(1, [LN2]), 1.25),
        (hyperbolic(2, [0.0, np.log(3.0)]), 5.0 / 3.0),
    ],
)
def test_holomorphic_block_det(S, det):
    assert holomorphic_block_det(S) == pytest.approx(det, rel=1e-14)


@pytest.mark.parametrize(
    "S, alpha, expected",
    [
        (np.eye(2), [1.0], 1.0),
        (hyperbolic(2, [0.0, np.log(4.0)]), [1.0, 0.0], 1.0),
        (np.eye(4), [3j, 4.0], 25.0),
    ],
)
def test_invariant_matrix_element(S, alpha, expected):
    v = InvariantVector.from_alpha(alpha)
    assert invariant_matrix_element(S, v) == pytest.approx(expected, rel=1e-14)


def test_alpha_xi_round_trip():
    v = InvariantVector.from_alpha([1 + 2j, -0.5j])
    assert_allclose(InvariantVector.from_xi(v.xi).alpha, v.alpha)


def test_matrix_element_rejects_non_invariant():
    with pytest.raises(ValidationError):
        invariant_matrix_element(hyperbolic(1, [LN2]), InvariantVector.from_alpha([1.0]))


def test_singular_block_reports_condition():
    from toepweyl.symplectic_core import _matrix_element

    with pytest.raises(SingularityError) as info:
        _matrix_element(np.array([[1.0, 1.0], [0.0, 1e-20]]), np.array([1.0, 0.0]))
    assert info.value.condition > 1e14


@given(seeds, st.integers(1, 3))
def test_pds_with_invariant_vector(seed, m):
    S, xi = random_pds(m, np.random.default_rng(seed), invariant=True)
    v = InvariantVector.from_xi(xi)
    assert invariant_matrix_element(S, v) == pytest.approx(v.norm**2, rel=1e-9)


def test_gcal_examples():
    S = hyperbolic(2, [0.0, LN2])
    v = InvariantVector.from_alpha([1.0, 0.0])
    assert gcal_coefficient(S, v, 0).value == pytest.approx(1.0)
    assert gcal_coefficient(S, v, 1).value == pytest.approx(1.25**-0.5, rel=1e-14)
    v3 = InvariantVector.from_alpha([3.0, 0.0])
    assert gcal_coefficient(S, v3, 0).value == pytest.approx(1 / 3)


def test_gcal_decay_half_rate():
    S = hyperbolic(2, [0.0, LN2])
    series = gcal_series(S, InvariantVector.from_alpha([1.0, 0.0]), 30)
    for n, g in series.items():
        assert abs(g.value) <= np.sqrt(2.0) * np.exp(-abs(n) * LN2 / 2) + 1e-15
        assert g.consistency_residual() < 1e-12


def test_gcal_general_path_tracks_branch():
    # identity on the first pair, a rotation by 0.3 on the second: |G_n| = 1
    c, s = np.cos(0.3), np.sin(0.3)
    S = np.eye(4)
    S[1, 1], S[1, 3], S[3, 1], S[3, 3] = c, -s, s, c
    series = gcal_series(S, InvariantVector.from_alpha([1.0, 0.0]), 40)
    vals = np.array([series[n].value for n in range(0, 41)])
    assert_allclose(np.abs(vals), 1.0, rtol=1e-12)
    # det P_n = e^{0.3 i n} continues without jumps, so G_n = e^{-0.15 i n}
    assert_allclose(vals, np.exp(-0.15j * np.arange(41)), atol=1e-12)


@pytest.mark.parametrize("S, eta", [(np.eye(2), 1.0), (hyperbolic(1, [LN2]), 0.8)])
def test_eta_examples(S, eta):
    r = metaplectic_eta(S)
    assert r.value == pytest.approx(eta, rel=1e-14)
    assert r.daub_residual < 1e-14
    assert r.beta_residual < 1e-14


@given(seeds, st.integers(1, 3))
def test_eta_unitary_invariance(seed, m):
    rng = np.random.default_rng(seed)
    S = random_symplectic(m, rng, scale=0.5)
    U = random_unitary_symplectic(m, rng)
    a = metaplectic_eta(S).value
    b = metaplectic_eta(U @ S @ U.T).value
    assert abs(a - b) <= 1e-10 * abs(a)


@given(seeds, st.integers(1, 3))
def test_eta_beta_relation(seed, m):
    S = random_symplectic(m, np.random.default_rng(seed), scale=0.6)
    assert metaplectic_eta(S).beta_residual < 1e-9


def test_standard_form_and_J0():
    Om = standard_form(2)
    J = standard_complex_structure(2)
    assert_allclose(J @ J, -np.eye(4))
    assert_allclose(J.T @ Om @ J, Om)
