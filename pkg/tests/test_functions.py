import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from toepweyl.errors import ValidationError
from toepweyl.functions import (
    Polynomial,
    fubini_study,
    height_x3,
    radial_power_series,
)


def wirtinger_fd(f, z, h=1e-6):
    """(d_z f, d_zbar f) by central differences in x and y."""
    dz, dzb = [], []
    for l in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[l] = h
        dx = (f(z + e) - f(z - e)) / (2 * h)
        dy = (f(z + 1j * e) - f(z - 1j * e)) / (2 * h)
        dz.append((dx - 1j * dy) / 2)
        dzb.append((dx + 1j * dy) / 2)
    return np.stack(dz, -1), np.stack(dzb, -1)


POLY = Polynomial.k_coordinates(
    2,
    {
        ((2, 0), (2, 0)): 0.1,
        ((1, 1), (2, 0)): 0.05 + 0.02j,
        ((2, 0), (1, 1)): 0.05 - 0.02j,
        ((0, 2), (0, 2)): 0.03,
    },
)
RADIAL = radial_power_series(2, [0.0, 1.0, 0.2, -0.05])
FUNCS = {"poly": POLY, "radial": RADIAL, "sum": POLY + RADIAL}

points = st.lists(st.floats(-0.8, 0.8), min_size=4, max_size=4).map(
    lambda v: np.array(v[:2]) + 1j * np.array(v[2:])
)


@pytest.mark.parametrize("name", FUNCS)
@settings(max_examples=20)
@given(z=points)
def test_first_and_second_derivatives(name, z):
    F = FUNCS[name]
    dz, dzb = wirtinger_fd(F.value, z)
    assert_allclose(F.dz(z), dz, atol=1e-8)
    assert_allclose(F.dzbar(z), dzb, atol=1e-8)
    a, b = wirtinger_fd(F.dzbar, z)
    assert_allclose(F.hess_zzbar(z), np.swapaxes(a, -1, -2), atol=1e-7)
    assert_allclose(F.hess_zbarzbar(z), np.swapaxes(b, -1, -2), atol=1e-7)
    a, _ = wirtinger_fd(F.dz, z)
    assert_allclose(F.hess_zz(z), np.swapaxes(a, -1, -2), atol=1e-7)


@pytest.mark.parametrize("name", FUNCS)
@settings(max_examples=20)
@given(z=points)
def test_third_derivatives(name, z):
    F = FUNCS[name]
    a, b = wirtinger_fd(F.hess_zzbar, z)
    assert_allclose(F.third_z(z), np.moveaxis(a, -1, 0), atol=1e-7)
    assert_allclose(F.third_zbar(z), np.moveaxis(b, -1, 0), atol=1e-7)


def test_polynomial_value_is_real_and_broadcasts():
    z = np.random.default_rng(1).normal(size=(3, 5, 2)) * (1 + 0.5j)
    v = POLY.value(z)
    assert v.shape == (3, 5)
    assert v.dtype == float


def test_flat_potential():
    z = np.array([1.0 + 2.0j])
    flat = Polynomial.k_coordinates(1, {})
    assert flat.value(z) == pytest.approx(5.0)
    assert_allclose(flat.hess_zzbar(z), [[1.0]])
    assert flat.degree == 2


def test_k_coordinates_reject_low_order_terms():
    with pytest.raises(ValidationError):
        Polynomial.k_coordinates(1, {((1,), (2,)): 0.1})


def test_real_valuedness_enforced():
    with pytest.raises(ValidationError):
        Polynomial(1, {((2,), (0,)): 1.0}).check_real()
    Polynomial(1, {((2,), (0,)): 1j, ((0,), (2,)): -1j}).check_real()


def test_bad_multi_index():
    with pytest.raises(ValidationError):
        Polynomial(2, {((1,), (1,)): 1.0})


@given(st.floats(0, 50))
def test_sphere_functions(u):
    z = np.array([np.sqrt(u) + 0j])
    assert fubini_study().value(z) == pytest.approx(np.log1p(u))
    assert height_x3().value(z) == pytest.approx((1 - u) / (1 + u))
    # the Fubini-Study metric is (1 + u)^{-2}
    assert fubini_study().hess_zzbar(z)[0, 0].real == pytest.approx((1 + u) ** -2)
