import numpy as np
import pytest

from hurwitzwp.jets import Jet, JetOrderError


def test_poincare_laplacian_at_origin():
    z, zb = Jet.variables([0.0, 0.0], order=2)
    lg = (2.0 / (1 - z * zb) ** 2).log()
    assert lg.partial((1, 1))[0] == pytest.approx(2.0, abs=1e-14)


def test_holomorphic_square():
    z0 = np.array([0.3 + 0.2j, -0.7j])
    z, zb = Jet.variables([z0, np.conj(z0)], order=3)
    f = z * z
    np.testing.assert_allclose(f.partial((1, 0)), 2 * z0, atol=1e-15)
    np.testing.assert_allclose(f.partial((0, 1)), 0.0, atol=1e-15)


def test_elementary_functions_against_closed_forms():
    x0 = np.array([0.4 + 0.1j, 1.3 - 0.5j])
    (x,) = Jet.variables([x0], order=4)
    for jet, derivs in (
        (x.exp(), [np.exp(x0)] * 5),
        (x.log(), [np.log(x0), 1 / x0, -1 / x0**2, 2 / x0**3, -6 / x0**4]),
        (x.sqrt(), [np.sqrt(x0), 0.5 * x0**-0.5, -0.25 * x0**-1.5, 0.375 * x0**-2.5,
                    -0.9375 * x0**-3.5]),
        (x.reciprocal(), [1 / x0, -1 / x0**2, 2 / x0**3, -6 / x0**4, 24 / x0**5]),
    ):
        for k, d in enumerate(derivs):
            np.testing.assert_allclose(jet.partial((k,)), d, rtol=1e-13)


def test_mixed_partials_commute_and_match_product_rule():
    rng = np.random.default_rng(3)
    v = rng.normal(size=(4, 5)) + 1j * rng.normal(size=(4, 5))
    a, b, c, d = Jet.variables(list(v), order=4)
    f = (a * b + c).exp() * (1 + d * a).log()
    np.testing.assert_allclose(f.d(0).d(2).value, f.d(2).d(0).value, rtol=1e-13)
    np.testing.assert_allclose(f.d(0).d(2).value, f.partial((1, 0, 1, 0)), rtol=1e-13)


def test_order_limit_is_explicit():
    with pytest.raises(JetOrderError):
        Jet.variables([0.1], order=5)
    (x,) = Jet.variables([0.1], order=2)
    with pytest.raises(JetOrderError):
        x.partial((3,))
    with pytest.raises(JetOrderError):
        x.d(0, times=3)
