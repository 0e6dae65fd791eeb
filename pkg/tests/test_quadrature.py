import math

import numpy as np
import pytest

from pbfheat.errors import CapacityError, DomainError, NumericsError, ValidationError
from pbfheat.quadrature import Quadrature, cached_quadrature, gauss_legendre, integrate


class TestGaussLegendre:
    def test_order_one_is_the_midpoint_rule(self):
        q = gauss_legendre(1)
        assert q.nodes.tolist() == [0.0]
        assert q.weights.tolist() == [2.0]

    def test_order_two_closed_form(self):
        q = gauss_legendre(2)
        val = 1.0 / math.sqrt(3.0)
        assert q.nodes == pytest.approx([-val, val], abs=1e-15)
        assert q.weights == pytest.approx([1.0, 1.0], abs=1e-15)

    def test_order_five_integrates_x8(self):
        q = gauss_legendre(5)
        approx = float(q.weights @ q.nodes**8)
        assert approx == pytest.approx(2.0 / 9.0, abs=1e-14)

    @pytest.mark.parametrize("order", [1, 2, 3, 7, 64, 129, 800])
    def test_invariants(self, order):
        q = gauss_legendre(order)
        assert np.all(np.diff(q.nodes) > 0)
        assert np.all(np.abs(q.nodes) < 1.0)
        assert np.array_equal(q.nodes, -q.nodes[::-1])  # exact symmetry
        assert np.array_equal(q.weights, q.weights[::-1])
        assert np.all(q.weights > 0)
        assert abs(q.weights.sum() - 2.0) < 1e-13

    @pytest.mark.parametrize("order", [2, 5, 17, 96, 391])
    def test_matches_numpy_leggauss(self, order):
        q = gauss_legendre(order)
        ref_nodes, ref_weights = np.polynomial.legendre.leggauss(order)
        assert np.max(np.abs(q.nodes - ref_nodes)) < 1e-13
        assert np.max(np.abs(q.weights - ref_weights)) < 1e-13

    def test_polynomial_exactness(self):
        rng = np.random.default_rng(7)
        for order in range(1, 33):
            q = gauss_legendre(order)
            coeffs = rng.uniform(-2.0, 2.0, 2 * order)  # degree 2M-1
            approx = float(q.weights @ np.polynomial.polynomial.polyval(q.nodes, coeffs))
            poly = np.polynomial.Polynomial(coeffs)
            exact = poly.integ()(1.0) - poly.integ()(-1.0)
            assert approx == pytest.approx(exact, rel=1e-12, abs=1e-13)

    def test_capacity_error(self):
        with pytest.raises(CapacityError):
            gauss_legendre(1025)
        gauss_legendre(900, cap=1024)

    def test_invalid_order(self):
        with pytest.raises(ValidationError):
            gauss_legendre(0)

    def test_cache_returns_the_same_object(self):
        assert cached_quadrature(12) is cached_quadrature(12)


class TestIntegrate:
    def test_constant(self):
        assert integrate(gauss_legendre(4), lambda s: np.ones_like(s), 3.0) \
            == pytest.approx(3.0, abs=1e-14)

    @pytest.mark.parametrize("order", [1, 2, 9])
    def test_linear_exact_at_any_order(self, order):
        assert integrate(gauss_legendre(order), lambda s: s, 2.0) \
            == pytest.approx(2.0, abs=1e-14)

    def test_zero_interval(self):
        assert integrate(gauss_legendre(4), lambda s: 1.0 / s, 0.0) == 0.0

    def test_negative_interval_rejected(self):
        with pytest.raises(DomainError):
            integrate(gauss_legendre(4), lambda s: s, -1.0)

    def test_vectorized_integrand(self):
        # (npoints, order)-shaped integrands integrate point-wise
        q = gauss_legendre(6)
        scale = np.array([[1.0], [2.0], [3.0]])
        out = integrate(q, lambda s: scale * s, 2.0)
        assert out == pytest.approx([2.0, 4.0, 6.0], abs=1e-13)

    def test_non_finite_result_surfaces(self):
        with pytest.raises(NumericsError):
            integrate(gauss_legendre(4), lambda s: 1.0 / (s - s[1]), 1.0)

    def test_reference_self_convergence(self, material):
        # the active-segment integrand at the Example-1 centre point
        from pbfheat.core import Segment
        from pbfheat.solver import flux_term
        seg = Segment(0.0, 0.01, 0.0, 0.0, 0.01, 0.0, 100.0, 1e-4, 1.0)
        point = (0.005, 0.0, 0.0)
        hi = flux_term(seg, material, point, 0.01, cached_quadrature(800))
        lo = flux_term(seg, material, point, 0.01, cached_quadrature(400))
        assert abs(hi - lo) / hi < 1e-12


class TestQuadratureType:
    def test_fields(self):
        q = gauss_legendre(3)
        assert isinstance(q, Quadrature)
        assert q.order == 3
        assert q.nodes.shape == q.weights.shape == (3,)
