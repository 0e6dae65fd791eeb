import numpy as np
import pytest

from pbfheat.errors import LutBuildError, LutFormatError, ValidationError
from pbfheat.quadrature import (
    FAMILY_CONTRIBUTION,
    FAMILY_FLUX,
    ProbeSpec,
    QuadratureLUT,
    audit_lut,
    build_lut,
    cached_quadrature,
    default_grids,
    default_order_schedule,
    load_lut,
    lookup,
    node_tables,
    save_lut,
    _probe_integrals,
)

SMALL_FLUX = (np.logspace(-2, 2, 6), np.linspace(0.0, 50.0, 5))
SMALL_CONTRIB = (np.logspace(-2, 2, 5), np.logspace(-2, 2, 3), np.linspace(0.0, 50.0, 3))


@pytest.fixture(scope="module")
def small_flux_lut():
    return build_lut(FAMILY_FLUX, grids=SMALL_FLUX)


@pytest.fixture(scope="module")
def small_contrib_lut():
    return build_lut(FAMILY_CONTRIBUTION, grids=SMALL_CONTRIB)


class TestSchedule:
    def test_default_schedule_shape(self):
        sched = default_order_schedule()
        assert sched[0] == 2 and sched[-1] == 800
        assert list(sched[:24]) == list(range(2, 49, 2))
        assert all(b > a for a, b in zip(sched, sched[1:]))
        assert all(o % 2 == 0 for o in sched)

    def test_default_grids(self):
        t, v = default_grids(FAMILY_FLUX)
        assert t.size == 60 and v.size == 51
        assert t[0] == pytest.approx(1e-2) and t[-1] == pytest.approx(1e2)
        assert v[0] == 0.0 and v[-1] == 50.0
        t, tf, v = default_grids(FAMILY_CONTRIBUTION)
        assert tf.size == 30


class TestBuild:
    def test_short_smooth_integral_needs_low_order(self):
        lut = build_lut(FAMILY_FLUX, grids=(np.array([0.01]), np.array([0.0])))
        assert int(lut.orders[0, 0]) <= 10

    def test_orders_grow_with_speed(self, small_flux_lut):
        orders = small_flux_lut.orders
        assert np.all(orders[:, -1] >= orders[:, 0])

    def test_contribution_orders_decay_with_elapsed_time(self, small_contrib_lut):
        orders = small_contrib_lut.orders
        assert np.all(orders[-1] <= orders[0])

    def test_weaker_tolerance_never_needs_higher_order(self):
        tight = build_lut(FAMILY_FLUX, grids=SMALL_FLUX, tol=1e-8)
        loose = build_lut(FAMILY_FLUX, grids=SMALL_FLUX, tol=1e-6)
        assert np.all(loose.orders <= tight.orders)

    def test_unreachable_tolerance_names_the_grid_point(self):
        with pytest.raises(LutBuildError, match="vbar=50"):
            build_lut(FAMILY_FLUX, grids=(np.array([100.0]), np.array([50.0])),
                      tol=1e-12, order_schedule=(2, 4))

    def test_build_is_deterministic_across_workers(self):
        serial = build_lut(FAMILY_FLUX, grids=SMALL_FLUX, workers=1)
        parallel = build_lut(FAMILY_FLUX, grids=SMALL_FLUX, workers=2)
        assert serial == parallel

    def test_rejects_bad_schedule(self):
        with pytest.raises(ValidationError):
            build_lut(FAMILY_FLUX, grids=SMALL_FLUX, order_schedule=(4, 2))
        with pytest.raises(ValidationError):
            build_lut(FAMILY_FLUX, grids=SMALL_FLUX, order_schedule=(2, 4, 900))

    def test_rejects_bad_tol(self):
        with pytest.raises(ValidationError):
            build_lut(FAMILY_FLUX, grids=SMALL_FLUX, tol=0.0)


class TestAudit:
    def test_fresh_tables_are_sound(self, small_flux_lut, small_contrib_lut):
        for lut in (small_flux_lut, small_contrib_lut):
            dev, worst = audit_lut(lut)
            assert dev < lut.tol, lut.grid_point(worst)

    def test_audit_parallel_matches_serial(self, small_flux_lut):
        dev1, w1 = audit_lut(small_flux_lut, workers=1)
        dev2, w2 = audit_lut(small_flux_lut, workers=2)
        assert (dev1, w1) == (dev2, w2)


class TestLookup:
    def make_lut(self):
        axes = (np.array([1.0, 10.0, 100.0]), np.array([0.0, 10.0]))
        orders = np.array([[10, 40], [20, 60], [30, 80]], dtype=np.uint16)
        return QuadratureLUT(family=FAMILY_FLUX, axes=axes, orders=orders,
                             tol=1e-8, ref_order=800)

    def test_exact_hit_adds_the_margin(self):
        lut = self.make_lut()
        assert lookup(lut, 10.0, 0.0) == 22
        assert lookup(lut, 100.0, 10.0) == 82

    def test_nearest_in_log_space_for_time(self):
        lut = self.make_lut()
        assert lookup(lut, 2.0, 0.0) == 12     # closer to 1 than 10 in log space
        assert lookup(lut, 5.0, 0.0) == 22     # closer to 10

    def test_midpoint_takes_the_larger_order(self):
        lut = self.make_lut()
        assert lookup(lut, 10.0, 5.0) == 62    # exact linear midpoint on vbar

    def test_out_of_range_clamps_and_warns(self):
        lut = self.make_lut()
        with pytest.warns(RuntimeWarning):
            assert lookup(lut, 1000.0, 0.0) == 32
        with pytest.warns(RuntimeWarning):
            assert lookup(lut, 1.0, -1.0) == 12

    def test_force_ref(self):
        assert lookup(self.make_lut(), 1.0, 0.0, force_ref=True) == 800

    def test_margin_capped_at_the_reference_order(self):
        axes = (np.array([1.0, 2.0]), np.array([0.0, 1.0]))
        orders = np.full((2, 2), 800, dtype=np.uint16)
        lut = QuadratureLUT(FAMILY_FLUX, axes, orders, 1e-8, 800)
        assert lookup(lut, 1.0, 0.0) == 800

    def test_contribution_family_needs_tbar_f(self, small_contrib_lut):
        with pytest.raises(ValidationError):
            lookup(small_contrib_lut, 1.0, 0.0)
        lookup(small_contrib_lut, 1.0, 0.0, tbar_f=1.0)

    def test_flux_family_rejects_tbar_f(self, small_flux_lut):
        with pytest.raises(ValidationError):
            lookup(small_flux_lut, 1.0, 0.0, tbar_f=1.0)


class TestPersistence:
    def test_round_trip_bit_exact(self, small_flux_lut, small_contrib_lut):
        for lut in (small_flux_lut, small_contrib_lut):
            data = save_lut(lut)
            assert load_lut(data) == lut
            assert save_lut(load_lut(data)) == data

    def test_bad_magic(self, small_flux_lut):
        data = bytearray(save_lut(small_flux_lut))
        data[0] ^= 0xFF
        with pytest.raises(LutFormatError, match="magic"):
            load_lut(bytes(data))

    def test_corruption_detected(self, small_flux_lut):
        data = bytearray(save_lut(small_flux_lut))
        data[len(data) // 2] ^= 0x01
        with pytest.raises(LutFormatError, match="checksum"):
            load_lut(bytes(data))

    def test_truncation_detected(self, small_flux_lut):
        data = save_lut(small_flux_lut)
        with pytest.raises(LutFormatError):
            load_lut(data[: len(data) - 7])

    def test_empty_stream(self):
        with pytest.raises(LutFormatError):
            load_lut(b"")


class TestProbeEvaluation:
    def test_factorized_probe_matches_direct_kernel_sum(self, material):
        # same integral evaluated through the tensor factorization and the
        # plain per-point kernel; both use identical nodes
        from pbfheat.solver import flux_integrand
        from pbfheat.core import DimensionlessFrame
        order, tbar, vbar = 48, 1.7, 12.0
        probes = ProbeSpec().positions(vbar, tbar)
        tens = _probe_integrals(FAMILY_FLUX, (tbar,), vbar, order, probes)
        q = cached_quadrature(order)
        s = 0.5 * tbar * (q.nodes + 1.0)
        xb, yb, zb = probes
        rng = np.random.default_rng(3)
        for _ in range(20):
            i, j, k = (rng.integers(0, n) for n in (xb.size, yb.size, zb.size))
            frame = DimensionlessFrame(T=1.0, vbar_x=vbar, vbar_y=0.0,
                                       xbar=xb[i], ybar=yb[j], zbar=zb[k],
                                       tbar=tbar, tbar_f=tbar, convention="flux")
            direct = 0.5 * tbar * float(flux_integrand(frame, s) @ q.weights)
            assert tens[i, j, k] == pytest.approx(direct, rel=1e-13, abs=1e-300)

    def test_contribution_node_form_matches_r_form_value(self, material):
        # the w-substituted nodes integrate the same quantity as the r-form
        from pbfheat.core import Segment, contribution_frame
        from pbfheat.solver import contribution_integrand
        from pbfheat.quadrature import integrate
        seg = Segment(0.0, 2.5e-3, 0.0, 0.0, 2.5e-3, 0.0, 100.0, 1e-4, 1.0)
        frame = contribution_frame(seg, material, 1.1e-3, 1e-4, -5e-5, 4e-3)
        q = cached_quadrature(800)
        a2, dxy, dz, cw = node_tables(FAMILY_CONTRIBUTION, q, frame.tbar, frame.tbar_f)
        w_form = float(np.exp(
            -((frame.xbar + frame.vbar_x * a2) ** 2 + (frame.ybar + frame.vbar_y * a2) ** 2)
            / dxy - frame.zbar**2 / dz) @ cw)
        r_form = float(integrate(q, lambda r: contribution_integrand(frame, r),
                                 frame.tbar_f))
        assert w_form == pytest.approx(r_form, rel=1e-12)
