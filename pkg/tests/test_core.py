import math

import numpy as np
import pytest

from pbfheat.core import (
    BeamPath,
    FieldGrid,
    MaterialParams,
    Segment,
    contribution_frame,
    flux_frame,
    load_material,
    load_path,
    melt_segment_count,
    temperature_scale,
)
from pbfheat.errors import DomainError, PathParseError, ValidationError

from conftest import KAPPA

EX1_PATH = "pbfpath 1\nmelt 0 0 10 0 100 0.1 1000\n"
MAT_TEXT = "pbfmat 1\n1000 2367.003964731641 20 1000\n"


def example_segment():
    return Segment(t_i=0.0, t_f=0.01, x_i=0.0, y_i=0.0, x_f=0.01, y_f=0.0,
                   P=100.0, sigma=1e-4, v=1.0)


class TestMaterialParams:
    def test_kappa_is_derived(self, material):
        assert material.kappa == pytest.approx(KAPPA, rel=1e-15)
        assert material.kappa == material.lam / (material.rho * material.cp)

    @pytest.mark.parametrize("kwargs", [
        dict(rho=-1.0, cp=500.0, lam=20.0),
        dict(rho=1000.0, cp=0.0, lam=20.0),
        dict(rho=1000.0, cp=500.0, lam=-3.0),
    ])
    def test_rejects_nonpositive(self, kwargs):
        with pytest.raises(ValidationError):
            MaterialParams(**kwargs)


class TestSegment:
    def test_direction_and_velocity(self):
        seg = Segment(0.0, 1.0, 0.0, 0.0, 3.0, 4.0, 10.0, 1e-4, 5.0)
        assert seg.alpha == pytest.approx(math.atan2(4, 3))
        assert seg.v_x == pytest.approx(3.0)
        assert seg.v_y == pytest.approx(4.0)

    def test_stationary_beam_gets_zero_angle(self):
        seg = Segment(0.0, 1.0, 1.0, 2.0, 1.0, 2.0, 10.0, 1e-4, 0.0)
        assert seg.alpha == 0.0 and seg.v_x == 0.0 and seg.v_y == 0.0

    def test_stationary_with_displacement_rejected(self):
        with pytest.raises(ValidationError):
            Segment(0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 10.0, 1e-4, 0.0)

    def test_speed_length_consistency_enforced(self):
        with pytest.raises(ValidationError):
            Segment(0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 10.0, 1e-4, 1.0)

    @pytest.mark.parametrize("field,value", [("t_f", 0.0), ("sigma", 0.0), ("P", -1.0)])
    def test_invariants(self, field, value):
        kwargs = dict(t_i=0.0, t_f=0.01, x_i=0.0, y_i=0.0, x_f=0.01, y_f=0.0,
                      P=100.0, sigma=1e-4, v=1.0)
        kwargs[field] = value
        if field == "t_f":
            kwargs["x_f"] = 0.0
            kwargs["v"] = 0.0
        with pytest.raises(ValidationError):
            Segment(**kwargs)


class TestBeamPath:
    def test_time_continuity_required(self):
        a = example_segment()
        b = Segment(0.02, 0.03, 0.0, 0.0, 0.01, 0.0, 100.0, 1e-4, 1.0)
        with pytest.raises(ValidationError):
            BeamPath((a, b), 300.0)

    def test_spatial_jumps_allowed(self):
        a = example_segment()
        b = Segment(0.01, 0.02, 5.0, 5.0, 5.01, 5.0, 100.0, 1e-4, 1.0)
        path = BeamPath((a, b), 300.0)
        assert path.t_end == 0.02

    def test_needs_a_segment(self):
        with pytest.raises(ValidationError):
            BeamPath((), 300.0)


class TestLoaders:
    def test_material_round_trip(self):
        material, u_init = load_material(MAT_TEXT)
        assert (material.rho, material.cp, material.lam) == (1000.0, 2367.003964731641, 20.0)
        assert u_init == 1000.0

    def test_material_bad_header(self):
        with pytest.raises(PathParseError):
            load_material("pbfmat 2\n1 1 1 1\n")

    def test_single_line_duration(self, material):
        # 10 mm at 1000 mm/s -> 0.01 s
        path = load_path(EX1_PATH, material, 1000.0)
        assert len(path.segments) == 1
        assert path.segments[0].duration == pytest.approx(0.01, rel=1e-12)
        assert path.segments[0].sigma == pytest.approx(1e-4)

    def test_example2_has_fifty_melt_segments(self, material):
        from importlib import resources
        text = (resources.files("pbfheat") / "data/example2.path").read_text()
        path = load_path(text, material, 1000.0)
        assert melt_segment_count(path) == 50
        moves = [s for s in path.segments if s.P == 0.0]
        assert len(moves) == 9  # one repositioning between consecutive lines

    def test_time_continuity_exact(self, material):
        from importlib import resources
        text = (resources.files("pbfheat") / "data/example2.path").read_text()
        path = load_path(text, material, 1000.0)
        gaps = [abs(b.t_i - a.t_f) for a, b in zip(path.segments, path.segments[1:])]
        assert max(gaps) == 0.0

    def test_empty_file_rejected(self, material):
        with pytest.raises(ValidationError):
            load_path("", material)

    def test_parse_error_carries_line_number(self, material):
        with pytest.raises(PathParseError) as err:
            load_path("pbfpath 1\nmelt 0 0 10 0 100 0.1 bogus\n", material)
        assert err.value.line == 2

    def test_zero_speed_record_rejected(self, material):
        with pytest.raises(PathParseError):
            load_path("pbfpath 1\nmelt 0 0 10 0 100 0.1 0\n", material)

    def test_comments_and_blank_lines_ignored(self, material):
        text = "pbfpath 1\n# a comment\n\nmelt 0 0 10 0 100 0.1 1000  # trailing\n"
        assert len(load_path(text, material).segments) == 1


class TestFluxFrame:
    def test_temperature_scale(self, material):
        # independent arithmetic of P / (sqrt(2) pi^(3/2) lambda sigma)
        frame = flux_frame(example_segment(), material, 0.0, 0.0, 0.0, 0.005)
        assert frame.T == pytest.approx(6349.3635934240965, rel=1e-12)
        assert temperature_scale(100.0, 1e-4, 20.0) == frame.T

    def test_dimensionless_speed(self, material):
        # v sigma / (2 sqrt(2) kappa) at v = 1 m/s, sigma = 0.1 mm
        frame = flux_frame(example_segment(), material, 0.0, 0.0, 0.0, 0.005)
        assert frame.vbar_x == pytest.approx(4.1843113863929675, rel=1e-12)
        assert frame.vbar_y == 0.0
        assert frame.vbar == frame.vbar_x

    def test_zero_power_zero_scale(self, material):
        seg = Segment(0.0, 0.01, 0.0, 0.0, 0.01, 0.0, 0.0, 1e-4, 1.0)
        assert flux_frame(seg, material, 0.0, 0.0, 0.0, 0.005).T == 0.0

    def test_positions_follow_the_beam(self, material):
        seg = example_segment()
        t = 0.004
        frame = flux_frame(seg, material, seg.v * t, 0.0, 0.0, t)
        assert frame.xbar == pytest.approx(0.0, abs=1e-12)
        assert frame.convention == "flux"

    def test_domain(self, material):
        seg = example_segment()
        for t in (0.0, -1.0, 0.011):
            with pytest.raises(DomainError):
                flux_frame(seg, material, 0.0, 0.0, 0.0, t)
        flux_frame(seg, material, 0.0, 0.0, 0.0, 0.01)  # inclusive right edge


class TestContributionFrame:
    def test_segment_clock(self, material):
        # sqrt(2 kappa dt) / sigma for dt = 2.5 ms
        seg = Segment(0.0, 2.5e-3, 0.0, 0.0, 2.5e-3, 0.0, 100.0, 1e-4, 1.0)
        frame = contribution_frame(seg, material, 0.0, 0.0, 0.0, 5e-3)
        assert frame.tbar_f == pytest.approx(2.0554196651778924, rel=1e-12)

    def test_elapsed_clock_vanishes_at_the_boundary(self, material):
        seg = example_segment()
        frame = contribution_frame(seg, material, 0.0, 0.0, 0.0, 0.01 * (1 + 1e-12))
        assert 0.0 < frame.tbar < 1e-5

    def test_surface_point(self, material):
        seg = example_segment()
        frame = contribution_frame(seg, material, 0.0, 0.0, 0.0, 0.02)
        assert frame.zbar == 0.0
        assert frame.convention == "contribution"

    def test_positions_measured_from_the_end_point(self, material):
        seg = example_segment()
        frame = contribution_frame(seg, material, seg.x_f, seg.y_f, 0.0, 0.02)
        assert frame.xbar == 0.0 and frame.ybar == 0.0

    def test_domain(self, material):
        seg = example_segment()
        with pytest.raises(DomainError):
            contribution_frame(seg, material, 0.0, 0.0, 0.0, 0.01)


class TestFrameProperties:
    def test_power_scaling_only_scales_temperature(self, material):
        rng = np.random.default_rng(42)
        for _ in range(100):
            v = rng.uniform(0.1, 3.0)
            dur = rng.uniform(1e-4, 1e-2)
            sigma = rng.uniform(5e-5, 3e-4)
            P = rng.uniform(1.0, 500.0)
            seg = Segment(0.0, dur, 0.0, 0.0, v * dur, 0.0, P, sigma, v)
            seg2 = Segment(0.0, dur, 0.0, 0.0, v * dur, 0.0, 2 * P, sigma, v)
            t = rng.uniform(0.1, 1.0) * dur
            pt = rng.uniform(-1e-3, 1e-3, 3)
            pt[2] = -abs(pt[2])
            a = flux_frame(seg, material, *pt, t)
            b = flux_frame(seg2, material, *pt, t)
            assert b.T == 2.0 * a.T  # power of two: exact
            assert (b.xbar, b.ybar, b.zbar, b.tbar, b.vbar_x) == \
                   (a.xbar, a.ybar, a.zbar, a.tbar, a.vbar_x)

    def test_clock_continuity_across_the_frame_switch(self, material):
        seg = example_segment()
        at_end = flux_frame(seg, material, 1e-3, 2e-4, -1e-4, seg.t_f)
        just_after = contribution_frame(seg, material, 1e-3, 2e-4, -1e-4,
                                        seg.t_f * (1 + 1e-15))
        assert at_end.T == just_after.T
        assert at_end.vbar_x == just_after.vbar_x
        assert at_end.tbar == just_after.tbar_f


class TestFieldGrid:
    def test_rejects_positive_z(self):
        with pytest.raises(ValidationError):
            FieldGrid(xs=np.array([0.0]), ys=np.array([0.0]),
                      zs=np.array([0.1]), ts=np.array([1.0]))

    def test_rejects_nonpositive_times(self):
        with pytest.raises(ValidationError):
            FieldGrid(xs=np.array([0.0]), ys=np.array([0.0]),
                      zs=np.array([0.0]), ts=np.array([0.0]))

    def test_shape(self):
        g = FieldGrid(xs=np.array([0.0, 1.0]), ys=np.array([0.0]),
                      zs=np.array([-1.0, 0.0]), ts=np.array([1.0, 2.0, 3.0]))
        assert g.shape == (3, 2, 1, 2)
