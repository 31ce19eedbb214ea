import json

import numpy as np
import pytest

import lcstrack as lt
from lcstrack.lcs_tracking import (MaterialCurve, RefineParams, advect_curve,
                                   load_curves_json, save_curves_csv,
                                   save_curves_json)
from lcstrack.seeding import SeedPoint

from conftest import duffing_energy, saddle_expm, tiny_gridded_field

TOL = 1e-8


def straight_segment(length=0.1, n=11, center=(0.0, 0.0), direction=(1.0, 0.0),
                     time=0.0):
    s = np.linspace(-0.5, 0.5, n) * length
    d = np.asarray(direction, dtype=np.float64)
    pts = np.asarray(center) + s[:, None] * d[None, :]
    return MaterialCurve(points=pts, time=time)


def origin_seed(kind):
    """Seed at the Duffing saddle with the relevant singular direction."""
    f = lt.duffing_field()
    _, DF, ok = lt.deformation_gradient_at_points(
        f, np.array([[0.0, 0.0]]), 0.0, 2.5, tol=TOL, rho=1e-4)
    assert ok[0]
    _, _, xi2, _, _, th1 = lt.svd2x2(DF[0])
    direction = xi2 if kind == "attracting" else th1
    time = 0.0 if kind == "attracting" else 2.5
    return SeedPoint(position=np.zeros(2), value=1.0, direction=direction,
                     kind=kind, time=time, index=(0, 0))


class TestAdvectCurve:
    def test_uniform_flow_translates_without_insertion(self):
        f = tiny_gridded_field(bounds=(-4, 4, -4, 4), n=17)
        curve = straight_segment()
        out = advect_curve(f, curve, 0.0, 1.0,
                           RefineParams(delta_max=0.05), tol=TOL)
        assert out.insertions == 0
        assert np.allclose(out.points, curve.points + [1.0, 0.0], atol=1e-9)
        assert out.time == 1.0

    def test_linear_saddle_stretch(self):
        f = lt.linear_saddle_field()
        curve = straight_segment()
        refine = RefineParams(delta_max=0.05, n_substeps=20)
        out = advect_curve(f, curve, 0.0, 3.0, refine, tol=TOL)
        target = 0.1 * np.e ** 3
        assert out.arc_length() == pytest.approx(target, rel=0.01)
        assert out.max_gap <= 0.05
        assert np.allclose(out.points[-1], [0.05 * np.e ** 3, 0.0], rtol=1e-6)
        assert out.insertions > 0

    def test_gap_bound_after_every_leg(self):
        f = lt.duffing_field()
        curve = straight_segment(center=(0.0, 0.0),
                                 direction=np.array([2.0, 1.0]) / np.sqrt(5))
        refine = RefineParams(delta_max=0.02, n_substeps=10)
        out = advect_curve(f, curve, 0.0, 2.5, refine, tol=TOL)
        assert out.max_gap <= refine.delta_max
        assert not out.truncated

    def test_reversibility_mild_region(self):
        f = lt.duffing_field()
        curve = straight_segment(center=(2.0, 0.0))
        refine = RefineParams(delta_max=0.05, n_substeps=10)
        fwd = advect_curve(f, curve, 0.0, 2.5, refine, tol=TOL)
        back = advect_curve(f, fwd, 2.5, 0.0, refine, tol=TOL)
        # the original endpoints are material points of the refined curve
        assert np.linalg.norm(back.points[0] - curve.points[0]) < 10 * TOL
        assert np.linalg.norm(back.points[-1] - curve.points[-1]) < 10 * TOL

    def test_insertion_budget_truncates(self):
        f = lt.linear_saddle_field()
        curve = straight_segment()
        refine = RefineParams(delta_max=1e-4, n_substeps=4, max_points=64)
        out = advect_curve(f, curve, 0.0, 3.0, refine, tol=TOL)
        assert out.truncated
        assert len(out.points) <= 64 + 32   # one refinement round of slack

    def test_domain_exit_truncates_trailing_points(self):
        f = tiny_gridded_field()   # u = (1, 0) on [-1, 1]^2
        pts = np.stack([np.linspace(-0.5, 0.8, 10), np.zeros(10)], axis=-1)
        curve = MaterialCurve(points=pts, time=0.0)
        out = advect_curve(f, curve, 0.0, 0.6,
                           RefineParams(delta_max=0.5, n_substeps=3), tol=TOL)
        assert out.truncated
        assert len(out.points) < 10
        assert np.all(out.points[:, 0] <= 1.0 + 1e-9)


class TestExtraction:
    def test_attracting_at_t1_is_seed_segment(self):
        f = lt.duffing_field()
        seed = origin_seed("attracting")
        refine = RefineParams(delta_max=0.02)
        (curve,) = lt.extract_attracting_lcs(f, [seed], 0.0, 0.0, refine,
                                             tol=TOL, segment_length=0.1)
        assert curve.arc_length() == pytest.approx(0.1, abs=1e-14)
        assert len(curve.points) == 11

    def test_attracting_tangent_to_unstable_direction(self):
        f = lt.duffing_field()
        seed = origin_seed("attracting")
        refine = RefineParams(delta_max=0.02, n_substeps=20)
        (curve,) = lt.extract_attracting_lcs(f, [seed], 0.0, 2.5, refine,
                                             tol=TOL, segment_length=0.1)
        ic = np.argmin(np.linalg.norm(curve.points, axis=1))
        tangent = curve.points[ic + 1] - curve.points[ic - 1]
        tangent /= np.linalg.norm(tangent)
        unstable = np.array([1.0, 2.0]) / np.sqrt(5.0)
        angle = np.degrees(np.arccos(np.clip(abs(tangent @ unstable), 0, 1)))
        assert angle < 0.5
        assert curve.arc_length() > 0.1   # attracting direction stretches

    def test_repelling_at_t2_is_seed_segment(self):
        f = lt.duffing_field()
        seed = origin_seed("repelling")
        refine = RefineParams(delta_max=0.02)
        (curve,) = lt.extract_repelling_lcs(f, [seed], 2.5, 2.5, refine,
                                            tol=TOL, segment_length=0.1)
        assert curve.arc_length() == pytest.approx(0.1, abs=1e-14)

    def test_repelling_recovers_stable_manifold(self):
        f = lt.duffing_field()
        seed = origin_seed("repelling")
        refine = RefineParams(delta_max=0.02, n_substeps=20)
        (curve,) = lt.extract_repelling_lcs(f, [seed], 2.5, 0.0, refine,
                                            tol=TOL, segment_length=0.1)
        # material H values come from the short t2 segment -> small
        assert np.max(np.abs(duffing_energy(curve.points))) <= 5e-3
        ic = np.argmin(np.linalg.norm(curve.points, axis=1))
        tangent = curve.points[ic + 1] - curve.points[ic - 1]
        tangent /= np.linalg.norm(tangent)
        stable = np.array([1.0, -2.0]) / np.sqrt(5.0)
        angle = np.degrees(np.arccos(np.clip(abs(tangent @ stable), 0, 1)))
        assert angle < 0.5

    def test_theta1_image_aligns_with_xi1(self):
        # backward image of the theta1 direction is the xi1 axis
        M = saddle_expm(2.5)
        _, _, _, xi1, _, th1 = lt.svd2x2(M)
        img = np.linalg.solve(M, th1)
        img /= np.linalg.norm(img)
        assert abs(img @ xi1) == pytest.approx(1.0, abs=1e-10)


class TestMaterialConsistency:
    def test_exact_on_straight_flow(self):
        # linear saddle keeps horizontal material lines straight, so the
        # two-stage and direct reconstructions coincide to integrator tol
        f = lt.linear_saddle_field()
        refine = RefineParams(delta_max=0.05, n_substeps=10)
        seg = straight_segment(time=3.0)
        mid = advect_curve(f, seg, 3.0, 1.5, refine, tol=TOL)
        two_stage = advect_curve(f, mid, 1.5, 0.0, refine, tol=TOL)
        direct = advect_curve(f, seg, 3.0, 0.0, refine, tol=TOL)
        d = lt.hausdorff_distance(two_stage.points, direct.points)
        assert d < 10 * TOL

    def test_curved_flow_bounded_by_insertion_error(self):
        # midpoint insertion bounds agreement by O(kappa delta_max^2)
        f = lt.duffing_field()
        delta = 0.01
        refine = RefineParams(delta_max=delta, n_substeps=20)
        seed = origin_seed("repelling")
        (mid,) = lt.extract_repelling_lcs(f, [seed], 2.5, 1.0, refine,
                                          tol=TOL, segment_length=0.1)
        two_stage = advect_curve(f, mid, 1.0, 0.0, refine, tol=TOL)
        (direct,) = lt.extract_repelling_lcs(f, [seed], 2.5, 0.0, refine,
                                             tol=TOL, segment_length=0.1)
        d = lt.hausdorff_distance(two_stage.points, direct.points)
        assert d < 10 * delta ** 2


class TestExports:
    def test_json_round_trip(self, tmp_path):
        f = lt.duffing_field()
        seed = origin_seed("repelling")
        refine = RefineParams(delta_max=0.05, n_substeps=5)
        curves = lt.extract_repelling_lcs(f, [seed], 2.5, 1.5, refine,
                                          tol=TOL)
        path = tmp_path / "curves.json"
        save_curves_json(curves, path)
        recs = json.loads(path.read_text())
        assert recs[0]["kind"] == "repelling"
        assert recs[0]["time"] == 1.5
        assert recs[0]["truncated"] is False
        back = load_curves_json(path)
        assert np.array_equal(back[0].points, curves[0].points)

    def test_csv_layout(self, tmp_path):
        curve = straight_segment(n=3)
        path = tmp_path / "curves.csv"
        save_curves_csv([curve], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "seed_id,kind,time,idx,x,y"
        assert len(lines) == 4
