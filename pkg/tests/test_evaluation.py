"""Rotated-rectangle IoU, per-sample scoring, and aggregation."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlad.datasets import GraspAnnotation, Source
from vlad.errors import EmptyRecordsError, NoAnnotationsError
from vlad.evaluation import (
    EvalConfig,
    EvalReport,
    SampleScore,
    aggregate,
    rect_iou,
    score_sample,
)
from vlad.grasping import GraspRectangle

from conftest import oracle_raster_iou


def rect(cu, cv, angle, w, h):
    return GraspRectangle(center=(cu, cv), angle=angle, width=w, height=h)


def annotated(*rects):
    return tuple(GraspAnnotation(r, Source.HUMAN) for r in rects)


rect_strategy = st.builds(
    rect,
    st.floats(-20.0, 20.0),
    st.floats(-20.0, 20.0),
    st.floats(-1.5, 1.5),
    st.floats(0.5, 30.0),
    st.floats(0.5, 30.0),
)


# --- rect_iou -----------------------------------------------------------


def test_iou_identical_is_one():
    a = rect(3.0, 4.0, 0.7, 10.0, 4.0)
    assert rect_iou(a, rect(3.0, 4.0, 0.7, 10.0, 4.0)) == 1.0


def test_iou_identical_up_to_angle_period():
    a = rect(3.0, 4.0, 0.7, 10.0, 4.0)
    b = rect(3.0, 4.0, 0.7 + math.pi, 10.0, 4.0)
    assert rect_iou(a, b) == 1.0


def test_iou_disjoint_is_zero():
    assert rect_iou(rect(0, 0, 0, 4, 2), rect(100, 100, 0.5, 4, 2)) == 0.0


def test_iou_touching_edges_is_zero():
    assert rect_iou(rect(0, 0, 0, 10, 10), rect(10, 0, 0, 10, 10)) == 0.0


def test_iou_half_overlap_strip():
    # Two 10x10 squares offset by 5: overlap 5x10 = 50, union 150.
    a = rect(5.0, 5.0, 0.0, 10.0, 10.0)
    b = rect(10.0, 5.0, 0.0, 10.0, 10.0)
    assert math.isclose(rect_iou(a, b), 1.0 / 3.0, rel_tol=0, abs_tol=1e-12)


def test_iou_rotated_square_closed_form():
    a = rect(0.0, 0.0, 0.0, 1.0, 1.0)
    b = rect(0.0, 0.0, math.pi / 4, 1.0, 1.0)
    inter = 2.0 * (math.sqrt(2.0) - 1.0)
    expected = inter / (2.0 - inter)
    assert math.isclose(rect_iou(a, b), expected, rel_tol=0, abs_tol=1e-9)


def test_iou_contained_rectangle():
    outer = rect(0.0, 0.0, 0.0, 10.0, 10.0)
    inner = rect(1.0, -1.0, 0.9, 2.0, 2.0)
    assert math.isclose(rect_iou(outer, inner), 4.0 / 100.0, abs_tol=1e-12)


def test_iou_matches_raster_oracle_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = rect(
            rng.uniform(-10, 10),
            rng.uniform(-10, 10),
            rng.uniform(-math.pi / 2, math.pi / 2),
            rng.uniform(2, 25),
            rng.uniform(2, 25),
        )
        b = rect(
            rng.uniform(-10, 10),
            rng.uniform(-10, 10),
            rng.uniform(-math.pi / 2, math.pi / 2),
            rng.uniform(2, 25),
            rng.uniform(2, 25),
        )
        exact = rect_iou(a, b)
        approx = oracle_raster_iou(a, b, grid=512)
        assert abs(exact - approx) < 1e-3


@settings(max_examples=150, deadline=None)
@given(rect_strategy, rect_strategy)
def test_iou_symmetric_and_bounded(a, b):
    ab = rect_iou(a, b)
    assert ab == rect_iou(b, a)
    assert 0.0 <= ab <= 1.0


@settings(max_examples=100, deadline=None)
@given(rect_strategy)
def test_iou_self_is_one(a):
    assert rect_iou(a, a) == 1.0


def test_iou_near_identical_below_one():
    a = rect(0.0, 0.0, 0.0, 10.0, 4.0)
    b = rect(0.05, 0.0, 0.0, 10.0, 4.0)
    assert rect_iou(a, b) < 1.0


# --- score_sample -------------------------------------------------------


def test_score_exact_match_succeeds():
    cfg = EvalConfig()
    target = rect(10.0, 10.0, 0.4, 8.0, 3.0)
    annotations = annotated(rect(0, 0, 0, 2, 1), target)
    score = score_sample(target, annotations, cfg, sample_id="s1")
    assert score.success
    assert score.best_iou == 1.0
    assert score.matched_annotation_id == 1
    assert score.id == "s1"


def test_score_angle_criterion_toggles_success():
    # Same-center squares rotated 60 deg apart: IoU well above 0.25 but
    # angle difference beyond the 30 deg default.
    predicted = rect(0.0, 0.0, math.radians(60.0), 10.0, 10.0)
    annotations = annotated(rect(0.0, 0.0, 0.0, 10.0, 10.0))
    with_angle = score_sample(predicted, annotations, EvalConfig())
    assert not with_angle.success
    assert with_angle.best_iou == 0.0  # filtered before IoU
    iou_only = score_sample(predicted, annotations, EvalConfig(angle_threshold=None))
    assert iou_only.success
    assert iou_only.best_iou > 0.6


def test_score_none_prediction_is_failure():
    score = score_sample(None, annotated(rect(0, 0, 0, 2, 1)), EvalConfig(), cd=0.5)
    assert not score.success
    assert score.best_iou == 0.0
    assert score.matched_annotation_id is None
    assert score.cd == 0.5


def test_score_below_threshold_reports_best_iou():
    predicted = rect(0.0, 0.0, 0.0, 10.0, 10.0)
    annotations = annotated(rect(9.0, 0.0, 0.0, 10.0, 10.0))
    score = score_sample(predicted, annotations, EvalConfig(iou_threshold=0.25))
    assert not score.success
    assert 0.0 < score.best_iou < 0.25
    assert score.matched_annotation_id is None


def test_score_requires_annotations():
    with pytest.raises(NoAnnotationsError):
        score_sample(rect(0, 0, 0, 2, 1), (), EvalConfig())


def test_score_accepts_bare_rectangles():
    predicted = rect(0.0, 0.0, 0.0, 4.0, 4.0)
    score = score_sample(predicted, [rect(0.0, 0.0, 0.0, 4.0, 4.0)], EvalConfig())
    assert score.success


def test_score_monotone_in_iou_threshold():
    rng = np.random.default_rng(5)
    for _ in range(50):
        predicted = rect(
            rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1.5, 1.5), 8.0, 4.0
        )
        annotations = annotated(
            *(
                rect(
                    rng.uniform(-5, 5),
                    rng.uniform(-5, 5),
                    rng.uniform(-1.5, 1.5),
                    rng.uniform(2, 12),
                    rng.uniform(1, 6),
                )
                for _ in range(5)
            )
        )
        tight = score_sample(predicted, annotations, EvalConfig(iou_threshold=0.4))
        loose = score_sample(predicted, annotations, EvalConfig(iou_threshold=0.1))
        if tight.success:
            assert loose.success


def test_score_matches_brute_force_oracle():
    from vlad.grasping import angle_difference

    rng = np.random.default_rng(23)
    cfg = EvalConfig()
    for _ in range(20):
        predicted = rect(
            rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1.5, 1.5), 9.0, 4.0
        )
        annotations = annotated(
            *(
                rect(
                    rng.uniform(-6, 6),
                    rng.uniform(-6, 6),
                    rng.uniform(-1.5, 1.5),
                    rng.uniform(2, 14),
                    rng.uniform(1, 7),
                )
                for _ in range(100)
            )
        )
        expected = False
        for annotation in annotations:
            ann_rect = annotation.rectangle
            if angle_difference(predicted.angle, ann_rect.angle) > cfg.angle_threshold:
                continue
            if rect_iou(predicted, ann_rect) >= cfg.iou_threshold:
                expected = True
                break
        assert score_sample(predicted, annotations, cfg).success == expected


# --- aggregate ----------------------------------------------------------


def make_score(i, success, cd=None, uhd=None):
    return SampleScore(
        id=f"s{i}",
        best_iou=1.0 if success else 0.0,
        matched_annotation_id=0 if success else None,
        success=success,
        cd=cd,
        uhd=uhd,
    )


def test_aggregate_all_successes():
    report = aggregate([make_score(i, True) for i in range(5)])
    assert report.success_rate == 100.0
    assert report.success_rate_std == 0.0


def test_aggregate_half_success():
    report = aggregate([make_score(0, True), make_score(1, False)])
    assert report.success_rate == 50.0
    assert report.success_rate_std == 50.0


def test_aggregate_64_of_70():
    report = aggregate(
        [make_score(i, i < 64) for i in range(70)]
    )
    assert round(report.success_rate, 2) == 91.43
    p = 64 / 70
    assert math.isclose(
        report.success_rate_std, 100.0 * math.sqrt(p * (1 - p)), rel_tol=1e-12
    )
    assert round(report.success_rate_std, 1) == 28.0


def test_aggregate_metric_means_skip_missing():
    report = aggregate(
        [
            make_score(0, True, cd=0.002, uhd=0.04),
            make_score(1, False),
            make_score(2, True, cd=0.004, uhd=0.08),
        ]
    )
    assert math.isclose(report.mean_cd, 0.003)
    assert math.isclose(report.mean_uhd, 0.06)


def test_aggregate_no_metrics_is_none():
    report = aggregate([make_score(0, True)])
    assert report.mean_cd is None
    assert report.mean_uhd is None


def test_aggregate_empty_raises():
    with pytest.raises(EmptyRecordsError):
        aggregate([])


def test_report_json_round_trip(tmp_path):
    report = aggregate([make_score(0, True, cd=0.002), make_score(1, False)])
    path = tmp_path / "report.json"
    report.save_json(path)
    data = json.loads(path.read_text())
    assert data["samples"] == 2
    assert data["success_rate"] == 50.0
    assert len(data["per_sample"]) == 2
    assert data["per_sample"][0]["id"] == "s0"


def test_report_table_layout():
    report = aggregate([make_score(i, i < 64) for i in range(70)])
    table = report.format_table()
    assert "success rate  91.43 +/- 27.99" in table
    assert "samples" in table
    assert "mean cd" in table


# --- EvalConfig ---------------------------------------------------------


def test_config_defaults():
    cfg = EvalConfig()
    assert cfg.iou_threshold == 0.25
    assert math.isclose(cfg.angle_threshold, math.pi / 6)
    assert cfg.delta == 0.1
    assert cfg.epsilon == 0.2


def test_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(iou_threshold=0.0)
    with pytest.raises(ValueError):
        EvalConfig(iou_threshold=1.5)
    with pytest.raises(ValueError):
        EvalConfig(angle_threshold=-0.1)
    with pytest.raises(ValueError):
        EvalConfig(delta=0.0)
    with pytest.raises(ValueError):
        EvalConfig(epsilon=1.0)
    EvalConfig(iou_threshold=1.0, angle_threshold=None)  # boundary values OK
