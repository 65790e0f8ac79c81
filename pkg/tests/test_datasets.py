"""Dataset parsing, filtering, and directory loading."""

import math

import numpy as np
import pytest

from vlad.datasets import (
    GraspAnnotation,
    Sample,
    Source,
    describe_root,
    format_cornell_rectangles,
    format_jacquard_rectangles,
    load_cornell,
    load_dataset,
    load_jacquard,
    parse_cornell_rectangles,
    parse_jacquard_rectangles,
)
from vlad.errors import MissingDirectoryError, NoSamplesError
from vlad.grasping import GraspRectangle, angle_difference
from vlad.lifting import (
    BinaryMask,
    DepthMap,
    save_depth_f32,
    save_depth_png,
    save_mask_png,
    save_rgb_png,
)

CORNELL_RECT = "0 0\n10 0\n10 4\n0 4\n"


def flat_depth(shape=(48, 64), value=0.9):
    return DepthMap(np.full(shape, value))


def write_rgb(path, shape=(48, 64)):
    save_rgb_png(np.full(shape + (3,), 127, dtype=np.uint8), path)


def cornell_sample(root, sample_id, annotation_text=CORNELL_RECT, with_mask=False):
    (root / f"{sample_id}cpos.txt").write_text(annotation_text)
    write_rgb(root / f"{sample_id}r.png")
    save_depth_png(flat_depth(), root / f"{sample_id}d.png")
    if with_mask:
        bits = np.zeros((48, 64), dtype=bool)
        bits[10:20, 10:20] = True
        save_mask_png(BinaryMask(bits), root / f"{sample_id}mask.png")


def jacquard_sample(root, sample_id, n_annotations, depth_format="png"):
    lines = "".join(
        f"{20 + i % 30};{15 + i % 20};{(i * 7) % 180};{5 + i % 9};4\n"
        for i in range(n_annotations)
    )
    (root / f"{sample_id}_grasps.txt").write_text(lines)
    write_rgb(root / f"{sample_id}_RGB.png")
    if depth_format == "png":
        save_depth_png(flat_depth(), root / f"{sample_id}_depth.png")
    else:
        save_depth_f32(flat_depth(), root / f"{sample_id}_depth.f32")


# --- Cornell parsing ----------------------------------------------------


def test_parse_cornell_axis_aligned_example():
    rects, dropped = parse_cornell_rectangles(CORNELL_RECT)
    assert dropped == 0
    (rect,) = rects
    assert rect.center == (5.0, 2.0)
    assert rect.angle == 0.0
    assert rect.width == 10.0
    assert rect.height == 4.0


def test_parse_cornell_incomplete_group_dropped():
    text = CORNELL_RECT + "1 1\n2 2\n3 3\n"  # 7 lines total
    rects, dropped = parse_cornell_rectangles(text)
    assert len(rects) == 1
    assert dropped == 1


def test_parse_cornell_nan_corner_dropped():
    text = "0 0\nNaN 0\n10 4\n0 4\n" + CORNELL_RECT
    rects, dropped = parse_cornell_rectangles(text)
    assert len(rects) == 1
    assert dropped == 1


def test_parse_cornell_non_numeric_dropped():
    text = "0 0\nfoo bar\n10 4\n0 4\n"
    rects, dropped = parse_cornell_rectangles(text)
    assert rects == []
    assert dropped == 1


def test_parse_cornell_degenerate_dropped():
    text = "3 3\n3 3\n3 3\n3 3\n"
    rects, dropped = parse_cornell_rectangles(text)
    assert rects == []
    assert dropped == 1


def test_cornell_round_trip():
    rects = [
        GraspRectangle(center=(31.25, 17.5), angle=0.4, width=12.0, height=5.5),
        GraspRectangle(center=(8.0, 40.0), angle=-1.2, width=3.25, height=2.0),
    ]
    parsed, dropped = parse_cornell_rectangles(format_cornell_rectangles(rects))
    assert dropped == 0
    for original, back in zip(rects, parsed):
        assert np.allclose(back.center, original.center, atol=1e-9)
        assert angle_difference(back.angle, original.angle) < 1e-9
        assert math.isclose(back.width, original.width)
        assert math.isclose(back.height, original.height)


# --- Jacquard parsing ---------------------------------------------------


def test_parse_jacquard_example_line():
    rects, dropped = parse_jacquard_rectangles("50;60;45;20;10\n")
    assert dropped == 0
    (rect,) = rects
    assert rect.center == (50.0, 60.0)
    assert math.isclose(rect.angle, math.pi / 4)
    assert rect.width == 20.0
    assert rect.height == 10.0


def test_parse_jacquard_angle_normalized():
    (rect,), _ = parse_jacquard_rectangles("0;0;135;4;2\n")
    assert math.isclose(rect.angle, -math.pi / 4)


def test_parse_jacquard_malformed_lines_dropped():
    rects, dropped = parse_jacquard_rectangles("1;2;3;4\n1;2;3;4;x\n5;6;0;2;1\n\n")
    assert len(rects) == 1
    assert dropped == 2


def test_jacquard_round_trip():
    rects = [
        GraspRectangle(center=(50.0, 60.0), angle=math.pi / 4, width=20.0, height=10.0),
        GraspRectangle(center=(7.5, 9.25), angle=-0.3, width=6.0, height=3.0),
    ]
    parsed, dropped = parse_jacquard_rectangles(format_jacquard_rectangles(rects))
    assert dropped == 0
    for original, back in zip(rects, parsed):
        assert np.allclose(back.center, original.center, atol=1e-9)
        assert angle_difference(back.angle, original.angle) < 1e-9
        assert math.isclose(back.width, original.width)
        assert math.isclose(back.height, original.height)


# --- Cornell loading ----------------------------------------------------


def test_load_cornell_basic(tmp_path):
    cornell_sample(tmp_path, "pcd0101", with_mask=True)
    cornell_sample(tmp_path, "pcd0100")
    samples = load_cornell(tmp_path)
    assert [s.id for s in samples] == ["pcd0100", "pcd0101"]
    first, second = samples
    assert first.object_mask is None
    assert second.object_mask is not None
    assert first.depth.values.shape == (48, 64)
    assert all(a.source is Source.HUMAN for a in first.annotations)
    assert first.load_rgb().shape == (48, 64, 3)


def test_load_cornell_excludes_empty_annotation_file(tmp_path):
    cornell_sample(tmp_path, "pcd0100")
    cornell_sample(tmp_path, "pcd0200", annotation_text="")
    samples = load_cornell(tmp_path)
    assert [s.id for s in samples] == ["pcd0100"]


def test_load_cornell_excludes_missing_depth(tmp_path):
    cornell_sample(tmp_path, "pcd0100")
    (tmp_path / "pcd0300cpos.txt").write_text(CORNELL_RECT)
    write_rgb(tmp_path / "pcd0300r.png")
    samples = load_cornell(tmp_path)
    assert [s.id for s in samples] == ["pcd0100"]


def test_load_cornell_ids_filter(tmp_path):
    for sample_id in ("pcd0100", "pcd0101", "pcd0102"):
        cornell_sample(tmp_path, sample_id)
    samples = load_cornell(tmp_path, ids=["pcd0102", "pcd0100"])
    assert [s.id for s in samples] == ["pcd0100", "pcd0102"]


def test_load_cornell_missing_root():
    with pytest.raises(MissingDirectoryError):
        load_cornell("/no/such/dir")


def test_load_cornell_empty_root(tmp_path):
    with pytest.raises(NoSamplesError):
        load_cornell(tmp_path)


# --- Jacquard loading ---------------------------------------------------


def test_load_jacquard_annotation_floor_is_inclusive(tmp_path):
    jacquard_sample(tmp_path, "a_0", n_annotations=99)
    jacquard_sample(tmp_path, "b_1", n_annotations=100)
    samples = load_jacquard(tmp_path, min_annotations=100)
    assert [s.id for s in samples] == ["b_1"]
    assert len(samples[0].annotations) == 100
    assert all(a.source is Source.SIMULATED for a in samples[0].annotations)


def test_load_jacquard_all_below_threshold(tmp_path):
    jacquard_sample(tmp_path, "a_0", n_annotations=5)
    with pytest.raises(NoSamplesError):
        load_jacquard(tmp_path, min_annotations=100)


def test_load_jacquard_f32_depth_fallback(tmp_path):
    jacquard_sample(tmp_path, "a_0", n_annotations=3, depth_format="f32")
    samples = load_jacquard(tmp_path, min_annotations=3)
    assert samples[0].depth.values.shape == (48, 64)


def test_load_jacquard_threshold_validation(tmp_path):
    jacquard_sample(tmp_path, "a_0", n_annotations=3)
    with pytest.raises(ValueError):
        load_jacquard(tmp_path, min_annotations=0)


def test_load_dataset_dispatch(tmp_path):
    cornell_sample(tmp_path, "pcd0100")
    samples = load_dataset("cornell", tmp_path)
    assert len(samples) == 1
    with pytest.raises(ValueError):
        load_dataset("unknown", tmp_path)


# --- Sample invariants ---------------------------------------------------


def test_sample_requires_annotations(tmp_path):
    with pytest.raises(ValueError):
        Sample(
            id="x",
            rgb_path=tmp_path / "x.png",
            depth=flat_depth(),
            object_mask=None,
            annotations=(),
        )


def test_sample_rejects_mismatched_mask(tmp_path):
    rect = GraspRectangle(center=(5.0, 2.0), angle=0.0, width=10.0, height=4.0)
    with pytest.raises(ValueError):
        Sample(
            id="x",
            rgb_path=tmp_path / "x.png",
            depth=flat_depth(shape=(48, 64)),
            object_mask=BinaryMask(np.zeros((10, 10), dtype=bool)),
            annotations=(GraspAnnotation(rect, Source.HUMAN),),
        )


# --- describe_root -------------------------------------------------------


def test_describe_cornell_root(tmp_path):
    cornell_sample(tmp_path, "pcd0100", annotation_text=CORNELL_RECT * 3)
    cornell_sample(tmp_path, "pcd0200", annotation_text="")
    summary = describe_root(tmp_path)
    assert summary.kind == "cornell"
    assert summary.sample_count == 1
    assert summary.annotation_count == 3
    assert summary.excluded == 1


def test_describe_jacquard_root(tmp_path):
    jacquard_sample(tmp_path, "a_0", n_annotations=4)
    jacquard_sample(tmp_path, "b_1", n_annotations=2)
    summary = describe_root(tmp_path, min_annotations=3)
    assert summary.kind == "jacquard"
    assert summary.sample_count == 1
    assert summary.annotation_count == 4
    assert summary.excluded == 1


def test_describe_empty_root(tmp_path):
    with pytest.raises(NoSamplesError):
        describe_root(tmp_path)
