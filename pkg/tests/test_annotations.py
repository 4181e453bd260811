"""Data-model tests: keypoints, run-length masks, JSONL round-trips."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cowbarcode.annotations import (
    BILATERAL_PAIRS,
    LANDMARK_NAMES,
    SPINE_NAMES,
    AnnotationStream,
    FrameAnnotation,
    KeypointSet,
    MaskRaster,
    load_stream,
    parse_annotation_line,
    save_stream,
    serialize_annotation,
)
from cowbarcode.errors import ParseError, StreamOrderError, ValidationError

from support import simple_keypoints, small_annotation


def test_landmark_names_pinned():
    assert LANDMARK_NAMES == (
        "poll", "withers", "spine_mid", "tail_head",
        "left_shoulder", "right_shoulder",
        "left_flank", "right_flank",
        "left_hip", "right_hip",
    )
    assert SPINE_NAMES == LANDMARK_NAMES[:4]
    assert len(BILATERAL_PAIRS) == 3


class TestKeypointSet:
    def test_shape_validation(self):
        with pytest.raises(ValidationError, match="10 entries"):
            KeypointSet(np.zeros((9, 2)), np.ones(10))
        with pytest.raises(ValidationError, match="10 confidences"):
            KeypointSet(np.zeros((10, 2)), np.ones(9))

    def test_rejects_non_finite_coordinates(self):
        xy = np.zeros((10, 2))
        xy[3, 0] = np.nan
        with pytest.raises(ValidationError, match="finite"):
            KeypointSet(xy, np.ones(10))

    def test_rejects_conf_outside_unit_interval(self):
        conf = np.ones(10)
        conf[0] = 1.5
        with pytest.raises(ValidationError, match="conf"):
            KeypointSet(np.zeros((10, 2)), conf)

    def test_arrays_are_read_only(self):
        k = simple_keypoints()
        with pytest.raises(ValueError):
            k.xy[0, 0] = 99.0

    def test_entries_round_trip(self):
        k = simple_keypoints(conf=0.75)
        assert KeypointSet.from_entries(k.to_entries()) == k

    def test_from_entries_rejects_unknown_name(self):
        entries = simple_keypoints().to_entries()
        entries[0]["name"] = "nose"
        with pytest.raises(ValidationError, match="unknown landmark"):
            KeypointSet.from_entries(entries)

    def test_from_entries_rejects_duplicate_name(self):
        entries = simple_keypoints().to_entries()
        entries[1]["name"] = entries[0]["name"]
        with pytest.raises(ValidationError, match="duplicate"):
            KeypointSet.from_entries(entries)

    def test_from_entries_rejects_missing_coordinate(self):
        entries = simple_keypoints().to_entries()
        del entries[2]["y"]
        with pytest.raises(ParseError, match="bad or missing"):
            KeypointSet.from_entries(entries)

    def test_point_and_index_agree(self):
        k = simple_keypoints()
        for i, name in enumerate(LANDMARK_NAMES):
            assert k.index(name) == i
            assert np.array_equal(k.point(name), k.xy[i])

    def test_replace_substitutes_only_named_fields(self):
        k = simple_keypoints()
        k2 = k.replace(coords={"poll": (1.0, 2.0)}, conf={"tail_head": 0.25})
        assert tuple(k2.point("poll")) == (1.0, 2.0)
        assert k2.conf[k2.index("tail_head")] == 0.25
        assert np.array_equal(k2.xy[1:], k.xy[1:])
        assert k != k2


def _walk_runs(width: int, height: int, runs) -> list[list[bool]]:
    # Reference decoder: expand runs column-major one pixel at a time.
    flat: list[bool] = []
    fg = False
    for r in runs:
        flat.extend([fg] * r)
        fg = not fg
    return [[flat[c * height + r] for c in range(width)] for r in range(height)]


class TestMaskRaster:
    def test_column_major_hand_example(self):
        # Columns read top to bottom: [1,0], [0,1], [1,1].
        arr = np.array([[1, 0, 1],
                        [0, 1, 1]], dtype=bool)
        m = MaskRaster.from_array(arr)
        assert m.runs == (0, 1, 2, 3)
        assert np.array_equal(m.decode(), arr)

    def test_run_sum_must_match_dimensions(self):
        with pytest.raises(ValidationError, match="run-length mismatch"):
            MaskRaster(width=2, height=2, runs=(1, 2))

    def test_rejects_negative_runs(self):
        with pytest.raises(ValidationError, match="non-negative"):
            MaskRaster(width=2, height=2, runs=(5, -1))

    def test_rejects_non_integer_runs(self):
        with pytest.raises(ValidationError, match="integers"):
            MaskRaster(width=2, height=2, runs=(2.0, 2.0))

    def test_empty_mask(self):
        m = MaskRaster(width=3, height=2, runs=(6,))
        assert m.foreground_count() == 0
        assert m.bbox() is None

    def test_full_mask(self):
        m = MaskRaster.from_array(np.ones((4, 5), dtype=bool))
        assert m.runs == (0, 20)
        assert m.foreground_count() == 20
        assert m.bbox() == (0, 0, 3, 4)

    def test_bbox_inclusive_bounds(self):
        arr = np.zeros((6, 7), dtype=bool)
        arr[2:5, 3:6] = True
        assert MaskRaster.from_array(arr).bbox() == (2, 3, 4, 5)

    def test_foreground_count_matches_array(self):
        rng = np.random.default_rng(7)
        arr = rng.random((9, 11)) < 0.4
        assert MaskRaster.from_array(arr).foreground_count() == int(arr.sum())

    @given(st.data())
    def test_round_trip_small_random(self, data):
        h = data.draw(st.integers(1, 16))
        w = data.draw(st.integers(1, 16))
        bits = data.draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
        arr = np.array(bits, dtype=bool).reshape(h, w)
        m = MaskRaster.from_array(arr)
        assert np.array_equal(m.decode(), arr)
        assert _walk_runs(w, h, m.runs) == arr.tolist()

    def test_round_trip_up_to_128(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            h = int(rng.integers(1, 129))
            w = int(rng.integers(1, 129))
            arr = rng.random((h, w)) < rng.random()
            m = MaskRaster.from_array(arr)
            assert np.array_equal(m.decode(), arr)
        # one oracle pass at the top of the size range
        arr = rng.random((128, 128)) < 0.5
        m = MaskRaster.from_array(arr)
        assert _walk_runs(128, 128, m.runs) == arr.tolist()


class TestFrameAnnotation:
    def test_rejects_negative_frame_index(self):
        with pytest.raises(ValidationError, match="frame"):
            small_annotation(frame_index=-1)

    def test_rejects_negative_or_non_finite_time(self):
        with pytest.raises(ValidationError, match="t:"):
            small_annotation(time_s=-0.1)
        with pytest.raises(ValidationError, match="t:"):
            small_annotation(time_s=float("nan"))


class TestAnnotationStream:
    def test_frame_indices_must_increase(self):
        frames = [small_annotation(0, 0.0), small_annotation(0, 0.5)]
        with pytest.raises(StreamOrderError, match="frame index"):
            AnnotationStream(frames=frames)

    def test_times_must_increase(self):
        frames = [small_annotation(0, 1.0), small_annotation(1, 1.0)]
        with pytest.raises(StreamOrderError, match="time"):
            AnnotationStream(frames=frames)

    def test_gaps_in_frame_indices_are_allowed(self):
        frames = [small_annotation(0, 0.0), small_annotation(60, 2.0)]
        stream = AnnotationStream(frames=frames, fps=30.0)
        assert len(stream) == 2
        assert [f.frame_index for f in stream] == [0, 60]


class TestSerialization:
    def test_round_trip_identity(self):
        f = small_annotation(3, 0.1, "frames/f000003.png")
        g = parse_annotation_line(serialize_annotation(f))
        assert g.frame_index == f.frame_index
        assert g.time_s == f.time_s
        assert g.image_ref == f.image_ref
        assert g.mask == f.mask
        assert g.keypoints == f.keypoints

    def test_reserialization_is_stable(self):
        line = serialize_annotation(small_annotation())
        assert serialize_annotation(parse_annotation_line(line)) == line

    @given(frame=st.integers(0, 10 ** 6),
           t=st.floats(0, 10 ** 4, allow_nan=False),
           conf=st.floats(0, 1, allow_nan=False))
    def test_round_trip_random_fields(self, frame, t, conf):
        f = FrameAnnotation(
            frame_index=frame, time_s=t, image_ref="x/y.png",
            mask=MaskRaster(width=2, height=2, runs=(1, 3)),
            keypoints=simple_keypoints(conf=conf),
        )
        g = parse_annotation_line(serialize_annotation(f))
        assert g.time_s == f.time_s
        assert np.array_equal(g.keypoints.conf, f.keypoints.conf)

    def test_invalid_json_reports_parse_error(self):
        with pytest.raises(ParseError, match="invalid JSON"):
            parse_annotation_line("{not json")

    def test_non_object_record_rejected(self):
        with pytest.raises(ParseError, match="expected a JSON object"):
            parse_annotation_line("[1,2,3]")

    @pytest.mark.parametrize("field", ["frame", "t", "image", "width", "height",
                                       "mask_rle", "keypoints"])
    def test_missing_field_named_in_error(self, field):
        rec = json.loads(serialize_annotation(small_annotation()))
        del rec[field]
        with pytest.raises(ParseError, match=field):
            parse_annotation_line(json.dumps(rec))

    def test_bool_is_not_an_int(self):
        rec = json.loads(serialize_annotation(small_annotation()))
        rec["frame"] = True
        with pytest.raises(ParseError, match="frame"):
            parse_annotation_line(json.dumps(rec))

    def test_wrong_keypoint_count_rejected(self):
        rec = json.loads(serialize_annotation(small_annotation()))
        rec["keypoints"] = rec["keypoints"][:9]
        with pytest.raises(ValidationError, match="expected 10, got 9"):
            parse_annotation_line(json.dumps(rec))

    def test_mask_rle_must_hold_integers(self):
        rec = json.loads(serialize_annotation(small_annotation()))
        rec["mask_rle"] = [1, "x"]
        with pytest.raises(ParseError, match="mask_rle"):
            parse_annotation_line(json.dumps(rec))


class TestStreamFiles:
    def test_save_load_round_trip(self, tmp_path):
        frames = [small_annotation(i, i / 30.0, f"frames/f{i:06d}.png")
                  for i in range(5)]
        stream = AnnotationStream(frames=frames, fps=30.0)
        path = tmp_path / "stream.jsonl"
        save_stream(stream, path)
        loaded = load_stream(path, fps=30.0)
        assert len(loaded) == 5
        for a, b in zip(stream, loaded):
            assert serialize_annotation(a) == serialize_annotation(b)

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "stream.jsonl"
        line = serialize_annotation(small_annotation())
        path.write_text(line + "\n\n \n")
        assert len(load_stream(path)) == 1

    def test_bad_line_reported_by_number(self, tmp_path):
        path = tmp_path / "stream.jsonl"
        good = serialize_annotation(small_annotation())
        path.write_text(good + "\n{broken\n")
        with pytest.raises(ParseError, match="line 2"):
            load_stream(path)

    def test_out_of_order_frames_reported_by_number(self, tmp_path):
        path = tmp_path / "stream.jsonl"
        a = serialize_annotation(small_annotation(5, 1.0))
        b = serialize_annotation(small_annotation(4, 2.0))
        path.write_text(a + "\n" + b + "\n")
        with pytest.raises(StreamOrderError, match="line 2"):
            load_stream(path)
