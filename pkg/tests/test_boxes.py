import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyrolens.boxes import (
    Box,
    Detection,
    Source,
    clip_to,
    detection_from_obj,
    detection_to_obj,
    dump_detections,
    iou,
    load_detections,
    nms,
    translate,
)
from oracles import brute_nms, iou_ref


def det(x, y, w, h, score=0.5, category=0):
    return Detection(Box(x, y, w, h), category, score)


boxes_st = st.builds(
    Box,
    st.integers(0, 50),
    st.integers(0, 50),
    st.integers(1, 25),
    st.integers(1, 25),
)
dets_st = st.lists(
    st.builds(
        Detection,
        boxes_st,
        st.integers(0, 2),
        st.floats(0, 1).map(lambda s: round(s, 2)),
    ),
    max_size=20,
)


class TestBoxAndDetection:
    def test_rejects_degenerate_box(self):
        with pytest.raises(ValueError):
            Box(0, 0, 0, 5)
        with pytest.raises(ValueError):
            Box(0, 0, 5, -1)

    def test_rejects_out_of_range_score(self):
        for bad in (-0.1, 1.1):
            with pytest.raises(ValueError):
                det(0, 0, 1, 1, score=bad)

    def test_rejects_negative_category(self):
        with pytest.raises(ValueError):
            det(0, 0, 1, 1, category=-1)


class TestIou:
    def test_identical(self):
        assert iou(Box(3, 4, 10, 12), Box(3, 4, 10, 12)) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 5, 5)) == 0.0

    def test_touching_edges_are_disjoint(self):
        # Half-open convention: [0,10) and [10,20) share no pixels.
        assert iou(Box(0, 0, 10, 10), Box(10, 0, 10, 10)) == 0.0

    def test_hand_computed_half_overlap(self):
        assert iou(Box(0, 0, 10, 10), Box(5, 0, 10, 10)) == pytest.approx(50 / 150, abs=1e-15)

    @given(boxes_st, boxes_st)
    def test_symmetry_and_range(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == 1.0


class TestNms:
    def test_hand_example_suppression(self):
        a = det(0, 0, 10, 10, score=0.9)
        b = det(1, 1, 10, 10, score=0.8)
        # IoU = 81/119 ~ 0.681 >= 0.5 -> b suppressed
        assert nms([a, b], 0.5) == [a]
        assert nms([b, a], 0.5) == [a]

    def test_disjoint_boxes_kept(self):
        a, b = det(0, 0, 5, 5, score=0.9), det(50, 50, 5, 5, score=0.2)
        assert nms([a, b], 0.5) == [a, b]

    def test_class_aware_keeps_other_categories(self):
        a = det(0, 0, 10, 10, score=0.9, category=0)
        b = det(0, 0, 10, 10, score=0.8, category=1)
        assert nms([a, b], 0.5, class_aware=True) == [a, b]
        assert nms([a, b], 0.5, class_aware=False) == [a]

    def test_empty_input(self):
        assert nms([], 0.5) == []

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            nms([], 1.5)

    @given(dets_st, st.floats(0, 1), st.booleans())
    @settings(max_examples=200)
    def test_matches_brute_force_oracle(self, dets, threshold, class_aware):
        assert nms(dets, threshold, class_aware) == brute_nms(dets, threshold, class_aware)

    @given(dets_st, st.floats(0, 1))
    @settings(max_examples=100)
    def test_idempotent_and_subset_and_sorted(self, dets, threshold):
        out = nms(dets, threshold)
        assert nms(out, threshold) == out
        assert all(d in dets for d in out)
        scores = [d.score for d in out]
        assert scores == sorted(scores, reverse=True)
        for i, a in enumerate(out):
            for b in out[i + 1 :]:
                if a.category == b.category:
                    assert iou(a.box, b.box) < threshold or threshold == 0

    @given(dets_st, st.randoms(use_true_random=False))
    @settings(max_examples=100)
    def test_permutation_invariance(self, dets, rnd):
        shuffled = list(dets)
        rnd.shuffle(shuffled)
        assert nms(shuffled, 0.5) == nms(dets, 0.5)


class TestTransforms:
    def test_translate_identity_and_shift(self):
        d = det(5, 5, 10, 10, score=0.7, category=2)
        assert translate(d, 0, 0) == d
        moved = translate(d, 512, 80)
        assert (moved.box.x, moved.box.y, moved.box.w, moved.box.h) == (517, 85, 10, 10)
        assert moved.score == d.score and moved.category == d.category

    def test_translate_inverse(self):
        d = det(3, 9, 4, 4)
        assert translate(translate(d, 11, -7), -11, 7) == d

    def test_clip_inside_unchanged(self):
        d = det(10, 10, 5, 5)
        assert clip_to(d, 100, 100) == d

    def test_clip_partial(self):
        d = det(-5, -5, 10, 10)
        clipped = clip_to(d, 100, 100)
        assert (clipped.box.x, clipped.box.y, clipped.box.w, clipped.box.h) == (0, 0, 5, 5)

    def test_clip_disjoint_returns_none(self):
        assert clip_to(det(200, 200, 10, 10), 100, 100) is None

    def test_clip_validates_region(self):
        with pytest.raises(ValueError):
            clip_to(det(0, 0, 1, 1), 0, 10)


class TestSerialization:
    def test_obj_shape(self):
        d = det(1, 2, 3, 4, score=0.25, category=1)
        assert detection_to_obj(d) == {"category": 1, "score": 0.25, "bbox": [1, 2, 3, 4]}

    def test_round_trip(self):
        dets = [det(1, 2, 3, 4, score=0.25, category=1), det(9, 9, 2, 2, score=1.0)]
        assert load_detections(dump_detections(dets)) == dets

    def test_load_rejects_non_array(self):
        with pytest.raises(ValueError):
            load_detections(json.dumps({"not": "an array"}))

    def test_from_obj_rejects_bad_bbox(self):
        with pytest.raises(ValueError):
            detection_from_obj({"category": 0, "score": 0.5, "bbox": [1, 2, 3]})

    def test_source_survives_round_trip_as_default(self):
        d = Detection(Box(0, 0, 1, 1), 0, 0.5, Source.CASCADE)
        again = load_detections(dump_detections([d]))[0]
        assert again.source is Source.DIRECT  # wire format carries no source


class TestOracleCrossCheck:
    def test_iou_matches_reference_on_random_boxes(self):
        rnd = random.Random(5)
        for _ in range(500):
            a = Box(rnd.randint(0, 40), rnd.randint(0, 40), rnd.randint(1, 30), rnd.randint(1, 30))
            b = Box(rnd.randint(0, 40), rnd.randint(0, 40), rnd.randint(1, 30), rnd.randint(1, 30))
            assert iou(a, b) == iou_ref(a, b)
