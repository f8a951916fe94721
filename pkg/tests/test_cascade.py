import math
import random

import numpy as np
import pytest

from pyrolens.backends import BackendInfo, MockClassifier, MockDetector, MockScript, fingerprint
from pyrolens.boxes import Box, Detection, Source, clip_to, nms
from pyrolens.cascade import (
    CascadeAborted,
    CascadeConfig,
    FrameError,
    result_to_obj,
    run_frame,
    run_sequence,
)
from pyrolens.imaging import edge_enhance
from oracles import algorithm1

W, H = 96, 96


class BombClassifier:
    """Fails the test if the cascade consults the classifier at all."""

    info = BackendInfo(name="bomb", ops=("classify",))

    def classify(self, img):
        raise AssertionError("classifier must not be called")


def noise_frame(seed):
    return np.random.default_rng(seed).integers(0, 256, (H, W), dtype=np.uint8)


def frame_fixture(seed, dets, outcomes, cfg):
    """Scripted detector and classifier reproducing `dets` and per-detection
    classifier outcomes on one noise frame."""
    img = noise_frame(seed)
    det_script = MockScript(detect_by_fingerprint={fingerprint(img): list(dets)})
    cls_script = MockScript()
    keys = set()
    for det, outcome in zip(dets, outcomes):
        clipped = clip_to(det, W, H)
        if clipped is None or clipped.box.w < cfg.min_crop or clipped.box.h < cfg.min_crop:
            continue
        b = clipped.box
        crop = img[int(math.floor(b.y)) : int(math.ceil(b.y2)), int(math.floor(b.x)) : int(math.ceil(b.x2))]
        key = fingerprint(edge_enhance(crop, cfg.edge))
        keys.add(key)
        cls_script.classify_by_fingerprint[key] = outcome
    assert len(keys) == len(cls_script.classify_by_fingerprint)
    return img, MockDetector(det_script), MockClassifier(cls_script)


def grid_boxes(n, size=12):
    # Disjoint slots so NMS never merges distinct detections.
    per_row = W // (size + 4)
    assert n <= per_row * (H // (size + 4))
    out = []
    for i in range(n):
        r, c = divmod(i, per_row)
        out.append(Box(c * (size + 4) + 1, r * (size + 4) + 1, size, size))
    return out


def as_multiset(items):
    return sorted(items)


class TestThresholdBoundaries:
    @pytest.mark.parametrize("score", [0.0, 0.59, 0.6, 0.61, 1.0])
    @pytest.mark.parametrize("conf2", [0.59, 0.6, 0.61])
    def test_exhaustive_boundary_grid(self, score, conf2):
        cfg = CascadeConfig(keep_no_fire=True)
        box = grid_boxes(1)[0]
        dets = [Detection(box, 0, score)]
        img, detector, classifier = frame_fixture(1, dets, [(0, conf2)], cfg)
        result = run_frame(img, detector, classifier, cfg)
        if score > 0.6:
            assert result.counters == {"direct": 1, "cascade": 0, "discarded": 0}
            assert result.detections[0].score == score
            assert result.detections[0].source is Source.DIRECT
        elif conf2 < 0.6:
            assert result.counters == {"direct": 0, "cascade": 0, "discarded": 1}
            assert result.detections == []
        else:
            assert result.counters == {"direct": 0, "cascade": 1, "discarded": 0}
            assert result.detections[0].score == conf2
            assert result.detections[0].source is Source.CASCADE

    def test_score_floor_per_branch(self):
        cfg = CascadeConfig(keep_no_fire=True)
        rnd = random.Random(3)
        boxes = grid_boxes(6)
        dets = [Detection(b, 0, round(rnd.random(), 2)) for b in boxes]
        outcomes = [(rnd.choice([0, 1]), round(rnd.random(), 2)) for _ in boxes]
        img, detector, classifier = frame_fixture(2, dets, outcomes, cfg)
        result = run_frame(img, detector, classifier, cfg)
        for d in result.detections:
            if d.source is Source.DIRECT:
                assert d.score > cfg.tau_detect
            else:
                assert d.score >= cfg.tau_classify


class TestAlgorithmOneEquivalence:
    def run_one(self, seed, n_dets, tau_detect=0.6, tau_classify=0.6):
        rnd = random.Random(seed)
        cfg = CascadeConfig(tau_detect=tau_detect, tau_classify=tau_classify, keep_no_fire=True)
        boxes = grid_boxes(n_dets, size=rnd.choice([8, 10, 12]))
        dets = [Detection(b, rnd.choice([0, 1]), round(rnd.random(), 3)) for b in boxes]
        outcomes = [(rnd.choice([0, 1]), round(rnd.random(), 3)) for _ in boxes]
        img, detector, classifier = frame_fixture(seed, dets, outcomes, cfg)
        result = run_frame(img, detector, classifier, cfg)

        ids, out_boxes, scores = algorithm1(dets, lambda i: outcomes[i], tau_detect, tau_classify)
        expected = as_multiset(
            (c, b, s) for c, b, s in zip(ids, out_boxes, scores)
        )
        got = as_multiset(
            (d.category, (d.box.x, d.box.y, d.box.w, d.box.h), d.score) for d in result.detections
        )
        assert got == expected
        assert result.direct + result.cascade + result.discarded == len(dets)
        assert result.direct + result.cascade == len(expected)

    def test_truth_table_on_randomized_frames(self):
        for seed in range(60):
            self.run_one(seed, n_dets=seed % 7)

    def test_zero_tau_detect_bypasses_classifier(self):
        cfg = CascadeConfig(tau_detect=0.0)
        boxes = grid_boxes(4)
        rnd = random.Random(4)
        dets = [Detection(b, 0, round(rnd.uniform(0.01, 1.0), 3)) for b in boxes]
        img = noise_frame(5)
        detector = MockDetector(MockScript(detect_by_fingerprint={fingerprint(img): dets}))
        result = run_frame(img, detector, BombClassifier(), cfg)
        assert result.counters == {"direct": 4, "cascade": 0, "discarded": 0}
        assert result.detections == nms(dets, cfg.nms_iou)

    def test_tau_detect_one_with_weak_classifier_empties_frame(self):
        cfg = CascadeConfig(tau_detect=1.0)
        boxes = grid_boxes(3)
        dets = [Detection(b, 0, s) for b, s in zip(boxes, (0.2, 0.9, 1.0))]
        img = noise_frame(6)
        detector = MockDetector(MockScript(detect_by_fingerprint={fingerprint(img): dets}))
        classifier = MockClassifier(MockScript(classify_default=(0, 0.3)))
        result = run_frame(img, detector, classifier, cfg)
        assert result.detections == []
        assert result.counters == {"direct": 0, "cascade": 0, "discarded": 3}


class TestCascadeBehaviors:
    def test_degenerate_crop_discarded_without_classifier(self):
        cfg = CascadeConfig()
        img = noise_frame(7)
        tiny = Detection(Box(5, 5, 1, 1), 0, 0.2)
        outside = Detection(Box(W + 10, H + 10, 5, 5), 0, 0.2)
        detector = MockDetector(
            MockScript(detect_by_fingerprint={fingerprint(img): [tiny, outside]})
        )
        result = run_frame(img, detector, BombClassifier(), cfg)
        assert result.counters == {"direct": 0, "cascade": 0, "discarded": 2}

    def test_no_fire_relabel_dropped_by_default(self):
        box = grid_boxes(1)[0]
        det = Detection(box, 0, 0.5)
        cfg = CascadeConfig()
        img, detector, classifier = frame_fixture(8, [det], [(1, 0.95)], cfg)
        result = run_frame(img, detector, classifier, cfg)
        assert result.detections == []
        assert result.counters == {"direct": 0, "cascade": 0, "discarded": 1}
        kept_cfg = CascadeConfig(keep_no_fire=True)
        result = run_frame(img, detector, classifier, kept_cfg)
        assert [d.category for d in result.detections] == [1]
        assert result.counters["cascade"] == 1

    def test_rgb_frame_classified_from_grayscale_rendering(self):
        rng = np.random.default_rng(9)
        rgb = rng.integers(0, 256, (H, W, 3), dtype=np.uint8)
        from pyrolens.imaging import rgb_to_gray

        gray = rgb_to_gray(rgb)
        cfg = CascadeConfig(keep_no_fire=True)
        box = grid_boxes(1)[0]
        det = Detection(box, 0, 0.5)
        det_script = MockScript(detect_by_fingerprint={fingerprint(rgb): [det]})
        crop = gray[int(box.y) : int(box.y2), int(box.x) : int(box.x2)]
        key = fingerprint(edge_enhance(crop, cfg.edge))
        cls_script = MockScript(classify_by_fingerprint={key: (0, 0.9)})
        result = run_frame(rgb, MockDetector(det_script), MockClassifier(cls_script), cfg)
        assert result.counters["cascade"] == 1
        assert result.detections[0].score == 0.9

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CascadeConfig(tau_detect=1.5)
        with pytest.raises(ValueError):
            CascadeConfig(tau_classify=-0.1)


class FlakyDetector:
    info = BackendInfo(name="flaky", ops=("detect",))

    def __init__(self, bad_keys):
        self.bad_keys = bad_keys

    def detect(self, img):
        if fingerprint(img) in self.bad_keys:
            raise RuntimeError("detector crashed")
        return []


class TestRunSequence:
    def frames(self, n, start=20):
        return [(f"frame_{i}", noise_frame(start + i)) for i in range(n)]

    def test_empty_source(self):
        out = list(run_sequence([], MockDetector(), MockClassifier()))
        assert out == []

    def test_identical_frames_identical_results(self):
        img = noise_frame(30)
        det = Detection(Box(4, 4, 10, 10), 0, 0.9)
        detector = MockDetector(MockScript(detect_by_fingerprint={fingerprint(img): [det]}))
        out = list(run_sequence([("a", img), ("b", img)], detector, MockClassifier()))
        assert out[0][1] == out[1][1]
        assert [frame for frame, _ in out] == ["a", "b"]

    def test_error_isolation_continues(self):
        frames = self.frames(3)
        bad = {fingerprint(frames[1][1])}
        out = list(run_sequence(frames, FlakyDetector(bad), MockClassifier()))
        assert isinstance(out[0][1], type(out[2][1]))
        assert isinstance(out[1][1], FrameError)
        assert "detector crashed" in out[1][1].message
        assert [frame for frame, _ in out] == ["frame_0", "frame_1", "frame_2"]

    def test_fail_fast_aborts(self):
        frames = self.frames(3)
        bad = {fingerprint(frames[0][1])}
        with pytest.raises(CascadeAborted):
            list(run_sequence(frames, FlakyDetector(bad), MockClassifier(), fail_fast=True))

    def test_parallel_jobs_match_sequential(self):
        frames = self.frames(7)
        scripted = {}
        for i, (_, img) in enumerate(frames):
            scripted[fingerprint(img)] = [Detection(Box(2 + i, 2, 8, 8), 0, 0.9)]
        detector = MockDetector(MockScript(detect_by_fingerprint=scripted))
        seq = list(run_sequence(frames, detector, MockClassifier()))
        par = list(run_sequence(frames, detector, MockClassifier(), jobs=3))
        assert seq == par

    def test_result_json_line_shapes(self):
        ok = result_to_obj("f0", run_frame(noise_frame(40), MockDetector(), MockClassifier()))
        assert ok == {"frame": "f0", "detections": [], "counters": {"direct": 0, "cascade": 0, "discarded": 0}}
        err = result_to_obj("f1", FrameError("f1", "kaput"))
        assert err == {"frame": "f1", "error": "kaput"}
