"""Extraction semantics: counts, labels, thresholds, dump integrity."""

import numpy as np
import pytest
import torch

from featdump import (
    DumpRecord,
    ExtractionConfig,
    LABEL_ID,
    LABEL_UNLABELED,
    StubTwoStageDetector,
    extract,
    iou,
    match_predictions,
    micro_f1_threshold,
    read_dump,
)


def make_images(count=3, height=32, width=48, seed=0):
    rng = np.random.default_rng(seed)
    return {
        f"img{i}": rng.integers(0, 255, size=(height, width, 3), dtype=np.uint8)
        for i in range(count)
    }


def hand_harness(model, images, layer, floor):
    """Recompute the whole pipeline piecewise: backbone, pooling, head."""
    expected = []
    for image_id in sorted(images):
        tensor = torch.from_numpy(
            (images[image_id].astype(np.float32) / 255.0)
        )
        height, width = tensor.shape[0], tensor.shape[1]
        with torch.no_grad():
            fmap = model.backbone(tensor.permute(2, 0, 1).unsqueeze(0))[0]
            for box in model.propose(height, width):
                pooled = model.roi_pool(fmap, box, height, width)
                act1 = torch.relu(model.fc1(pooled))
                act2 = torch.relu(model.fc2(act1))
                probs = torch.softmax(model.classifier(act2), dim=0)
                best = int(torch.argmax(probs[:-1]))
                score = float(probs[best])
                if score < floor:
                    continue
                act = act1 if layer == "FC1Relu" else act2
                expected.append(
                    (
                        model.class_names[best],
                        np.float32(score),
                        act.numpy().astype(np.float32).tobytes(),
                    )
                )
    return expected


class TestHandHarness:
    @pytest.mark.parametrize("layer", ["FC1Relu", "FC2Relu"])
    def test_dump_matches_the_piecewise_forward(self, tmp_path, layer):
        """Three synthetic images through the fixed 8-wide head: the dump
        holds exactly the records an independent piecewise forward pass
        predicts, byte for byte."""
        model = StubTwoStageDetector(head_width=8, seed=0)
        images = make_images(3)
        out = tmp_path / "dump.bamf"
        summary = extract(
            ExtractionConfig(layer=layer, output=str(out)), images, detector=model
        )
        expected = hand_harness(model, images, layer, floor=0.05)
        assert summary.dimension == 8
        assert summary.records_written == len(expected)
        tag, dim, records = read_dump(out)
        assert tag == layer
        assert dim == 8
        assert len(records) == len(expected)
        for rec, (key, score, payload) in zip(records, expected):
            assert rec.class_key == key
            assert np.float32(rec.score) == score
            assert rec.values.tobytes() == payload


class TestThresholds:
    def test_zero_surviving_predictions_still_writes_a_valid_dump(self, tmp_path):
        out = tmp_path / "empty.bamf"
        summary = extract(
            ExtractionConfig(score_threshold=0.9999, output=str(out)),
            make_images(2),
        )
        assert summary.records_written == 0
        tag, dim, records = read_dump(out)
        assert records == []
        assert dim == summary.dimension

    def test_floor_is_the_default_filter(self, tmp_path):
        out = tmp_path / "floored.bamf"
        summary = extract(
            ExtractionConfig(score_floor=0.0, output=str(out)), make_images(2)
        )
        assert summary.threshold_used == 0.0
        assert summary.records_written == summary.predictions_seen

    def test_auto_threshold_requires_annotations(self, tmp_path):
        with pytest.raises(ValueError, match="annotations"):
            extract(
                ExtractionConfig(
                    auto_threshold=True, output=str(tmp_path / "x.bamf")
                ),
                make_images(1),
            )


class TestLabelsAndMatching:
    def test_predictions_matching_ground_truth_become_id(self, tmp_path):
        model = StubTwoStageDetector(seed=0)
        images = make_images(2)
        probe = tmp_path / "probe.bamf"
        extract(ExtractionConfig(output=str(probe)), images, detector=model)

        # ground truth crafted from the model's own predictions: every
        # proposal box with its predicted class, so everything matches
        annotations = {}
        for image_id in sorted(images):
            props = model.detect(images[image_id], "FC2Relu")
            annotations[image_id] = {
                "boxes": [p.box.tolist() for p in props],
                "labels": [p.class_key for p in props],
            }
        out = tmp_path / "labeled.bamf"
        extract(
            ExtractionConfig(output=str(out)), images, annotations, detector=model
        )
        _, _, records = read_dump(out)
        assert records and all(r.label == LABEL_ID for r in records)

    def test_partial_ground_truth_labels_partially(self, tmp_path):
        model = StubTwoStageDetector(seed=0)
        images = make_images(1)
        image_id = sorted(images)[0]
        props = model.detect(images[image_id], "FC2Relu")
        annotations = {
            image_id: {
                "boxes": [props[0].box.tolist()],
                "labels": [props[0].class_key],
            }
        }
        out = tmp_path / "partial.bamf"
        extract(
            ExtractionConfig(output=str(out)), images, annotations, detector=model
        )
        _, _, records = read_dump(out)
        labels = [r.label for r in records]
        assert labels.count(LABEL_ID) == 1
        assert labels.count(LABEL_UNLABELED) == len(records) - 1

    def test_without_annotations_everything_is_unlabeled(self, tmp_path):
        out = tmp_path / "plain.bamf"
        extract(ExtractionConfig(output=str(out)), make_images(1))
        _, _, records = read_dump(out)
        assert all(r.label == LABEL_UNLABELED for r in records)


class TestIoUAndMatching:
    def test_identical_boxes(self):
        assert iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0

    def test_disjoint_boxes(self):
        assert iou([0, 0, 1, 1], [5, 5, 6, 6]) == 0.0

    def test_hand_computed_overlap(self):
        # overlap 1x2, union 2x2 + 2x2 - 2 = 6
        assert iou([0, 0, 2, 2], [1, 0, 3, 2]) == pytest.approx(2 / 6)

    def test_class_must_agree(self):
        matched = match_predictions(
            [[0, 0, 2, 2]], ["car"], [0.9], [[0, 0, 2, 2]], ["person"]
        )
        assert matched.tolist() == [False]

    def test_each_truth_box_matches_once_by_descending_score(self):
        matched = match_predictions(
            [[0, 0, 2, 2], [0, 0, 2, 2]],
            ["car", "car"],
            [0.5, 0.9],
            [[0, 0, 2, 2]],
            ["car"],
        )
        # the higher-scoring duplicate wins the single truth box
        assert matched.tolist() == [False, True]

    def test_threshold_is_inclusive_at_half(self):
        # IoU exactly 0.5: intersection 1x2=2, union 4
        matched = match_predictions(
            [[0, 0, 1, 2]], ["car"], [0.9], [[0, 0, 2, 2]], ["car"]
        )
        assert matched.tolist() == [True]


class TestMicroF1:
    def test_perfect_split(self):
        t, degenerate = micro_f1_threshold(
            [(0.9, True), (0.8, True), (0.3, False)], 2
        )
        assert (t, degenerate) == (0.8, False)

    def test_degenerate_without_true_positives(self):
        t, degenerate = micro_f1_threshold([(0.4, False)], 0)
        assert degenerate and t > 0.4


class TestDimensionDrift:
    def test_drifting_activation_width_is_a_hard_error(self, tmp_path):
        class DriftingAdapter:
            def __init__(self):
                self.calls = 0

            def hook_points(self):
                return ("FC2Relu",)

            def detect(self, image, layer):
                from featdump.detectors import Proposal

                self.calls += 1
                return [
                    Proposal(
                        box=np.array([0.0, 0.0, 1.0, 1.0]),
                        class_key="car",
                        score=0.9,
                        activation=np.ones(self.calls + 3, dtype=np.float32),
                    )
                ]

        with pytest.raises(ValueError, match="drifted"):
            extract(
                ExtractionConfig(output=str(tmp_path / "x.bamf")),
                make_images(2),
                detector=DriftingAdapter(),
            )


class TestDumpWriter:
    def test_header_count_always_equals_the_records(self, tmp_path):
        from featdump import write_dump

        out = tmp_path / "two.bamf"
        count = write_dump(
            out,
            "FC2Relu",
            3,
            [
                DumpRecord("car", LABEL_ID, 0.9, np.ones(3, dtype=np.float32)),
                DumpRecord("car", LABEL_UNLABELED, 0.4, np.zeros(3, dtype=np.float32)),
            ],
        )
        _, _, records = read_dump(out)
        assert count == len(records) == 2

    def test_writer_rejects_wrong_width(self, tmp_path):
        from featdump import write_dump

        with pytest.raises(ValueError, match="shape"):
            write_dump(
                tmp_path / "bad.bamf",
                "FC2Relu",
                3,
                [DumpRecord("car", LABEL_ID, 0.9, np.ones(4, dtype=np.float32))],
            )
