import numpy as np
import pytest

from partsight.errors import InputError
from partsight.formats import detection_record, read_label_file
from partsight.geometry import BoundingBox, load_image, save_image
from partsight.refine import RefinementConfig, refine_dataset

from conftest import gradient_image

WHITE = (255, 255, 255)


def write_images(directory, count, size=(64, 48)):
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        save_image(directory / f"img_{i:03d}.png", gradient_image(size[0], size[1], seed=i))


def rec(image_id, label, coords, conf):
    return detection_record(image_id, label, BoundingBox(*coords), conf)


class TestRefine:
    def test_single_crop_pixel_equality(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 1)
        out = tmp_path / "out"
        refine_dataset(
            images,
            [rec("img_000", "gear", (10, 10, 50, 40), 0.9)],
            RefinementConfig(),
            out,
        )
        source = load_image(images / "img_000.png")
        refined = load_image(out / "images" / "img_000.png")
        assert np.array_equal(refined[10:40, 10:50], source[10:40, 10:50])
        outside = np.ones(refined.shape[:2], dtype=bool)
        outside[10:40, 10:50] = False
        assert np.all(refined[outside] == 255)

    def test_all_below_threshold_skips_everything(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 4)
        manifest = refine_dataset(
            images,
            [rec(f"img_{i:03d}", "gear", (5, 5, 20, 20), 0.3) for i in range(4)],
            RefinementConfig(confidence_threshold=0.5),
            tmp_path / "out",
        )
        assert manifest["refined_images"] == 0
        assert manifest["skipped_images"] == 4
        assert manifest["pseudo_labels"] == 0

    def test_two_detections_one_canvas_two_labels(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 1)
        out = tmp_path / "out"
        manifest = refine_dataset(
            images,
            [
                rec("img_000", "gear", (2, 2, 20, 20), 0.8),
                rec("img_000", "cover", (30, 10, 60, 40), 0.7),
            ],
            RefinementConfig(),
            out,
        )
        assert manifest["refined_images"] == 1
        assert manifest["pseudo_labels"] == 2
        entries = read_label_file(out / "labels" / "img_000.txt", 64, 48)
        assert len(entries) == 2

    def test_every_pixel_white_or_source(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 3)
        out = tmp_path / "out"
        detections = [
            rec("img_000", "a", (4, 4, 30, 30), 0.9),
            rec("img_001", "a", (0, 0, 10, 10), 0.6),
            rec("img_001", "b", (5, 5, 40, 30), 0.7),
        ]
        refine_dataset(images, detections, RefinementConfig(), out)
        for refined_path in (out / "images").glob("*.png"):
            refined = load_image(refined_path)
            source = load_image(images / refined_path.name)
            is_white = np.all(refined == 255, axis=2)
            is_source = np.all(refined == source, axis=2)
            assert np.all(is_white | is_source)

    def test_boxes_kept_verbatim_not_retightened(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 1)
        out = tmp_path / "out"
        box = (11, 7, 53, 37)
        refine_dataset(images, [rec("img_000", "g", box, 0.9)], RefinementConfig(), out)
        entries = read_label_file(out / "labels" / "img_000.txt", 64, 48)
        assert entries[0][1].as_list() == pytest.approx(list(map(float, box)), abs=1e-3)

    def test_out_of_bounds_boxes_clipped(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 1)
        out = tmp_path / "out"
        manifest = refine_dataset(
            images, [rec("img_000", "g", (-10, -10, 200, 200), 0.9)],
            RefinementConfig(), out,
        )
        bbox = manifest["records"][0]["instances"][0]["bbox"]
        assert bbox == [0.0, 0.0, 64.0, 48.0]

    def test_idempotent_on_own_output(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 2)
        detections = [
            rec("img_000", "a", (4, 4, 30, 30), 0.9),
            rec("img_001", "b", (8, 8, 44, 40), 0.8),
        ]
        first = tmp_path / "first"
        second = tmp_path / "second"
        refine_dataset(images, detections, RefinementConfig(), first)
        refine_dataset(first / "images", detections, RefinementConfig(), second)
        for name in ("img_000.png", "img_001.png"):
            a = load_image(first / "images" / name)
            b = load_image(second / "images" / name)
            assert np.array_equal(a, b)

    def test_higher_confidence_crop_wins_overlap(self, tmp_path):
        images = tmp_path / "images"
        images.mkdir()
        # two flat-color sources is overkill; one image, two overlapping dets
        canvas = np.zeros((20, 20, 3), dtype=np.uint8)
        canvas[:, :10] = (10, 10, 10)
        canvas[:, 10:] = (200, 200, 200)
        save_image(images / "img.png", canvas)
        out = tmp_path / "out"
        refine_dataset(
            images,
            [
                rec("img", "a", (0, 0, 12, 20), 0.9),
                rec("img", "b", (8, 0, 20, 20), 0.5),
            ],
            RefinementConfig(),
            out,
        )
        refined = load_image(out / "images" / "img.png")
        # ascending-confidence copy order: the 0.9 crop is applied last
        assert np.array_equal(refined[:, 0:12], canvas[:, 0:12])

    def test_empty_input_rejected(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(InputError):
            refine_dataset(empty, [], RefinementConfig(), tmp_path / "out")

    def test_unknown_image_ids_rejected(self, tmp_path):
        images = tmp_path / "images"
        write_images(images, 1)
        with pytest.raises(InputError, match="ghost"):
            refine_dataset(
                images, [rec("ghost", "g", (0, 0, 10, 10), 0.9)],
                RefinementConfig(), tmp_path / "out",
            )
