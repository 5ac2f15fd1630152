import logging
import math

import numpy as np
import pytest
from PIL import Image

from cxrsynth.corpus import (
    Annotation,
    AnnotationParseError,
    BBox,
    PATHOLOGIES,
    generate_phantom_corpus,
    load_and_resize,
    parse_annotations,
    split_train_eval,
)


def write_csv(path, rows):
    path.write_text("image_id,label,x,y,w,h\n" + "\n".join(rows) + "\n")
    return path


class TestParseAnnotations:
    def test_direct_transcription(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["img_001.png,Cardiomegaly,100,200,300,150"])
        (ann,) = parse_annotations(path)
        assert ann.image_id == "img_001.png"
        assert ann.pathology == "Cardiomegaly"
        assert (ann.box.x, ann.box.y, ann.box.w, ann.box.h) == (100, 200, 300, 150)

    def test_label_outside_class_set_is_skipped_and_counted(self, tmp_path, caplog):
        path = write_csv(
            tmp_path / "a.csv",
            ["a.png,Cardiomegaly,1,1,5,5", "b.png,Mass,1,1,5,5", "c.png,Nodule,2,2,3,3"],
        )
        with caplog.at_level(logging.INFO, logger="cxrsynth.corpus"):
            annotations = parse_annotations(path)
        assert [a.image_id for a in annotations] == ["a.png"]
        assert "skipped 2 rows" in caplog.text

    def test_malformed_row_names_row_number(self, tmp_path):
        # Five file lines: header, two good rows, a malformed row 4, one good row.
        path = write_csv(
            tmp_path / "a.csv",
            ["a.png,Effusion,1,1,5,5", "b.png,Pneumonia,2,2,4,4",
             "c.png,Infiltration,not_a_number,3,4,4", "d.png,Atelectasis,5,5,2,2"],
        )
        with pytest.raises(AnnotationParseError, match="row 4"):
            parse_annotations(path)

    def test_unreadable_file_raises_io_error(self, tmp_path):
        with pytest.raises(OSError):
            parse_annotations(tmp_path / "missing.csv")

    def test_non_positive_extent_is_malformed(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["a.png,Effusion,1,1,0,5"])
        with pytest.raises(AnnotationParseError, match="row 2"):
            parse_annotations(path)

    def test_custom_class_set(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["a.png,Mass,1,1,5,5"])
        (ann,) = parse_annotations(path, class_set=("Mass",))
        assert ann.pathology == "Mass"


def make_stub_annotations(n):
    return [
        Annotation(f"img_{i}.png", PATHOLOGIES[i % 6], BBox(1, 1, 10, 10))
        for i in range(n)
    ]


class TestSplit:
    def test_paper_split_820(self):
        split = split_train_eval(make_stub_annotations(820), 0.7, seed=0)
        assert len(split.train) == 573
        assert len(split.eval) == 247

    def test_small_split_takes_ceiling_on_eval(self):
        # (1 - 0.7) * 10 evaluates just above 3 in IEEE arithmetic, so the
        # eval side gets the ceiling: 4 eval / 6 train.
        split = split_train_eval(make_stub_annotations(10), 0.7, seed=0)
        assert (len(split.train), len(split.eval)) == (6, 4)

    def test_partition_property(self):
        annotations = make_stub_annotations(37)
        split = split_train_eval(annotations, 0.6, seed=5)
        ids = lambda lst: {id(a) for a in lst}
        assert ids(split.train) & ids(split.eval) == set()
        assert ids(split.train) | ids(split.eval) == ids(annotations)

    def test_same_seed_same_membership(self):
        annotations = make_stub_annotations(101)
        a = split_train_eval(annotations, 0.7, seed=9)
        b = split_train_eval(annotations, 0.7, seed=9)
        assert [x.image_id for x in a.train] == [x.image_id for x in b.train]
        assert [x.image_id for x in a.eval] == [x.image_id for x in b.eval]

    def test_different_seed_different_order(self):
        annotations = make_stub_annotations(101)
        a = split_train_eval(annotations, 0.7, seed=1)
        b = split_train_eval(annotations, 0.7, seed=2)
        assert [x.image_id for x in a.train] != [x.image_id for x in b.train]

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            split_train_eval([], 0.7, seed=0)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            split_train_eval(make_stub_annotations(5), 1.0, seed=0)


class TestLoadAndResize:
    def test_downsize_and_box_scaling(self, tmp_path):
        rng = np.random.default_rng(0)
        pixels = (rng.random((1024, 1024)) * 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(tmp_path / "big.png")
        image = load_and_resize(tmp_path / "big.png", target=256)
        assert image.pixels.shape == (256, 256)
        ann = Annotation("big.png", "Effusion", BBox(100, 200, 300, 150), 1024)
        scaled = ann.box_at(256)
        assert (scaled.x, scaled.y, scaled.w, scaled.h) == (25.0, 50.0, 75.0, 37.5)

    def test_identity_resize_is_pixel_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        pixels = (rng.random((256, 256)) * 255).astype(np.uint8)
        Image.fromarray(pixels, mode="L").save(tmp_path / "same.png")
        image = load_and_resize(tmp_path / "same.png", target=256)
        assert np.array_equal(image.pixels, pixels / 255.0)

    def test_constant_source_stays_constant(self, tmp_path):
        pixels = np.full((512, 512), 77, dtype=np.uint8)
        Image.fromarray(pixels, mode="L").save(tmp_path / "flat.png")
        image = load_and_resize(tmp_path / "flat.png", target=256)
        assert np.allclose(image.pixels, 77 / 255.0, atol=1e-7)

    def test_sixteen_bit_source(self, tmp_path):
        pixels = np.full((64, 64), 32768, dtype=np.uint16)
        Image.fromarray(pixels, mode="I;16").save(tmp_path / "deep.png")
        image = load_and_resize(tmp_path / "deep.png", target=64)
        assert abs(float(image.pixels[0, 0]) - 32768 / 65535) < 1e-9

    def test_non_square_rejected(self, tmp_path):
        Image.fromarray(np.zeros((10, 20), dtype=np.uint8), mode="L").save(tmp_path / "r.png")
        with pytest.raises(ValueError, match="square"):
            load_and_resize(tmp_path / "r.png")

    def test_missing_file_raises_io_error(self, tmp_path):
        with pytest.raises(OSError):
            load_and_resize(tmp_path / "nope.png")


class TestPhantomCorpus:
    def test_round_robin_labels(self, tmp_path):
        annotations, _ = generate_phantom_corpus(6, 0, seed=1, out_dir=tmp_path)
        assert sorted(a.pathology for a in annotations) == sorted(PATHOLOGIES)

    def test_healthy_only(self, tmp_path):
        annotations, images = generate_phantom_corpus(0, 5, seed=1, out_dir=tmp_path)
        assert annotations == []
        assert len(images) == 5

    def test_lesion_contrast(self, phantom_corpus):
        for ann in phantom_corpus["annotations"]:
            image = phantom_corpus["images"][ann.image_id]
            top, bottom, left, right = ann.box.pixel_region(image.height, image.width)
            box_mask = np.zeros_like(image.pixels, dtype=bool)
            box_mask[top:bottom, left:right] = True
            inside = image.pixels[box_mask].mean()
            outside = image.pixels[~box_mask].mean()
            assert inside > outside

    def test_boxes_valid_at_working_resolution(self, phantom_corpus):
        for ann in phantom_corpus["annotations"]:
            top, bottom, left, right = ann.box_at(256).pixel_region(256, 256)
            assert 0 <= top < bottom <= 256
            assert 0 <= left < right <= 256

    def test_determinism_byte_identical(self, tmp_path):
        generate_phantom_corpus(3, 2, seed=9, out_dir=tmp_path / "a")
        generate_phantom_corpus(3, 2, seed=9, out_dir=tmp_path / "b")
        files_a = sorted((tmp_path / "a").iterdir())
        files_b = sorted((tmp_path / "b").iterdir())
        assert [f.name for f in files_a] == [f.name for f in files_b]
        for fa, fb in zip(files_a, files_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_negative_count_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_phantom_corpus(-1, 0, seed=0, out_dir=tmp_path)

    def test_manifest_round_trip(self, phantom_corpus):
        reloaded = parse_annotations(
            phantom_corpus["dir"] / "annotations.csv", native_resolution=256
        )
        assert len(reloaded) == len(phantom_corpus["annotations"])
        for got, want in zip(reloaded, phantom_corpus["annotations"]):
            assert got.image_id == want.image_id
            assert got.pathology == want.pathology
            assert math.isclose(got.box.x, want.box.x)
