"""Data-pipeline tests: labels, splits, decoding, augmentation, batching."""

import numpy as np
import pytest

from fundusnet import data, fixtures
from fundusnet.data import (
    AugmentParams, DataQualityWarning, ImageRecord, LabelRow,
    augment, batches, binary_label, decode_and_resize, load_labels,
    read_manifest, split_dataset, write_manifest,
)
from fundusnet.errors import DataFormatError, ImageDecodeError

from conftest import png_bytes


def write_labels(path, lines):
    header = "ID,Disease_Risk," + ",".join(fixtures.DISEASE_CODES)
    path.write_text("\n".join([header, *lines]) + "\n", encoding="utf-8")
    return path


def flag_cells(**set_codes):
    cells = []
    for code in fixtures.DISEASE_CODES:
        cells.append(str(set_codes.get(code, 0)))
    return ",".join(cells)


class TestLoadLabels:
    def test_basic_rows(self, tmp_path):
        path = write_labels(tmp_path / "labels.csv", [
            "a,1," + flag_cells(DR=1),
            "b,0," + flag_cells(),
        ])
        rows = load_labels(path)
        assert [r.id for r in rows] == ["a", "b"]
        assert rows[0].disease_risk == 1 and rows[0].flags["DR"] == 1
        assert rows[1].disease_risk == 0 and not any(rows[1].flags.values())

    def test_header_only(self, tmp_path):
        path = write_labels(tmp_path / "labels.csv", [])
        assert load_labels(path) == []

    def test_non_binary_cell_names_line(self, tmp_path):
        path = write_labels(tmp_path / "labels.csv", [
            "a,1," + flag_cells(),
            "b,2," + flag_cells(),
        ])
        with pytest.raises(DataFormatError, match="line 3"):
            load_labels(path)

    def test_duplicate_id(self, tmp_path):
        path = write_labels(tmp_path / "labels.csv", [
            "a,1," + flag_cells(),
            "a,0," + flag_cells(),
        ])
        with pytest.raises(DataFormatError, match="duplicate id"):
            load_labels(path)

    def test_missing_required_column(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("ID,Risk,DR\na,1,0\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="Disease_Risk"):
            load_labels(path)

    def test_ragged_row(self, tmp_path):
        path = write_labels(tmp_path / "labels.csv", ["a,1,0"])
        with pytest.raises(DataFormatError, match="expected"):
            load_labels(path)

    def test_no_disease_columns(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("ID,Disease_Risk\na,1\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="disease-code"):
            load_labels(path)


class TestBinaryLabel:
    def test_healthy(self):
        row = LabelRow(id="x", disease_risk=0, flags={"DR": 0, "MH": 0})
        assert binary_label(row) == 0

    def test_flagged_disease(self):
        row = LabelRow(id="x", disease_risk=1, flags={"DR": 1, "MH": 0})
        assert binary_label(row) == 1

    def test_contradiction_warns_and_counts_diseased(self):
        row = LabelRow(id="x", disease_risk=0, flags={"DR": 1})
        with pytest.warns(DataQualityWarning, match="x"):
            assert binary_label(row) == 1


class TestSplit:
    def test_published_sizes(self):
        ids = [f"img{i:05d}" for i in range(3200)]
        split = split_dataset(ids, seed=1)
        assert (len(split.train), len(split.validation), len(split.test)) == (1920, 640, 640)

    def test_five_ids(self):
        split = split_dataset(list("abcde"), seed=0)
        assert (len(split.train), len(split.validation), len(split.test)) == (3, 1, 1)

    def test_same_seed_identical(self):
        ids = [f"i{i}" for i in range(101)]
        assert split_dataset(ids, seed=9) == split_dataset(ids, seed=9)

    def test_input_order_irrelevant(self):
        ids = [f"i{i}" for i in range(40)]
        assert split_dataset(ids, seed=3) == split_dataset(list(reversed(ids)), seed=3)

    def test_partition_laws_random(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n = int(rng.integers(3, 400))
            seed = int(rng.integers(0, 1000))
            ids = [f"z{i}" for i in range(n)]
            split = split_dataset(ids, seed=seed)
            parts = [set(split.train), set(split.validation), set(split.test)]
            assert sum(len(p) for p in parts) == n
            assert set().union(*parts) == set(ids)
            assert len(split.train) == int(0.6 * n)
            assert len(split.validation) == int(0.2 * n)

    def test_empty_raises(self):
        with pytest.raises(DataFormatError):
            split_dataset([], seed=0)

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            split_dataset(["a", "b"], ratios=(0.5, 0.5, 0.5), seed=0)

    def test_manifest_round_trip(self, tmp_path):
        split = split_dataset([f"i{i}" for i in range(25)], seed=11)
        path = tmp_path / "manifest.tsv"
        write_manifest(split, path)
        assert read_manifest(path) == split

    def test_manifest_byte_identical(self, tmp_path):
        ids = [f"i{i}" for i in range(50)]
        p1, p2 = tmp_path / "m1.tsv", tmp_path / "m2.tsv"
        write_manifest(split_dataset(ids, seed=4), p1)
        write_manifest(split_dataset(ids, seed=4), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_manifest_bad_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\tpart\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="header"):
            read_manifest(path)

    def test_manifest_bad_part(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text(f"{data.MANIFEST_HEADER}\n# seed=0\nx\tnowhere\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="unknown part"):
            read_manifest(path)


class TestDecode:
    def test_white_png(self, solid_png):
        pixels = decode_and_resize(solid_png(255))
        assert pixels.shape == (150, 150, 3)
        assert pixels.dtype == np.float32
        assert np.all(pixels == 1.0)

    def test_gray_resized(self, solid_png):
        pixels = decode_and_resize(solid_png(128, size=300))
        assert pixels.shape == (150, 150, 3)
        assert np.all(pixels == np.float32(128) / np.float32(255))

    def test_range_law(self):
        rng = np.random.default_rng(7)
        blob = png_bytes(rng.integers(0, 256, (90, 210, 3), dtype=np.uint8))
        pixels = decode_and_resize(blob)
        assert pixels.shape == (150, 150, 3)
        assert pixels.min() >= 0.0 and pixels.max() <= 1.0

    def test_undecodable(self):
        with pytest.raises(ImageDecodeError):
            decode_and_resize(b"definitely not an image")

    def test_record_validation(self):
        with pytest.raises(DataFormatError, match="label"):
            ImageRecord(id="x", pixels=np.zeros((4, 4, 3), np.float32), label=3)
        with pytest.raises(DataFormatError, match="\\[0, 1\\]"):
            ImageRecord(id="x", pixels=np.full((4, 4, 3), 1.5, np.float32), label=1)

    def test_load_records_missing_image(self, tmp_path):
        labels = write_labels(tmp_path / "labels.csv", ["a,1," + flag_cells(DR=1)])
        rows = load_labels(labels)
        with pytest.raises(DataFormatError, match="'a'"):
            data.load_records(rows, tmp_path, ids=["a"])

    def test_load_records_reads_png(self, tmp_path, solid_png):
        labels = write_labels(tmp_path / "labels.csv", ["a,1," + flag_cells(DR=1)])
        (tmp_path / "a.png").write_bytes(solid_png(10))
        records = data.load_records(load_labels(labels), tmp_path)
        assert records["a"].label == 1
        assert records["a"].pixels.shape == (150, 150, 3)


class TestAugment:
    def test_identity_params(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 1, (20, 20, 3)).astype(np.float32)
        params = AugmentParams(flip_prob=0.0, rotation_deg=0.0, zoom_frac=0.0,
                               shear_deg=0.0, seed=0)
        out = augment(img, params, 0)
        assert np.array_equal(out, img)

    def test_forced_flip_is_involution(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        params = AugmentParams(flip_prob=1.0, rotation_deg=0.0, zoom_frac=0.0,
                               shear_deg=0.0, seed=0)
        once = augment(img, params, 0)
        assert np.array_equal(once, img[:, ::-1, :])
        assert np.array_equal(augment(once, params, 0), img)

    def test_same_draw_bit_identical(self):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 1, (24, 24, 3)).astype(np.float32)
        params = AugmentParams(seed=5)
        assert np.array_equal(augment(img, params, 3), augment(img, params, 3))

    def test_different_draws_differ(self):
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (24, 24, 3)).astype(np.float32)
        params = AugmentParams(seed=5, flip_prob=0.0)
        assert not np.array_equal(augment(img, params, 0), augment(img, params, 1))

    def test_shape_range_dtype_preserved(self):
        rng = np.random.default_rng(12)
        img = rng.uniform(0, 1, (30, 30, 3)).astype(np.float32)
        params = AugmentParams(seed=2)
        for draw in range(6):
            out = augment(img, params, draw)
            assert out.shape == img.shape
            assert out.dtype == np.float32
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_negative_draw_rejected(self):
        with pytest.raises(ValueError):
            augment(np.zeros((4, 4, 3), np.float32), AugmentParams(), -1)


def make_tiny_records(n, side=6, seed=0):
    rng = np.random.default_rng(seed)
    return [
        ImageRecord(id=f"r{i}", pixels=rng.uniform(0, 1, (side, side, 3)).astype(np.float32),
                    label=i % 2)
        for i in range(n)
    ]


class TestBatches:
    def test_full_pass_count(self):
        records = make_tiny_records(1920)
        got = list(batches(records, 32, seed=0, epoch=0))
        assert len(got) == 60
        assert all(images.shape[0] == 32 for images, _ in got)

    def test_batch_one_stream_length(self):
        records = make_tiny_records(17)
        got = list(batches(records, 1, seed=0))
        assert len(got) == 17

    def test_final_partial_batch(self):
        records = make_tiny_records(10)
        sizes = [images.shape[0] for images, _ in batches(records, 4, seed=0)]
        assert sizes == [4, 4, 2]

    def test_same_seed_identical_sequence(self):
        records = make_tiny_records(9)
        params = AugmentParams(seed=3)
        run1 = list(batches(records, 4, seed=7, epoch=2, augment_params=params))
        run2 = list(batches(records, 4, seed=7, epoch=2, augment_params=params))
        for (im1, la1), (im2, la2) in zip(run1, run2):
            assert np.array_equal(im1, im2) and np.array_equal(la1, la2)

    def test_epoch_changes_order(self):
        records = make_tiny_records(16)
        la0 = np.concatenate([la for _, la in batches(records, 4, seed=1, epoch=0)])
        la1 = np.concatenate([la for _, la in batches(records, 4, seed=1, epoch=1)])
        assert not np.array_equal(la0, la1)

    def test_empty_part_raises(self):
        with pytest.raises(DataFormatError):
            next(batches([], 4, seed=0))


class TestFixtures:
    def test_overfit_fixture_on_disk(self, tmp_path):
        paths = fixtures.write_overfit_fixture(tmp_path, seed=7)
        rows = load_labels(paths["labels"])
        assert len(rows) == 20
        split = read_manifest(paths["manifest"])
        assert (len(split.train), len(split.validation), len(split.test)) == (16, 2, 2)
        records = data.load_records(rows, paths["images_dir"], ids=split.train)
        labels = [records[i].label for i in split.train]
        assert sum(labels) == 8


def test_manifest_missing_seed_header(tmp_path):
    path = tmp_path / "noseed.tsv"
    path.write_text(f"{data.MANIFEST_HEADER}\nx\ttrain\n", encoding="utf-8")
    with pytest.raises(DataFormatError, match="seed"):
        read_manifest(path)


def test_split_duplicate_ids_rejected():
    with pytest.raises(DataFormatError, match="duplicate"):
        split_dataset(["a", "b", "a"], seed=0)


def test_load_labels_skips_blank_lines(tmp_path):
    path = tmp_path / "labels.csv"
    header = "ID,Disease_Risk," + ",".join(fixtures.DISEASE_CODES)
    row = "a,1," + ",".join(["0"] * len(fixtures.DISEASE_CODES))
    path.write_text(header + "\n\n" + row + "\n\n", encoding="utf-8")
    assert [r.id for r in load_labels(path)] == ["a"]
