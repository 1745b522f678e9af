import json

import numpy as np
import pytest

from freqshield.attacks import CtrlSpec, HtbaSpec
from freqshield.data import (
    Dataset,
    PoisonManifest,
    export_dataset,
    gen_synthetic,
    import_dataset,
    load_cifar10,
    load_cifar100,
    poison_dataset,
)
from freqshield.errors import (
    CapacityError,
    FormatError,
    InvalidInputError,
    ParameterError,
)
from freqshield.transforms import Image


def make_cifar10_bytes(records):
    """Hand-built CIFAR-10 binary: [label][1024 R][1024 G][1024 B] per record."""
    chunks = []
    for label, pixel_value in records:
        chunks.append(bytes([label]) + bytes([pixel_value]) * 3072)
    return b"".join(chunks)


class TestCifarLoaders:
    def test_two_record_fixture_exact_pixels(self, tmp_path):
        path = tmp_path / "batch.bin"
        path.write_bytes(make_cifar10_bytes([(3, 255), (7, 128)]))
        ds = load_cifar10(str(path))
        assert len(ds) == 2
        assert ds.num_classes == 10
        np.testing.assert_array_equal(ds.labels, [3, 7])
        assert np.all(ds.images[0] == 1.0)
        assert np.all(ds.images[1] == 128 / 255.0)
        assert ds.images.shape == (2, 3, 32, 32)

    def test_pixel_layout_channel_major(self, tmp_path):
        # first pixel of G plane lives at byte 1 + 1024
        rec = bytearray(3073)
        rec[0] = 1
        rec[1 + 1024] = 200
        path = tmp_path / "batch.bin"
        path.write_bytes(bytes(rec))
        ds = load_cifar10(str(path))
        assert ds.images[0, 1, 0, 0] == 200 / 255.0
        assert ds.images[0, 0, 0, 0] == 0.0

    def test_empty_file_gives_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        ds = load_cifar10(str(path))
        assert len(ds) == 0
        assert ds.images.shape == (0, 3, 32, 32)

    def test_truncated_file_rejected_with_offset(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(make_cifar10_bytes([(0, 10)]) + b"\x01\x02")
        with pytest.raises(FormatError) as err:
            load_cifar10(str(path))
        assert err.value.byte_offset == 3073

    def test_out_of_range_label_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(make_cifar10_bytes([(11, 10)]))
        with pytest.raises(FormatError):
            load_cifar10(str(path))

    def test_cifar100_uses_fine_label(self, tmp_path):
        rec = bytes([4]) + bytes([42]) + bytes([200]) * 3072
        path = tmp_path / "c100.bin"
        path.write_bytes(rec)
        ds = load_cifar100(str(path))
        assert ds.num_classes == 100
        np.testing.assert_array_equal(ds.labels, [42])
        assert np.all(ds.images[0] == 200 / 255.0)


class TestGenSynthetic:
    def test_sizes_and_labels(self):
        ds = gen_synthetic(3, 10, 16, rng_seed=0)
        assert len(ds) == 30
        np.testing.assert_array_equal(ds.labels, [0] * 10 + [1] * 10 + [2] * 10)
        assert ds.images.shape == (30, 3, 16, 16)

    def test_deterministic(self):
        a = gen_synthetic(3, 5, 16, rng_seed=9)
        b = gen_synthetic(3, 5, 16, rng_seed=9)
        np.testing.assert_array_equal(a.images, b.images)

    def test_values_in_unit_range(self):
        ds = gen_synthetic(4, 8, 16, rng_seed=2)
        assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0

    def test_pixel_space_1nn_separates_classes(self):
        train = gen_synthetic(3, 30, 16, rng_seed=0)
        test = gen_synthetic(3, 10, 16, rng_seed=1)
        xtr = train.images.reshape(len(train), -1)
        xte = test.images.reshape(len(test), -1)
        dists = ((xte[:, None, :] - xtr[None, :, :]) ** 2).sum(-1)
        pred = train.labels[np.argmin(dists, axis=1)]
        assert (pred == test.labels).mean() > 0.9

    def test_too_small_side_rejected(self):
        with pytest.raises(ParameterError):
            gen_synthetic(3, 10, 4, rng_seed=0)


class TestPoisonDataset:
    def test_zero_ratio_unchanged(self):
        ds = gen_synthetic(3, 10, 16, rng_seed=0)
        poisoned, manifest = poison_dataset(ds, CtrlSpec(magnitude=100.0), 0, 0.0, seed=1)
        np.testing.assert_array_equal(poisoned.images, ds.images)
        assert manifest.poisoned_indices == []

    def test_count_is_rounded_fraction_of_total(self):
        ds = gen_synthetic(2, 100, 16, rng_seed=0)
        _, manifest = poison_dataset(ds, CtrlSpec(magnitude=50.0), 1, 0.01, seed=0)
        assert len(manifest.poisoned_indices) == 2  # round(0.01 * 200)

    def test_same_seed_same_manifest(self):
        ds = gen_synthetic(3, 20, 16, rng_seed=0)
        _, m1 = poison_dataset(ds, CtrlSpec(magnitude=50.0), 1, 0.1, seed=5)
        _, m2 = poison_dataset(ds, CtrlSpec(magnitude=50.0), 1, 0.1, seed=5)
        assert m1.poisoned_indices == m2.poisoned_indices

    def test_only_manifest_indices_touched(self):
        ds = gen_synthetic(3, 20, 16, rng_seed=0)
        poisoned, manifest = poison_dataset(ds, CtrlSpec(magnitude=100.0), 2, 0.05, seed=3)
        touched = set(manifest.poisoned_indices)
        assert touched
        for idx in range(len(ds)):
            same = np.array_equal(poisoned.images[idx], ds.images[idx])
            assert same == (idx not in touched)

    def test_all_poisoned_indices_carry_target_label(self):
        ds = gen_synthetic(3, 20, 16, rng_seed=0)
        _, manifest = poison_dataset(ds, CtrlSpec(magnitude=100.0), 1, 0.1, seed=3)
        assert all(ds.labels[i] == 1 for i in manifest.poisoned_indices)

    def test_capacity_error(self):
        ds = gen_synthetic(3, 10, 16, rng_seed=0)
        with pytest.raises(CapacityError):
            poison_dataset(ds, CtrlSpec(magnitude=50.0), 0, 0.5, seed=0)  # needs 15 > 10

    def test_input_left_untouched(self):
        ds = gen_synthetic(3, 10, 16, rng_seed=0)
        before = ds.images.copy()
        poison_dataset(ds, CtrlSpec(magnitude=200.0), 0, 0.2, seed=0)
        np.testing.assert_array_equal(ds.images, before)

    def test_htba_items_get_distinct_seeds(self):
        ds = gen_synthetic(2, 25, 16, rng_seed=0)
        patch = Image(np.full((3, 3, 3), 1.0))
        spec = HtbaSpec(patch=patch, placement="random")
        poisoned, manifest = poison_dataset(ds, spec, 0, 0.2, seed=7)
        corners = set()
        for idx in manifest.poisoned_indices:
            delta = np.abs(poisoned.images[idx] - ds.images[idx]).sum(axis=0)
            rows, cols = np.nonzero(delta)
            corners.add((rows.min(), cols.min()))
        assert len(corners) > 1  # placements differ across items


class TestExportImport:
    def test_roundtrip_bit_exact(self, tmp_path):
        ds = gen_synthetic(3, 5, 16, rng_seed=0)
        poisoned, manifest = poison_dataset(ds, CtrlSpec(magnitude=75.0), 1, 0.2, seed=2)
        out = str(tmp_path / "exported")
        export_dataset(poisoned, manifest, out)
        back, back_manifest = import_dataset(out)
        assert np.array_equal(back.images, poisoned.images)
        np.testing.assert_array_equal(back.labels, poisoned.labels)
        assert back.num_classes == poisoned.num_classes
        assert back_manifest.poisoned_indices == manifest.poisoned_indices
        assert back_manifest.target_class == manifest.target_class
        assert back_manifest.attack == manifest.attack

    def test_export_without_manifest(self, tmp_path):
        ds = gen_synthetic(2, 3, 16, rng_seed=0)
        out = str(tmp_path / "clean")
        export_dataset(ds, None, out)
        back, manifest = import_dataset(out)
        assert manifest is None
        assert np.array_equal(back.images, ds.images)

    def test_missing_sidecar(self, tmp_path):
        with pytest.raises(FormatError):
            import_dataset(str(tmp_path))

    def test_shape_mismatch_rejected(self, tmp_path):
        ds = gen_synthetic(2, 3, 16, rng_seed=0)
        out = str(tmp_path / "broken")
        export_dataset(ds, None, out)
        meta = json.loads((tmp_path / "broken" / "meta.json").read_text())
        meta["shape"] = [99, 3, 16, 16]
        (tmp_path / "broken" / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(FormatError):
            import_dataset(out)

    def test_corrupt_sidecar_rejected(self, tmp_path):
        ds = gen_synthetic(2, 3, 16, rng_seed=0)
        out = str(tmp_path / "corrupt")
        export_dataset(ds, None, out)
        (tmp_path / "corrupt" / "meta.json").write_text("{not json")
        with pytest.raises(FormatError):
            import_dataset(out)


class TestDatasetValidation:
    def test_label_count_mismatch(self):
        with pytest.raises(Exception):
            Dataset(np.zeros((3, 3, 4, 4)), np.zeros(2, dtype=int), 2)

    def test_out_of_range_labels(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.zeros((2, 3, 4, 4)), np.array([0, 5]), 2)

    def test_out_of_range_values(self):
        with pytest.raises(InvalidInputError):
            Dataset(np.full((1, 3, 4, 4), 1.5), np.array([0]), 1)

    def test_manifest_sorts_and_dedupes(self):
        m = PoisonManifest(CtrlSpec(), 0, 0.1, 0, [5, 1, 5, 3])
        assert m.poisoned_indices == [1, 3, 5]
