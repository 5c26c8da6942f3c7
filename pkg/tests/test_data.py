import numpy as np
import pytest
from PIL import Image

from leafbench.data import (ArrayDataset, DatasetManifest, ImageSample,
                            SplitSpec, load_and_resize, load_split,
                            normalize_image, read_manifest, scan_dataset,
                            stratified_split, write_manifest)
from leafbench.errors import (ClassTooSmall, ConfigError, DatasetError,
                              DecodeError, EmptyDataset, OutOfRange,
                              UnknownLabel)
from leafbench.labels import build_label_space


def save_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def solid(side, value=127, channels=3):
    return np.full((side, side, channels), value, dtype=np.uint8)


class TestScan:
    def test_toy_tree(self, toy_root, paired_space):
        manifest = scan_dataset(toy_root, paired_space)
        assert len(manifest) == 64
        assert manifest.class_counts[("Tomato", "Healthy")] == 8
        assert len(manifest.class_counts) == 8
        assert sum(manifest.class_counts.values()) == 64

    def test_lexicographic_and_deterministic(self, toy_root, paired_space):
        a = scan_dataset(toy_root, paired_space)
        b = scan_dataset(toy_root, paired_space)
        paths = [str(s.path) for s in a.samples]
        assert paths == sorted(paths)
        assert paths == [str(s.path) for s in b.samples]

    def test_single_file_tree(self, tmp_path, paired_space):
        save_png(tmp_path / "Tomato" / "Healthy" / "a.jpg", solid(8))
        manifest = scan_dataset(tmp_path, paired_space)
        assert len(manifest) == 1
        assert manifest.class_counts == {("Tomato", "Healthy"): 1}

    def test_empty_root(self, tmp_path, paired_space):
        with pytest.raises(EmptyDataset):
            scan_dataset(tmp_path, paired_space)

    def test_missing_root(self, tmp_path, paired_space):
        with pytest.raises(EmptyDataset):
            scan_dataset(tmp_path / "nope", paired_space)

    def test_unknown_plant_dir(self, tmp_path, paired_space):
        save_png(tmp_path / "Banana" / "Healthy" / "a.png", solid(8))
        with pytest.raises(UnknownLabel):
            scan_dataset(tmp_path, paired_space)

    def test_unknown_condition_dir(self, tmp_path, paired_space):
        save_png(tmp_path / "Potato" / "Hispa" / "a.png", solid(8))
        with pytest.raises(UnknownLabel):
            scan_dataset(tmp_path, paired_space)

    def test_case_and_whitespace_insensitive_dirs(self, tmp_path,
                                                  paired_space):
        save_png(tmp_path / "tomato" / "LATE BLIGHT " / "a.png", solid(8))
        manifest = scan_dataset(tmp_path, paired_space)
        sample = manifest.samples[0]
        assert (sample.plant, sample.condition) == ("Tomato", "Late Blight")

    def test_non_image_files_ignored(self, tmp_path, paired_space):
        save_png(tmp_path / "Corn" / "Healthy" / "a.png", solid(8))
        (tmp_path / "Corn" / "Healthy" / "notes.txt").write_text("skip me")
        manifest = scan_dataset(tmp_path, paired_space)
        assert len(manifest) == 1

    def test_accepted_extensions(self, tmp_path, paired_space):
        base = tmp_path / "Rice" / "Hispa"
        save_png(base / "a.png", solid(8))
        Image.fromarray(solid(8)).save(base / "b.jpg")
        Image.fromarray(solid(8)).save(base / "c.jpeg")
        manifest = scan_dataset(tmp_path, paired_space)
        assert len(manifest) == 3


class TestStratifiedSplit:
    def make_manifest(self, sizes):
        pairs = [("Tomato", "Healthy"), ("Tomato", "Early Blight"),
                 ("Potato", "Healthy"), ("Corn", "Healthy"),
                 ("Rice", "Healthy"), ("Apple", "Healthy")]
        samples = []
        for (plant, cond), n in zip(pairs, sizes):
            for i in range(n):
                samples.append(ImageSample(
                    path=f"{plant}/{cond}/{i:05d}.png", plant=plant,
                    condition=cond))
        return DatasetManifest(samples=tuple(samples))

    def split_sizes(self, manifest, key):
        sizes = {"train": 0, "val": 0, "test": 0}
        for s in manifest.samples:
            if (s.plant, s.condition) == key:
                sizes[s.split] += 1
        return sizes["train"], sizes["val"], sizes["test"]

    def test_floor_rule_on_reference_sizes(self):
        sizes = [3, 4, 7, 152, 1955, 2200]
        expected = [(3, 0, 0), (2, 1, 1), (5, 1, 1), (76, 38, 38),
                    (979, 488, 488), (1100, 550, 550)]
        manifest = self.make_manifest(sizes)
        split = stratified_split(manifest, SplitSpec(seed=5))
        keys = [("Tomato", "Healthy"), ("Tomato", "Early Blight"),
                ("Potato", "Healthy"), ("Corn", "Healthy"),
                ("Rice", "Healthy"), ("Apple", "Healthy")]
        for key, want in zip(keys, expected):
            assert self.split_sizes(split, key) == want

    def test_sizes_always_sum(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 400))
            manifest = self.make_manifest([n])
            split = stratified_split(manifest, SplitSpec(seed=1))
            tr, va, te = self.split_sizes(split, ("Tomato", "Healthy"))
            assert tr + va + te == n
            assert va == int(np.floor(0.25 * n + 1e-9))
            assert te == int(np.floor(0.25 * n + 1e-9))

    def test_same_seed_byte_identical(self, toy_manifest):
        base = DatasetManifest(samples=tuple(
            ImageSample(path=s.path, plant=s.plant, condition=s.condition)
            for s in toy_manifest.samples))
        a = stratified_split(base, SplitSpec(seed=9))
        b = stratified_split(base, SplitSpec(seed=9))
        assert [(str(s.path), s.split) for s in a.samples] == \
            [(str(s.path), s.split) for s in b.samples]

    def test_different_seed_differs(self, toy_manifest):
        base = DatasetManifest(samples=tuple(
            ImageSample(path=s.path, plant=s.plant, condition=s.condition)
            for s in toy_manifest.samples))
        a = stratified_split(base, SplitSpec(seed=9))
        b = stratified_split(base, SplitSpec(seed=10))
        assert [s.split for s in a.samples] != [s.split for s in b.samples]

    def test_class_too_small(self):
        manifest = self.make_manifest([2])
        with pytest.raises(ClassTooSmall):
            stratified_split(manifest, SplitSpec(seed=0))

    def test_permissive_allows_tiny_class(self):
        manifest = self.make_manifest([2])
        split = stratified_split(manifest, SplitSpec(seed=0),
                                 permissive=True)
        assert self.split_sizes(split, ("Tomato", "Healthy")) == (2, 0, 0)

    def test_every_sample_tagged_once(self, toy_manifest):
        assert all(s.split in ("train", "val", "test")
                   for s in toy_manifest.samples)

    def test_global_fractions_near_targets(self):
        manifest = self.make_manifest([152, 1955, 2200, 1046, 2052, 2115])
        split = stratified_split(manifest, SplitSpec(seed=2))
        n = len(split)
        counts = {"train": 0, "val": 0, "test": 0}
        for s in split.samples:
            counts[s.split] += 1
        slack = 6 / n
        assert abs(counts["train"] / n - 0.50) <= slack
        assert abs(counts["val"] / n - 0.25) <= slack
        assert abs(counts["test"] / n - 0.25) <= slack

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            SplitSpec(train_fraction=0.5, val_fraction=0.3,
                      test_fraction=0.3)
        with pytest.raises(ConfigError):
            SplitSpec(train_fraction=1.0, val_fraction=0.0,
                      test_fraction=0.0)


class TestLoadAndResize:
    def test_identity_resize(self, tmp_path, rng):
        raw = rng.integers(0, 256, size=(120, 120, 3)).astype(np.uint8)
        path = tmp_path / "img.png"
        save_png(path, raw)
        out = load_and_resize(ImageSample(path=path, plant="", condition=""))
        assert out.shape == (120, 120, 3)
        assert np.array_equal(out, raw.astype(np.float64))

    def test_constant_downscale(self, tmp_path):
        path = tmp_path / "c.png"
        save_png(path, solid(240, value=200))
        out = load_and_resize(ImageSample(path=path, plant="", condition=""))
        assert out.shape == (120, 120, 3)
        assert np.all(out == 200)

    def test_bilinear_upscale_monotone_with_exact_corners(self, tmp_path):
        path = tmp_path / "g.png"
        grad = np.array([[0, 0], [255, 255]], dtype=np.uint8)
        save_png(path, np.stack([grad] * 3, axis=-1))
        out = load_and_resize(ImageSample(path=path, plant="", condition=""),
                              side=4)
        col = out[:, 0, 0]
        assert col[0] == 0 and col[-1] == 255
        assert all(col[i] <= col[i + 1] for i in range(3))

    def test_grayscale_promoted_to_rgb(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(solid(16)[:, :, 0], mode="L").save(path)
        out = load_and_resize(ImageSample(path=path, plant="", condition=""),
                              side=16)
        assert out.shape == (16, 16, 3)
        assert np.all(out[:, :, 0] == out[:, :, 1])

    def test_alpha_dropped(self, tmp_path):
        path = tmp_path / "rgba.png"
        rgba = np.dstack([solid(16), np.full((16, 16), 255, np.uint8)])
        Image.fromarray(rgba, mode="RGBA").save(path)
        out = load_and_resize(ImageSample(path=path, plant="", condition=""),
                              side=16)
        assert out.shape == (16, 16, 3)

    def test_corrupt_file_names_path(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"this is not an image at all")
        with pytest.raises(DecodeError) as err:
            load_and_resize(ImageSample(path=path, plant="", condition=""))
        assert "broken.png" in str(err.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DecodeError):
            load_and_resize(ImageSample(path=tmp_path / "ghost.png",
                                        plant="", condition=""))


class TestNormalize:
    def test_bounds(self):
        assert np.all(normalize_image(np.full((2, 2, 3), 255.0)) == 1.0)
        assert np.all(normalize_image(np.zeros((2, 2, 3))) == 0.0)

    def test_hand_value(self):
        assert normalize_image(np.array([[[51.0, 51.0, 51.0]]]))[0, 0, 0] == \
            pytest.approx(0.2)

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            normalize_image(np.array([[[256.0, 0.0, 0.0]]]))
        with pytest.raises(OutOfRange):
            normalize_image(np.array([[[-1.0, 0.0, 0.0]]]))

    def test_linearity(self, rng):
        raw = rng.random((4, 4, 3)) * 255
        for a in (0.0, 0.25, 1.0):
            assert np.allclose(normalize_image(a * raw),
                               a * normalize_image(raw))

    def test_loaded_image_lands_in_unit_range(self, toy_manifest):
        sample = toy_manifest.samples[0]
        pixels = normalize_image(load_and_resize(sample, side=32))
        assert pixels.min() >= 0.0 and pixels.max() <= 1.0


class TestManifestIO:
    def test_round_trip(self, toy_manifest, tmp_path):
        path = tmp_path / "manifest.csv"
        write_manifest(toy_manifest, path)
        loaded = read_manifest(path)
        assert [(str(a.path), a.plant, a.condition, a.split)
                for a in toy_manifest.samples] == \
            [(str(b.path), b.plant, b.condition, b.split)
             for b in loaded.samples]

    def test_header_and_lf_endings(self, toy_manifest, tmp_path):
        path = tmp_path / "manifest.csv"
        write_manifest(toy_manifest, path)
        raw = path.read_bytes()
        assert raw.startswith(b"path,plant,condition,split\n")
        assert b"\r" not in raw

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("file,label\n/x.png,Tomato\n")
        with pytest.raises(DatasetError):
            read_manifest(path)


class TestLoadSplit:
    def test_shapes_and_ranges(self, toy_manifest):
        space = build_label_space(toy_manifest, mode="paired")
        data = load_split(toy_manifest, space, "train", side=32)
        n_train = sum(1 for s in toy_manifest.samples if s.split == "train")
        assert data.x.shape == (n_train, 32, 32, 3)
        assert data.y.shape == (n_train, space.vector_length)
        assert data.x.min() >= 0.0 and data.x.max() <= 1.0
        assert np.all(data.y.sum(axis=1) == 2.0)

    def test_missing_split_tag(self, toy_root, paired_space):
        manifest = scan_dataset(toy_root, paired_space)
        space = build_label_space(manifest, mode="paired")
        with pytest.raises(EmptyDataset):
            load_split(manifest, space, "train", side=32)

    def test_mismatched_arrays_rejected(self):
        with pytest.raises(ConfigError):
            ArrayDataset(x=np.zeros((3, 2, 2, 3)), y=np.zeros((2, 8)))
