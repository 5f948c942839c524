import json

import numpy as np
import pytest

from fusionseg.errors import ConfigurationError
from fusionseg.synthdata import (SceneSpec, gen_label_mask,
                                 load_split, make_dataset, quantize_u8,
                                 read_pgm, render_optical, render_sar,
                                 sample_speckle, write_pgm)


def rng_for(seed):
    return np.random.Generator(np.random.PCG64(seed))


class TestMask:
    def test_no_farms(self):
        spec = SceneSpec(farm_count_range=(0, 0))
        assert np.all(gen_label_mask(spec, rng_for(0)) == 0)

    def test_two_valued(self):
        spec = SceneSpec()
        for seed in range(10):
            mask = gen_label_mask(spec, rng_for(seed))
            assert set(np.unique(mask)) <= {0, 255}

    def test_deterministic(self):
        spec = SceneSpec()
        a = gen_label_mask(spec, rng_for(42))
        b = gen_label_mask(spec, rng_for(42))
        assert np.array_equal(a, b)

    def test_oversized_cells_rejected(self):
        spec = SceneSpec(image_size=32, farm_cell_size_range=(8, 40))
        with pytest.raises(ConfigurationError):
            gen_label_mask(spec, rng_for(0))


class TestOptical:
    def test_noiseless_two_levels(self):
        spec = SceneSpec(optical_noise_sigma=0.0)
        mask = gen_label_mask(spec, rng_for(1))
        img = render_optical(mask, spec, rng_for(2))
        assert set(np.unique(img)) <= {spec.optical_background,
                                       spec.optical_foreground}

    def test_clamped(self):
        spec = SceneSpec(optical_noise_sigma=0.5)
        mask = gen_label_mask(spec, rng_for(3))
        img = render_optical(mask, spec, rng_for(4))
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_foreground_mean(self):
        spec = SceneSpec(optical_foreground=0.7)
        mask = np.full((64, 64), 255, dtype=np.uint8)
        img = render_optical(mask, spec, rng_for(5))
        assert abs(img.mean() - 0.7) < 0.02


class TestSpeckle:
    def test_single_look_is_exponential(self):
        s = sample_speckle((100000,), 1, rng_for(6))
        # exponential: mean 1, variance 1, P(X > 1) = e^-1
        assert abs(s.mean() - 1.0) < 0.05
        assert abs(np.mean(s > 1.0) - np.exp(-1)) < 0.01

    def test_mean_one(self):
        s = sample_speckle((100000,), 4, rng_for(7))
        assert abs(s.mean() - 1.0) < 0.05

    def test_variance_quarter_at_four_looks(self):
        s = sample_speckle((100000,), 4, rng_for(8))
        assert abs(s.var() - 0.25) < 0.025

    def test_pixel_independence(self):
        s = sample_speckle((100000,), 4, rng_for(9))
        centered = s - s.mean()
        rho = np.mean(centered[:-1] * centered[1:]) / s.var()
        assert abs(rho) < 0.02

    def test_sar_in_unit_interval(self):
        spec = SceneSpec()
        mask = gen_label_mask(spec, rng_for(10))
        img = render_sar(mask, spec, rng_for(11))
        assert img.min() >= 0.0 and img.max() <= 1.0


class TestPgm:
    def test_roundtrip(self, tmp_path):
        img = np.arange(64, dtype=np.uint8).reshape(8, 8)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_quantize(self):
        q = quantize_u8(np.array([0.0, 0.5, 1.0]))
        assert list(q) == [0, 128, 255]


class TestMakeDataset:
    def test_single_sample(self, tmp_path):
        spec = SceneSpec()
        manifest = make_dataset(spec, tmp_path, 1, 0, 0, seed=0)
        assert len(manifest["splits"]["train"]) == 1
        assert len(manifest["splits"]["val"]) == 0
        sar, masks, optical = load_split(tmp_path, "train")
        assert sar.shape == (1, 1, 64, 64)
        assert set(np.unique(masks)) <= {0.0, 1.0}

    def test_byte_identical_regeneration(self, tmp_path):
        spec = SceneSpec()
        make_dataset(spec, tmp_path / "a", 3, 1, 1, seed=5)
        make_dataset(spec, tmp_path / "b", 3, 1, 1, seed=5)
        for rel in json.loads((tmp_path / "a" / "manifest.json").read_text()
                              )["splits"]["train"][0].values():
            assert ((tmp_path / "a" / rel).read_bytes()
                    == (tmp_path / "b" / rel).read_bytes())

    def test_default_split_ratio(self):
        # desk-scale 200/40 mirrors the 3200:600 train:val proportion
        assert 200 / 40 == pytest.approx(3200 / 600, rel=0.07)

    def test_derived_seeds_differ_across_samples(self, tmp_path):
        make_dataset(SceneSpec(), tmp_path, 2, 0, 0, seed=9)
        sar, _, _ = load_split(tmp_path, "train")
        assert not np.array_equal(sar[0], sar[1])
