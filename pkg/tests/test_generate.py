import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrvae.generate import (
    TraversalGrid,
    TraversalRow,
    centered_scan_range,
    empirical_dim_range,
    interpolate,
    montage_array,
    save_montage,
    scan_attribute,
    write_manifest,
)
from attrvae.losses import AttributeMapping
from attrvae.model import ModelConfig, build_model, encode_dataset

CFG = ModelConfig(
    latent_dim=6,
    embedding_dim=16,
    conv_channels=(4, 4, 8, 8, 8),
    image_shape=(32, 32, 1),
    mlp_hidden=(8, 4),
)

MAPPING = AttributeMapping(entries=(("cavity_area", 0), ("wall_thickness", 1)))


@pytest.fixture(scope="module")
def model():
    return build_model(CFG, seed=21).eval()


@pytest.fixture(scope="module")
def volumes():
    return np.random.default_rng(3).random((20, 32, 32, 1)).astype(np.float32)


class TestInterpolate:
    def test_two_steps_returns_endpoints(self):
        z_a, z_b = np.zeros(4), np.ones(4)
        out = interpolate(z_a, z_b, steps=2)
        np.testing.assert_array_equal(out[0], z_a)
        np.testing.assert_array_equal(out[1], z_b)

    def test_midpoint(self):
        out = interpolate(np.zeros(3), np.full(3, 2.0), steps=3)
        np.testing.assert_array_equal(out[1], np.ones(3))

    def test_decoded_values_in_unit_interval(self, model):
        from attrvae.model import decode_latents

        codes = interpolate(np.zeros(6), np.ones(6), steps=4)
        decoded = decode_latents(model, np.stack(codes))
        assert (decoded > 0).all() and (decoded < 1).all()

    def test_rejects_single_step(self):
        with pytest.raises(ValueError):
            interpolate(np.zeros(2), np.ones(2), steps=1)

    @given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_identical_endpoints_and_reversal(self, steps, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=5)
        same = interpolate(z, z, steps)
        assert all(np.array_equal(c, z) for c in same)
        z2 = rng.normal(size=5)
        fwd = interpolate(z, z2, steps)
        rev = interpolate(z2, z, steps)
        for a, b in zip(fwd, rev[::-1]):
            np.testing.assert_allclose(a, b, atol=1e-12)


class TestScanAttribute:
    def test_step_count_and_monotone_values(self, model):
        row = scan_attribute(model, np.zeros(6), "cavity_area", MAPPING, (-2.0, 2.0), steps=7)
        assert len(row.volumes) == 7
        assert row.step_values == sorted(row.step_values)
        assert len(set(row.step_values)) == 7

    def test_other_coordinates_bitwise_fixed(self, model):
        z = np.random.default_rng(5).normal(size=6).astype(np.float32)
        d = MAPPING.dim_of("wall_thickness")
        row = scan_attribute(model, z, "wall_thickness", MAPPING, (-1.0, 1.0), steps=5)
        # re-derive the scanned codes the same way and compare against z
        codes = np.tile(z, (5, 1))
        codes[:, d] = row.step_values
        for k in range(6):
            if k != d:
                assert (codes[:, k] == z[k]).all()

    def test_unknown_attribute_rejected(self, model):
        with pytest.raises(ValueError, match="scar"):
            scan_attribute(model, np.zeros(6), "scar", MAPPING, (0.0, 1.0), steps=3)

    def test_deterministic_decoding(self, model):
        a = scan_attribute(model, np.zeros(6), "cavity_area", MAPPING, (-1.0, 1.0), steps=3)
        b = scan_attribute(model, np.zeros(6), "cavity_area", MAPPING, (-1.0, 1.0), steps=3)
        for va, vb in zip(a.volumes, b.volumes):
            np.testing.assert_array_equal(va, vb)


class TestEmpiricalDimRange:
    def test_full_coverage_is_min_max(self, model, volumes):
        mu = encode_dataset(model, volumes)
        lo, hi = empirical_dim_range(model, volumes, dim=2, coverage=1.0)
        assert lo == pytest.approx(mu[:, 2].min())
        assert hi == pytest.approx(mu[:, 2].max())

    def test_matches_direct_quantiles(self, model, volumes):
        mu = encode_dataset(model, volumes)
        lo, hi = empirical_dim_range(model, volumes, dim=1, coverage=0.9)
        np.testing.assert_allclose([lo, hi], np.quantile(mu[:, 1], [0.05, 0.95]), atol=1e-7)

    def test_constant_dimension_degenerates(self, model, volumes):
        vol = np.repeat(volumes[:1], 4, axis=0)
        lo, hi = empirical_dim_range(model, vol, dim=0, coverage=0.98)
        assert lo == hi
        row = scan_attribute(model, np.zeros(6), "cavity_area", MAPPING, (lo, hi), steps=3)
        for v in row.volumes[1:]:
            np.testing.assert_array_equal(v, row.volumes[0])


class TestCenteredScanRange:
    def test_centers_on_coordinate(self):
        lo, hi = centered_scan_range(1.0, 0.0, 4.0)
        assert (lo + hi) / 2 == pytest.approx(1.0)
        assert lo >= 0.0 and hi <= 4.0

    def test_middle_step_reproduces_original(self):
        lo, hi = centered_scan_range(1.3, -2.0, 4.0)
        vals = np.linspace(lo, hi, 7)
        assert vals[3] == pytest.approx(1.3)

    def test_out_of_range_falls_back(self):
        assert centered_scan_range(9.0, 0.0, 4.0) == (0.0, 4.0)


class TestRendering:
    def test_montage_and_manifest(self, tmp_path, model):
        grid = TraversalGrid()
        grid.add(scan_attribute(model, np.zeros(6), "cavity_area", MAPPING, (-1.0, 1.0), steps=4))
        grid.add(scan_attribute(model, np.zeros(6), "wall_thickness", MAPPING, (-1.0, 1.0), steps=4))
        arr = montage_array(grid)
        assert arr.shape == (2 * 32 + 2, 4 * 32 + 6)

        png = save_montage(grid, tmp_path / "grid.png")
        manifest = write_manifest(grid, tmp_path / "grid.csv")
        assert png.exists()
        with open(manifest) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        values = [float(r["value"]) for r in rows if r["attribute"] == "cavity_area"]
        assert values == sorted(values)
