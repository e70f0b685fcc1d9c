"""Controlled generation and attribute attention from a trained checkpoint.

Expects the checkpoint written by demos/02_train_and_evaluate.py. Produces,
under demo_out/:

- interpolation.png    a row morphing one sample into another
- scans.png            one row per attribute, the mapped latent dimension
                       swept over its empirical range, middle tile = original
- scans_attention.png  the same rows with gradient-attention overlays
- <id>_<attr>_0.png    per-slice overlay files

Run:  python demos/03_generate_and_attend.py
"""

import numpy as np

from attrvae.attention import attention_map, overlay, save_overlay_slices
from attrvae.dataio import AnnulusSpec, generate_annulus_dataset
from attrvae.generate import (
    TraversalGrid,
    TraversalRow,
    centered_scan_range,
    empirical_dim_range,
    interpolate,
    save_montage,
    scan_attribute,
    write_manifest,
)
from attrvae.model import ModelCheckpoint, decode_latents, encode_dataset
from attrvae.train import split

checkpoint = ModelCheckpoint.load("demo_out/checkpoint")
model = checkpoint.build()
mapping = checkpoint.mapping

spec = AnnulusSpec(
    n_samples=400, image_size=32, outer_radius=(9.0, 13.0),
    wall_thickness=(2.5, 4.5), scar_probability=0.65, seed=11,
)
dataset = generate_annulus_dataset(spec)
_, test_set = split(dataset, 0.7, 0)
volumes = test_set.volumes()
mu = encode_dataset(model, volumes)

# ---------------------------------------------------------------------------
# Interpolation between a thin-wall sample and a thick-wall sample.
# ---------------------------------------------------------------------------
thickness = test_set.attribute_matrix()[:, 1]
a, b = int(np.argmin(thickness)), int(np.argmax(thickness))
codes = interpolate(mu[a], mu[b], steps=8)
decoded = decode_latents(model, np.stack(codes))
grid = TraversalGrid()
grid.add(TraversalRow(
    descriptor=f"{test_set.ids()[a]}->{test_set.ids()[b]}",
    volumes=list(decoded),
    step_values=list(np.linspace(0, 1, 8)),
))
save_montage(grid, "demo_out/interpolation.png")
print("wrote demo_out/interpolation.png")

# ---------------------------------------------------------------------------
# Attribute scanning: sweep each regularized dimension, others fixed.
# ---------------------------------------------------------------------------
base = mu[0]
scans = TraversalGrid()
both = TraversalGrid()
for attr in mapping.names():
    dim = mapping.dim_of(attr)
    lo, hi = empirical_dim_range(model, volumes, dim, coverage=0.98)
    lo, hi = centered_scan_range(float(base[dim]), lo, hi)
    row = scan_attribute(model, base, attr, mapping, (lo, hi), steps=7)
    scans.add(row)
    both.add(row)

    overlays = []
    for vol in row.volumes:
        amap = attention_map(model, vol, dim, attribute_name=attr)
        overlays.append(overlay(amap, vol, alpha=0.5))
    both.add(TraversalRow(f"{attr}_attention", overlays, row.step_values))

save_montage(scans, "demo_out/scans.png")
write_manifest(scans, "demo_out/scans.csv")
save_montage(both, "demo_out/scans_attention.png")
print("wrote demo_out/scans.png and demo_out/scans_attention.png")

# ---------------------------------------------------------------------------
# Standalone overlay files for one sample, named <id>_<attr>_<slice>.png.
# ---------------------------------------------------------------------------
sid = test_set.ids()[0]
x = test_set.samples[0].volume
for attr in mapping.names():
    amap = attention_map(model, x, mapping.dim_of(attr), attribute_name=attr)
    save_overlay_slices(overlay(amap, x, alpha=0.5), "demo_out", sid, attr)
print(f"wrote overlay slices for {sid}")
