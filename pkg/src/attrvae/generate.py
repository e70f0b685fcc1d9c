"""Latent-space interpolation and per-attribute scanning.

Scanning replaces one regularized latent coordinate with equally spaced values
(all other coordinates untouched) and decodes the sequence; interpolation walks
the straight line between two codes. Grids render as tiled PNG montages with a
CSV manifest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .losses import AttributeMapping
from .model import AttrVae, decode_latents, encode_dataset


@dataclass(frozen=True)
class TraversalRow:
    descriptor: str
    volumes: list[np.ndarray]
    step_values: list[float]


@dataclass
class TraversalGrid:
    rows: list[TraversalRow] = field(default_factory=list)

    def add(self, row: TraversalRow) -> None:
        # overlay rows may carry a trailing color channel; spatial dims must agree
        if self.rows and row.volumes[0].shape[:3] != self.rows[0].volumes[0].shape[:3]:
            raise ValueError("all rows in a grid must share the decoded volume shape")
        self.rows.append(row)


def interpolate(z_a: np.ndarray, z_b: np.ndarray, steps: int) -> list[np.ndarray]:
    """Evenly spaced codes on the segment [z_a, z_b]; endpoints are exact."""
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape:
        raise ValueError(f"endpoint shapes differ: {z_a.shape} vs {z_b.shape}")
    # a + t*(b - a) keeps equal endpoints bit-identical; the final step is
    # pinned so both endpoints are exact
    diff = z_b - z_a
    out = [z_a + t * diff for t in np.linspace(0.0, 1.0, steps - 1, endpoint=False)]
    out.append(z_b.copy())
    return out


def scan_attribute(
    model: AttrVae,
    z: np.ndarray,
    attribute: str,
    mapping: AttributeMapping,
    dim_range: tuple[float, float],
    steps: int = 7,
) -> TraversalRow:
    """Decode ``steps`` copies of ``z`` whose mapped coordinate sweeps
    ``dim_range``; every other coordinate is left bitwise unchanged."""
    if attribute not in mapping.names():
        raise ValueError(f"attribute {attribute!r} not in mapping {mapping.names()}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    d = mapping.dim_of(attribute)
    lo, hi = float(dim_range[0]), float(dim_range[1])
    values = np.linspace(lo, hi, steps)
    codes = np.tile(np.asarray(z, dtype=np.float32), (steps, 1))
    codes[:, d] = values
    volumes = decode_latents(model, codes)
    return TraversalRow(
        descriptor=attribute,
        volumes=[volumes[i] for i in range(steps)],
        step_values=[float(v) for v in values],
    )


def centered_scan_range(z_d: float, lo: float, hi: float) -> tuple[float, float]:
    """Largest window centered on ``z_d`` that stays inside [lo, hi].

    With an odd step count the middle scanned value then reproduces the
    original coordinate. Falls back to [lo, hi] when z_d lies outside it.
    """
    if not lo <= z_d <= hi:
        return lo, hi
    radius = min(z_d - lo, hi - z_d)
    if radius <= 0:
        return lo, hi
    return z_d - radius, z_d + radius


def empirical_dim_range(
    model: AttrVae, volumes: np.ndarray, dim: int, coverage: float = 0.98
) -> tuple[float, float]:
    """Central ``coverage`` quantile interval of the encoded means at ``dim``."""
    if not 0.0 < coverage <= 1.0:
        raise ValueError(f"coverage must be in (0, 1], got {coverage}")
    if len(volumes) == 0:
        raise ValueError("empirical_dim_range needs a nonempty dataset")
    mu = encode_dataset(model, volumes)
    tail = (1.0 - coverage) / 2.0
    lo, hi = np.quantile(mu[:, dim], [tail, 1.0 - tail])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _tile_to_u8(volume: np.ndarray) -> np.ndarray:
    """Middle z-slice (or the only one) as a uint8 grayscale tile."""
    vol = np.asarray(volume)
    if vol.ndim == 3:
        vol = vol[:, :, vol.shape[2] // 2]
    return (np.clip(vol, 0.0, 1.0) * 255).round().astype(np.uint8)


def montage_array(grid: TraversalGrid, pad: int = 2) -> np.ndarray:
    """Tile rows x steps into one uint8 image (RGB tiles pass through)."""
    if not grid.rows:
        raise ValueError("empty traversal grid")
    tiles = [[_prep_tile(v) for v in row.volumes] for row in grid.rows]
    th, tw = tiles[0][0].shape[:2]
    n_rows = len(tiles)
    n_cols = max(len(r) for r in tiles)
    channels = 3 if any(t.ndim == 3 for row in tiles for t in row) else 1
    canvas = np.zeros(
        (n_rows * (th + pad) - pad, n_cols * (tw + pad) - pad, channels), dtype=np.uint8
    )
    for i, row in enumerate(tiles):
        for j, tile in enumerate(row):
            if tile.ndim == 2:
                tile = tile[..., None]
            if tile.shape[2] != channels:
                tile = np.repeat(tile, channels, axis=2)
            canvas[i * (th + pad) : i * (th + pad) + th, j * (tw + pad) : j * (tw + pad) + tw] = tile
    return canvas.squeeze(-1) if channels == 1 else canvas


def _prep_tile(volume: np.ndarray) -> np.ndarray:
    vol = np.asarray(volume)
    if vol.ndim == 4:  # already colored (X, Y, Z, 3)
        mid = vol[:, :, vol.shape[2] // 2, :]
        return (np.clip(mid, 0.0, 1.0) * 255).round().astype(np.uint8)
    return _tile_to_u8(vol)


def save_montage(grid: TraversalGrid, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(montage_array(grid)).save(out_path)
    return out_path


def write_manifest(grid: TraversalGrid, out_path: str | Path) -> Path:
    """CSV manifest: one line per tile with row, column, scanned value, attribute."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "column", "value", "attribute"])
        for i, row in enumerate(grid.rows):
            for j, value in enumerate(row.step_values):
                writer.writerow([i, j, repr(float(value)), row.descriptor])
    return out_path
