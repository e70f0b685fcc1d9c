"""Synthetic annulus dataset generation, dataset (de)serialization, preprocessing,
class balancing, and attribute selection.

Volumes are dense float32 grids with intensities in [0, 1]. The canonical layout
is rank-3 ``(X, Y, Z)``; 2D images are carried as ``(X, Y, 1)`` so the rest of
the toolkit stays rank-agnostic.

On-disk format: one ``<id>.f32`` raw little-endian float32 file (C order) plus a
``<id>.shape`` sidecar with the axis sizes, and a single ``attributes.csv`` with
header ``id,<attr1>,...,<attrK>,label``.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.svm import LinearSVC

CAVITY_INTENSITY = 0.55
SCAR_DARKEN = 0.35  # scar keeps 35% of the local wall intensity

ANNULUS_ATTRIBUTES = ("cavity_area", "wall_thickness", "wall_intensity", "scar_fraction")


@dataclass(frozen=True)
class Sample:
    """One observation: an intensity volume, named scalar attributes, a binary label."""

    id: str
    volume: np.ndarray
    attributes: dict[str, float]
    label: int


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples sharing one volume shape and attribute set."""

    samples: tuple[Sample, ...]
    attribute_names: tuple[str, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        keys = tuple(self.attribute_names)
        for s in self.samples:
            if s.volume.shape != self.shape:
                raise ValueError(
                    f"sample {s.id!r} has shape {s.volume.shape}, dataset shape is {self.shape}"
                )
            if tuple(s.attributes.keys()) != keys:
                raise ValueError(f"sample {s.id!r} attribute keys differ from dataset order")

    def __len__(self) -> int:
        return len(self.samples)

    def attribute_matrix(self) -> np.ndarray:
        """(n, K) float64 matrix in ``attribute_names`` column order."""
        return np.array(
            [[s.attributes[a] for a in self.attribute_names] for s in self.samples],
            dtype=np.float64,
        )

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def volumes(self) -> np.ndarray:
        """(n, *shape) float32 stack of all volumes."""
        return np.stack([s.volume for s in self.samples]).astype(np.float32)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def content_hash(self) -> str:
        """Order-sensitive sha256 over volumes, attributes, and labels."""
        h = hashlib.sha256()
        for s in self.samples:
            h.update(s.id.encode())
            h.update(np.ascontiguousarray(s.volume, dtype="<f4").tobytes())
            for a in self.attribute_names:
                h.update(np.float64(s.attributes[a]).tobytes())
            h.update(bytes([s.label]))
        return h.hexdigest()


@dataclass(frozen=True)
class AnnulusSpec:
    """Generative recipe for the synthetic annulus cohort.

    Each sample is a bright ring (the wall) around a mid-gray cavity on a dark
    background. With probability ``scar_probability`` an angular sector of the
    wall is darkened; the sector's angular fraction is the ``scar_fraction``
    attribute and also determines the binary label.

    Ranges are ``(lo, hi)`` intervals sampled uniformly. ``volumetric=True``
    renders a hollow sphere of shape ``(S, S, S)`` instead of an ``(S, S, 1)``
    ring, with the scar sector taken in azimuth.
    """

    n_samples: int
    image_size: int = 64
    outer_radius: tuple[float, float] = (18.0, 28.0)
    wall_thickness: tuple[float, float] = (4.0, 10.0)
    wall_intensity: tuple[float, float] = (0.65, 1.0)
    scar_fraction: tuple[float, float] = (0.1, 0.5)
    scar_probability: float = 0.65
    seed: int = 0
    volumetric: bool = False

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError(f"n_samples must be positive, got {self.n_samples}")
        if self.image_size <= 0:
            raise ValueError(f"image_size must be positive, got {self.image_size}")
        for name in ("outer_radius", "wall_thickness", "wall_intensity", "scar_fraction"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"{name} range ({lo}, {hi}) is not a valid [lo, hi] interval")
        if self.wall_thickness[1] >= self.outer_radius[0]:
            raise ValueError(
                "wall_thickness.hi must be < outer_radius.lo so the annulus keeps a cavity; "
                f"got wall_thickness.hi={self.wall_thickness[1]}, outer_radius.lo={self.outer_radius[0]}"
            )
        if not (0.0 <= self.scar_fraction[0] and self.scar_fraction[1] <= 0.5):
            raise ValueError(f"scar_fraction range {self.scar_fraction} must lie within [0, 0.5]")
        if not 0.0 <= self.scar_probability <= 1.0:
            raise ValueError(f"scar_probability must be in [0, 1], got {self.scar_probability}")
        if self.outer_radius[1] + 1.0 > self.image_size / 2:
            raise ValueError(
                f"outer_radius.hi={self.outer_radius[1]} does not fit in image_size={self.image_size}"
            )


def _render_annulus(
    size: int,
    volumetric: bool,
    r_outer: float,
    r_inner: float,
    wall_val: float,
    scar_frac: float,
    scar_start: float,
) -> np.ndarray:
    """Rasterize one annulus with half-pixel soft edges; returns rank-3 float32."""
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    if volumetric:
        x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
        r = np.sqrt(x**2 + y**2 + z**2)
        theta = np.arctan2(y, x)
    else:
        x, y = np.meshgrid(ax, ax, indexing="ij")
        r = np.sqrt(x**2 + y**2)
        theta = np.arctan2(y, x)

    w_out = np.clip(r_outer + 0.5 - r, 0.0, 1.0)
    w_in = np.clip(r_inner + 0.5 - r, 0.0, 1.0)

    wall = np.full_like(r, wall_val)
    if scar_frac > 0:
        in_sector = np.mod(theta - scar_start, 2 * np.pi) < 2 * np.pi * scar_frac
        wall = np.where(in_sector, wall_val * SCAR_DARKEN, wall)

    img = wall * (w_out - w_in) + CAVITY_INTENSITY * w_in
    img = img.astype(np.float32)
    if not volumetric:
        img = img[:, :, None]
    return img


def generate_annulus_dataset(spec: AnnulusSpec) -> Dataset:
    """Generate the synthetic annulus cohort described by ``spec``.

    Deterministic for a fixed seed. Recorded attributes per sample:

    - ``cavity_area``: voxel count strictly inside the inner radius
    - ``wall_thickness``: outer minus inner radius
    - ``wall_intensity``: wall brightness before scar darkening
    - ``scar_fraction``: angular fraction of the darkened sector (0 if none)

    The label is 1 iff ``scar_fraction > 0``.
    """
    rng = np.random.default_rng(spec.seed)
    size = spec.image_size
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    if spec.volumetric:
        x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
        r = np.sqrt(x**2 + y**2 + z**2)
    else:
        x, y = np.meshgrid(ax, ax, indexing="ij")
        r = np.sqrt(x**2 + y**2)

    samples = []
    for i in range(spec.n_samples):
        r_out = rng.uniform(*spec.outer_radius)
        thickness = rng.uniform(*spec.wall_thickness)
        wall_val = rng.uniform(*spec.wall_intensity)
        scarred = rng.random() < spec.scar_probability
        scar_frac = rng.uniform(*spec.scar_fraction) if scarred else 0.0
        scar_start = rng.uniform(0.0, 2 * np.pi)

        r_in = r_out - thickness
        volume = _render_annulus(
            size, spec.volumetric, r_out, r_in, wall_val, scar_frac, scar_start
        )
        cavity_area = float(np.count_nonzero(r < r_in))
        samples.append(
            Sample(
                id=f"annulus{i:05d}",
                volume=volume,
                attributes={
                    "cavity_area": cavity_area,
                    "wall_thickness": float(thickness),
                    "wall_intensity": float(wall_val),
                    "scar_fraction": float(scar_frac),
                },
                label=int(scar_frac > 0),
            )
        )

    shape = samples[0].volume.shape
    return Dataset(samples=tuple(samples), attribute_names=ANNULUS_ATTRIBUTES, shape=shape)


def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write volumes (`.f32` + `.shape` sidecars) and `attributes.csv` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s in dataset.samples:
        (out / f"{s.id}.f32").write_bytes(np.ascontiguousarray(s.volume, dtype="<f4").tobytes())
        (out / f"{s.id}.shape").write_text(" ".join(str(d) for d in s.volume.shape) + "\n")
    with open(out / "attributes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *dataset.attribute_names, "label"])
        for s in dataset.samples:
            writer.writerow(
                [s.id, *(repr(float(s.attributes[a])) for a in dataset.attribute_names), s.label]
            )
    return out / "attributes.csv"


def load_dataset(volume_dir: str | Path, attribute_table: str | Path) -> Dataset:
    """Load a dataset from a volume directory and an attribute CSV.

    The CSV header must be ``id,<attr...>,label``; every id must resolve to a
    ``<id>.f32`` / ``<id>.shape`` pair under ``volume_dir``. Volumes are loaded
    as stored (no normalization applied).
    """
    volume_dir = Path(volume_dir)
    with open(attribute_table, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"attribute table {attribute_table} is empty")
    header = rows[0]
    if len(header) < 2 or header[0] != "id" or header[-1] != "label":
        raise ValueError(f"attribute table header must be 'id,<attr...>,label', got {header}")
    attr_names = tuple(header[1:-1])

    samples = []
    for row_idx, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"row {row_idx}: expected {len(header)} cells, got {len(row)}")
        sid = row[0]
        attrs = {}
        for name, cell in zip(attr_names, row[1:-1]):
            try:
                attrs[name] = float(cell)
            except ValueError:
                raise ValueError(
                    f"non-numeric attribute cell at row {row_idx}, column {name!r}: {cell!r}"
                ) from None
        try:
            label = int(float(row[-1]))
        except ValueError:
            raise ValueError(f"non-numeric label at row {row_idx}: {row[-1]!r}") from None
        if label not in (0, 1):
            raise ValueError(f"label at row {row_idx} must be 0 or 1, got {label}")

        f32_path = volume_dir / f"{sid}.f32"
        shape_path = volume_dir / f"{sid}.shape"
        if not f32_path.exists() or not shape_path.exists():
            raise ValueError(f"missing volume files for id {sid!r} under {volume_dir}")
        shape = tuple(int(t) for t in shape_path.read_text().split())
        volume = np.frombuffer(f32_path.read_bytes(), dtype="<f4").reshape(shape).copy()
        samples.append(Sample(id=sid, volume=volume, attributes=attrs, label=label))

    if not samples:
        raise ValueError(f"attribute table {attribute_table} has no data rows")
    return Dataset(samples=tuple(samples), attribute_names=attr_names, shape=samples[0].volume.shape)


def _center_crop_pad(volume: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    out = volume
    for axis, (cur, tgt) in enumerate(zip(out.shape, target_shape)):
        if cur > tgt:
            start = (cur - tgt) // 2
            out = out.take(range(start, start + tgt), axis=axis)
        elif cur < tgt:
            before = (tgt - cur) // 2
            pad = [(0, 0)] * out.ndim
            pad[axis] = (before, tgt - cur - before)
            out = np.pad(out, pad, mode="constant")
    return out


def preprocess(volume: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """Center-crop/zero-pad to ``target_shape`` and min-max scale to [0, 1].

    Scaling happens after the spatial adjustment so the result is idempotent.
    A constant input yields all zeros.
    """
    volume = np.asarray(volume, dtype=np.float32)
    if volume.size == 0:
        raise ValueError("volume is empty")
    if volume.ndim != len(target_shape):
        raise ValueError(f"volume rank {volume.ndim} does not match target_shape {target_shape}")
    vmin, vmax = float(volume.min()), float(volume.max())
    if vmax == vmin:
        return np.zeros(target_shape, dtype=np.float32)
    out = _center_crop_pad(volume, tuple(target_shape))
    omin, omax = float(out.min()), float(out.max())
    if omax == omin:
        return np.zeros(target_shape, dtype=np.float32)
    return ((out - omin) / (omax - omin)).astype(np.float32)


def oversample_minority(dataset: Dataset, seed: int) -> Dataset:
    """Balance classes by re-drawing minority samples with replacement.

    All original samples are kept; extra minority duplicates are appended until
    class counts match, then the ordering is reshuffled deterministically.
    """
    labels = dataset.labels()
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("oversampling requires both classes present")
    rng = np.random.default_rng(seed)
    n_by_class = {int(c): int(np.sum(labels == c)) for c in classes}
    minority = min(n_by_class, key=n_by_class.get)
    deficit = max(n_by_class.values()) - n_by_class[minority]

    pool = [s for s in dataset.samples if s.label == minority]
    extra = [pool[j] for j in rng.integers(0, len(pool), size=deficit)]
    combined = list(dataset.samples) + extra
    order = rng.permutation(len(combined))
    return Dataset(
        samples=tuple(combined[j] for j in order),
        attribute_names=dataset.attribute_names,
        shape=dataset.shape,
    )


def rfe_select(dataset: Dataset, n_keep: int) -> list[str]:
    """Rank attributes by recursive elimination under a linear margin classifier.

    Attributes are standardized, a linear classifier (C=10) is fitted, and the
    attribute with the smallest absolute weight is removed; repeating to the end
    yields a full importance ranking. The ``n_keep`` survivors are returned most
    important first.
    """
    if not 0 < n_keep <= len(dataset.attribute_names):
        raise ValueError(
            f"n_keep must be in [1, {len(dataset.attribute_names)}], got {n_keep}"
        )
    y = dataset.labels()
    if np.unique(y).size < 2:
        raise ValueError("rfe_select requires both classes present")
    X = dataset.attribute_matrix()
    std = X.std(axis=0)
    std[std == 0] = 1.0
    X = (X - X.mean(axis=0)) / std

    remaining = list(range(X.shape[1]))
    eliminated: list[int] = []
    while len(remaining) > 1:
        clf = LinearSVC(C=10.0, dual=False, max_iter=5000, random_state=0)
        clf.fit(X[:, remaining], y)
        weights = np.abs(clf.coef_.ravel())
        drop = remaining[int(np.argmin(weights))]
        eliminated.append(drop)
        remaining.remove(drop)

    ranking = remaining + eliminated[::-1]  # most important first
    return [dataset.attribute_names[j] for j in ranking[:n_keep]]
