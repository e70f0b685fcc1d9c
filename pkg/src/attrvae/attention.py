"""Gradient-based attention maps for regularized latent dimensions.

A chosen latent coordinate (taken at the posterior mean, so maps are
deterministic) is backpropagated to the encoder's last conv feature maps; each
map is weighted by the spatial mean of its gradient, the weighted sum is
rectified, upsampled to input resolution, and max-normalized to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .model import AttrVae, reparameterize, volumes_to_tensor

HEAT_COLORMAP = "inferno"


@dataclass(frozen=True)
class AttentionMap:
    """Nonnegative heat grid at input resolution, normalized to [0, 1]."""

    heat: np.ndarray
    dimension_index: int
    attribute_name: str = ""


def gap_weights(
    model: AttrVae,
    x: np.ndarray | torch.Tensor,
    dim: int,
    use_sampled_z: bool = False,
    noise: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-feature-map weights: global average pooling of d z[dim] / d F_i.

    Returns (weights (C,), feature maps (C, *spatial)) for a single input.
    Default path differentiates the posterior mean; ``use_sampled_z`` follows
    the sampled code instead, with caller-supplied noise.
    """
    if dim < 0 or dim >= model.config.latent_dim:
        raise ValueError(f"dim {dim} out of range for latent_dim {model.config.latent_dim}")
    model.eval()
    if not isinstance(x, torch.Tensor):
        x = volumes_to_tensor(np.asarray(x), model.config)
        x = x.to(next(model.parameters()).dtype)
    if x.shape[0] != 1:
        raise ValueError(f"attention expects a single sample, got batch {x.shape[0]}")

    feats = model.features(x)
    mu, logvar = model.latent_from_features(feats)
    if use_sampled_z:
        if noise is None:
            raise ValueError("use_sampled_z requires an explicit noise vector")
        target = reparameterize(mu, logvar, noise)[0, dim]
    else:
        target = mu[0, dim]
    grads = torch.autograd.grad(target, feats)[0][0]  # (C, *spatial)
    spatial_axes = tuple(range(1, grads.ndim))
    weights = grads.mean(dim=spatial_axes)
    return weights, feats.detach()[0]


def attention_map(
    model: AttrVae,
    x: np.ndarray | torch.Tensor,
    dim: int,
    attribute_name: str = "",
    use_sampled_z: bool = False,
    noise: torch.Tensor | None = None,
) -> AttentionMap:
    """Rectified, GAP-weighted sum of the last conv feature maps for ``dim``,
    upsampled to the input resolution and max-normalized (an all-zero map
    stays all-zero)."""
    weights, feats = gap_weights(model, x, dim, use_sampled_z=use_sampled_z, noise=noise)
    cam = torch.relu((weights.reshape(-1, *([1] * (feats.ndim - 1))) * feats).sum(dim=0))

    spatial = model.config.spatial_shape()
    mode = "bilinear" if model.config.is_2d() else "trilinear"
    cam = F.interpolate(
        cam[None, None].to(torch.float32), size=spatial, mode=mode, align_corners=False
    )[0, 0]
    heat = cam.detach().cpu().numpy().astype(np.float32)
    peak = float(heat.max())
    if peak > 0:
        heat = heat / peak
    if model.config.is_2d():
        heat = heat[..., None]
    return AttentionMap(heat=heat, dimension_index=dim, attribute_name=attribute_name)


def overlay(amap: AttentionMap, x: np.ndarray, alpha: float) -> np.ndarray:
    """Blend the heat map over the grayscale volume, slice by slice.

    Returns an (X, Y, Z, 3) float array in [0, 1]; alpha 0 keeps the input,
    alpha 1 shows the pure colormap.
    """
    x = np.asarray(x, dtype=np.float32)
    heat = amap.heat
    if x.shape != heat.shape:
        raise ValueError(f"volume shape {x.shape} does not match heat shape {heat.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    cmap = matplotlib.colormaps[HEAT_COLORMAP]
    gray = np.repeat(np.clip(x, 0.0, 1.0)[..., None], 3, axis=-1)
    colored = cmap(np.clip(heat, 0.0, 1.0))[..., :3].astype(np.float32)
    return (1.0 - alpha) * gray + alpha * colored


def save_overlay_slices(
    stack: np.ndarray, out_dir: str | Path, sample_id: str, attribute_name: str
) -> list[Path]:
    """Write one PNG per z-slice, named ``<sample>_<attr>_<slice>.png``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in range(stack.shape[2]):
        img = (np.clip(stack[:, :, s], 0.0, 1.0) * 255).round().astype(np.uint8)
        path = out_dir / f"{sample_id}_{attribute_name}_{s}.png"
        Image.fromarray(img).save(path)
        paths.append(path)
    return paths


def save_heat_raw(amap: AttentionMap, out_dir: str | Path, name: str) -> Path:
    """Dump the raw heat grid in the dataset volume format (.f32 + .shape)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.f32").write_bytes(np.ascontiguousarray(amap.heat, dtype="<f4").tobytes())
    (out_dir / f"{name}.shape").write_text(" ".join(str(d) for d in amap.heat.shape) + "\n")
    return out_dir / f"{name}.f32"
