"""Convolutional encoder/decoder with reparameterized latent sampling and an
MLP classification head reading the latent code.

The encoder is five conv layers (kernel 3, strides 2,2,2,2,1), each with batch
norm + ReLU, flattened into three fully connected layers that end at the
embedding; two parallel linear heads emit the latent mean and log-variance.
The decoder mirrors it with nearest-neighbor upsampling, and its final conv is
squashed by a sigmoid so outputs live in (0, 1).

Volumes of shape ``(X, Y, 1)`` run through the 2D stack; true 3D shapes use
the 3D stack. Both paths share all code via a dimensionality switch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .losses import AttributeMapping, Toggles

N_CONV_LAYERS = 5
CONV_STRIDES = (2, 2, 2, 2, 1)


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 64
    embedding_dim: int = 250
    conv_channels: tuple[int, ...] = (16, 32, 64, 64, 64)
    image_shape: tuple[int, ...] = (64, 64, 1)
    mlp_hidden: tuple[int, int] = (32, 16)
    recon_loss_kind: str = "bce"
    use_beta: bool = True
    use_mlp: bool = True
    use_ar: bool = True

    def __post_init__(self):
        if len(self.conv_channels) != N_CONV_LAYERS:
            raise ValueError(f"conv_channels needs exactly {N_CONV_LAYERS} entries, got {self.conv_channels}")
        if self.latent_dim <= 0 or self.embedding_dim <= 0:
            raise ValueError("latent_dim and embedding_dim must be positive")
        if self.latent_dim > self.embedding_dim:
            raise ValueError(
                f"latent_dim {self.latent_dim} must not exceed embedding_dim {self.embedding_dim}"
            )
        if self.recon_loss_kind not in ("bce", "mse"):
            raise ValueError(f"recon_loss_kind must be 'bce' or 'mse', got {self.recon_loss_kind!r}")
        shape = tuple(self.image_shape)
        if len(shape) == 2:
            shape = (*shape, 1)
            object.__setattr__(self, "image_shape", shape)
        if len(shape) != 3:
            raise ValueError(f"image_shape must be (X, Y) or (X, Y, Z), got {shape}")
        down = 2 ** CONV_STRIDES.count(2)
        for extent in self.spatial_shape():
            if extent % down != 0:
                raise ValueError(
                    f"spatial extents must be divisible by {down} for the conv stack, got {shape}"
                )

    def is_2d(self) -> bool:
        return self.image_shape[2] == 1

    def spatial_shape(self) -> tuple[int, ...]:
        """Shape seen by the conv stack: (X, Y) in 2D mode, (X, Y, Z) in 3D."""
        return self.image_shape[:2] if self.is_2d() else self.image_shape

    @property
    def toggles(self) -> Toggles:
        return Toggles(use_beta=self.use_beta, use_mlp=self.use_mlp, use_ar=self.use_ar)

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "embedding_dim": self.embedding_dim,
            "conv_channels": list(self.conv_channels),
            "image_shape": list(self.image_shape),
            "mlp_hidden": list(self.mlp_hidden),
            "recon_loss_kind": self.recon_loss_kind,
            "use_beta": self.use_beta,
            "use_mlp": self.use_mlp,
            "use_ar": self.use_ar,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ModelConfig keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("conv_channels", "image_shape", "mlp_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class ForwardOutput(NamedTuple):
    """Latent code (mu, logvar, sampled z) plus reconstruction and class score."""

    x_hat: torch.Tensor
    mu: torch.Tensor
    logvar: torch.Tensor
    z: torch.Tensor
    y_c: torch.Tensor


def reparameterize(mu: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """z = mu + noise * exp(logvar / 2); noise is supplied by the caller."""
    return mu + noise * torch.exp(0.5 * logvar)


class AttrVae(nn.Module):
    """Encoder, decoder, and latent classifier in one module."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        nd = 2 if config.is_2d() else 3
        conv = nn.Conv2d if nd == 2 else nn.Conv3d
        bn = nn.BatchNorm2d if nd == 2 else nn.BatchNorm3d
        self._nd = nd

        chans = (1, *config.conv_channels)
        enc = []
        for c_in, c_out, stride in zip(chans[:-1], chans[1:], CONV_STRIDES):
            enc += [conv(c_in, c_out, kernel_size=3, stride=stride, padding=1), bn(c_out), nn.ReLU(inplace=True)]
        self.encoder_conv = nn.Sequential(*enc)

        spatial = config.spatial_shape()
        self._feat_shape = tuple(s // 2 ** CONV_STRIDES.count(2) for s in spatial)
        flat = config.conv_channels[-1] * int(np.prod(self._feat_shape))
        emb = config.embedding_dim
        self.encoder_fc = nn.Sequential(
            nn.Linear(flat, 512), nn.ReLU(inplace=True),
            nn.Linear(512, emb), nn.ReLU(inplace=True),
            nn.Linear(emb, emb), nn.ReLU(inplace=True),
        )
        self.mu_head = nn.Linear(emb, config.latent_dim)
        self.logvar_head = nn.Linear(emb, config.latent_dim)

        self.decoder_fc = nn.Sequential(
            nn.Linear(config.latent_dim, emb), nn.ReLU(inplace=True),
            nn.Linear(emb, emb), nn.ReLU(inplace=True),
            nn.Linear(emb, 512), nn.ReLU(inplace=True),
            nn.Linear(512, flat), nn.ReLU(inplace=True),
        )
        rev = config.conv_channels[::-1]
        up = nn.Upsample(scale_factor=2, mode="nearest")
        dec = [conv(rev[0], rev[1], kernel_size=3, padding=1), bn(rev[1]), nn.ReLU(inplace=True)]
        for c_in, c_out in zip(rev[1:-1], rev[2:]):
            dec += [up, conv(c_in, c_out, kernel_size=3, padding=1), bn(c_out), nn.ReLU(inplace=True)]
        dec += [up, conv(rev[-1], 1, kernel_size=3, padding=1), nn.Sigmoid()]
        self.decoder_conv = nn.Sequential(*dec)

        hidden = config.mlp_hidden
        self.classifier = nn.Sequential(
            nn.Linear(config.latent_dim, hidden[0]), nn.ReLU(inplace=True),
            nn.Linear(hidden[0], hidden[1]), nn.ReLU(inplace=True),
            nn.Linear(hidden[1], 1), nn.Sigmoid(),
        )

    def _check_input(self, x: torch.Tensor) -> None:
        expect = (1, *self.config.spatial_shape())
        if tuple(x.shape[1:]) != expect:
            raise ValueError(
                f"input shape {tuple(x.shape[1:])} does not match expected {expect} (batch excluded)"
            )

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Activations of the last encoder conv block (batch, C, *spatial)."""
        self._check_input(x)
        return self.encoder_conv(x)

    def latent_from_features(self, feats: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.encoder_fc(feats.flatten(start_dim=1))
        return self.mu_head(h), self.logvar_head(h)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.latent_from_features(self.features(x))

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        h = self.decoder_fc(z)
        h = h.reshape(z.shape[0], self.config.conv_channels[-1], *self._feat_shape)
        return self.decoder_conv(h)

    def classify(self, z: torch.Tensor) -> torch.Tensor:
        """Class-1 probability per sample, shape (batch,)."""
        return self.classifier(z).squeeze(-1)

    def forward(self, x: torch.Tensor, noise: torch.Tensor | None = None) -> ForwardOutput:
        """Full pass; callers supply standard-normal ``noise`` to sample the
        latent code, or omit it for the deterministic z = mu path."""
        mu, logvar = self.encode(x)
        if noise is None:
            noise = torch.zeros_like(mu)
        z = reparameterize(mu, logvar, noise)
        return ForwardOutput(x_hat=self.decode(z), mu=mu, logvar=logvar, z=z, y_c=self.classify(z))


def init_weights(model: nn.Module, seed: int) -> nn.Module:
    """Xavier-uniform weights and zero biases on every conv/linear layer."""
    torch.manual_seed(seed)
    for m in model.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d, nn.Conv3d)):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.BatchNorm3d)):
            m.reset_parameters()
            m.reset_running_stats()
    return model


def build_model(config: ModelConfig, seed: int) -> AttrVae:
    return init_weights(AttrVae(config), seed)


# ---------------------------------------------------------------------------
# numpy <-> torch plumbing
# ---------------------------------------------------------------------------

def volumes_to_tensor(volumes: np.ndarray, config: ModelConfig) -> torch.Tensor:
    """(n, X, Y, Z) float volumes -> network input, squeezing Z in 2D mode."""
    t = torch.as_tensor(np.asarray(volumes, dtype=np.float32))
    if t.ndim == len(config.image_shape):  # single volume
        t = t.unsqueeze(0)
    if config.is_2d():
        t = t.squeeze(-1)
    return t.unsqueeze(1)


def tensor_to_volumes(x: torch.Tensor, config: ModelConfig) -> np.ndarray:
    """Network output -> (n, X, Y, Z) float32 volumes."""
    arr = x.detach().cpu().numpy().astype(np.float32)
    arr = arr[:, 0]
    if config.is_2d():
        arr = arr[..., None]
    return arr


@torch.no_grad()
def encode_dataset(model: AttrVae, volumes: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Posterior means for a volume stack, shape (n, latent_dim); eval mode."""
    model.eval()
    out = []
    for i in range(0, len(volumes), batch_size):
        x = volumes_to_tensor(volumes[i : i + batch_size], model.config)
        mu, _ = model.encode(x)
        out.append(mu.cpu().numpy())
    return np.concatenate(out, axis=0)


@torch.no_grad()
def reconstruct_dataset(model: AttrVae, volumes: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Deterministic reconstructions decode(mu); eval mode, shape matches input."""
    model.eval()
    out = []
    for i in range(0, len(volumes), batch_size):
        x = volumes_to_tensor(volumes[i : i + batch_size], model.config)
        mu, _ = model.encode(x)
        out.append(tensor_to_volumes(model.decode(mu), model.config))
    return np.concatenate(out, axis=0)


@torch.no_grad()
def decode_latents(model: AttrVae, z: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Decode latent rows to volumes (n, X, Y, Z); eval mode."""
    model.eval()
    z = np.atleast_2d(np.asarray(z, dtype=np.float32))
    out = []
    for i in range(0, len(z), batch_size):
        zt = torch.as_tensor(z[i : i + batch_size])
        out.append(tensor_to_volumes(model.decode(zt), model.config))
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

@dataclass
class ModelCheckpoint:
    """Trained weights plus the manifest that makes them reusable."""

    state_dict: dict
    config: ModelConfig
    mapping: AttributeMapping | None
    seed: int
    epochs: int
    dataset_hash: str | None = None
    best_state: dict | None = field(default=None, repr=False)
    best_epoch: int | None = None

    def manifest(self) -> dict:
        return {
            "model": self.config.to_dict(),
            "mapping": [[n, d] for n, d in self.mapping.entries] if self.mapping else None,
            "seed": self.seed,
            "epochs": self.epochs,
            "dataset_hash": self.dataset_hash,
            "best_epoch": self.best_epoch,
        }

    def build(self, best: bool = False) -> AttrVae:
        model = AttrVae(self.config)
        state = self.best_state if best and self.best_state is not None else self.state_dict
        model.load_state_dict(state)
        model.eval()
        return model

    def save(self, path: str | Path) -> tuple[Path, Path]:
        """Write ``<path>.pt`` (weights) and ``<path>.json`` (manifest)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        weights_path = path.with_suffix(".pt")
        payload = {"state_dict": self.state_dict}
        if self.best_state is not None:
            payload["best_state"] = self.best_state
        torch.save(payload, weights_path)
        manifest_path = path.with_suffix(".json")
        manifest_path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return weights_path, manifest_path

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        path = Path(path)
        payload = torch.load(path.with_suffix(".pt"), map_location="cpu", weights_only=True)
        manifest = json.loads(path.with_suffix(".json").read_text())
        mapping = None
        if manifest.get("mapping"):
            mapping = AttributeMapping(entries=tuple((n, int(d)) for n, d in manifest["mapping"]))
        return cls(
            state_dict=payload["state_dict"],
            config=ModelConfig.from_dict(manifest["model"]),
            mapping=mapping,
            seed=int(manifest["seed"]),
            epochs=int(manifest["epochs"]),
            dataset_hash=manifest.get("dataset_hash"),
            best_state=payload.get("best_state"),
            best_epoch=manifest.get("best_epoch"),
        )
