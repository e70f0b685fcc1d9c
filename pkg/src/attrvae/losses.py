"""Training objective: reconstruction, KL, latent-classifier, and attribute
regularization terms, plus the weighted combination with ablation toggles.

All losses are pure functions of torch tensors and preserve the input dtype,
so unit tests can run them in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

PROB_EPS = 1e-7  # clamp for probabilities entering a log


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights of the combined objective."""

    beta: float = 2.0
    gamma: float = 200.0
    delta: float = 10.0

    def __post_init__(self):
        for name in ("beta", "gamma", "delta"):
            v = getattr(self, name)
            if not torch.isfinite(torch.tensor(float(v))):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be nonnegative")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class Toggles:
    """Ablation switches selecting the model variant.

    use_beta=False trains with the KL weight forced to 1; use_mlp / use_ar
    drop the classifier and attribute-regularization terms entirely.
    """

    use_beta: bool = True
    use_mlp: bool = True
    use_ar: bool = True

    @classmethod
    def from_variant(cls, name: str) -> "Toggles":
        presets = {
            "vae": cls(use_beta=False, use_mlp=False, use_ar=False),
            "beta_vae": cls(use_beta=True, use_mlp=False, use_ar=False),
            "ar_vae": cls(use_beta=True, use_mlp=False, use_ar=True),
            "attri_vae": cls(use_beta=True, use_mlp=True, use_ar=True),
        }
        if name not in presets:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(presets)}")
        return presets[name]

    def effective_beta(self, weights: LossWeights) -> float:
        return weights.beta if self.use_beta else 1.0


@dataclass(frozen=True)
class AttributeMapping:
    """Assignment of attribute names to the latent dimensions that encode them."""

    entries: tuple[tuple[str, int], ...]

    def __post_init__(self):
        dims = [d for _, d in self.entries]
        if len(set(dims)) != len(dims):
            raise ValueError(f"mapping dimensions must be unique, got {dims}")
        if any(d < 0 for d in dims):
            raise ValueError(f"mapping dimensions must be nonnegative, got {dims}")

    @classmethod
    def from_names(cls, names) -> "AttributeMapping":
        """Map each name to its position: first attribute -> dimension 0, etc."""
        return cls(entries=tuple((str(n), i) for i, n in enumerate(names)))

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def dims(self) -> list[int]:
        return [d for _, d in self.entries]

    def dim_of(self, name: str) -> int:
        for n, d in self.entries:
            if n == name:
                return d
        raise KeyError(f"attribute {name!r} not in mapping {self.names()}")

    def validate_for(self, latent_dim: int) -> None:
        if len(self.entries) > latent_dim:
            raise ValueError(f"{len(self.entries)} mapped attributes exceed latent_dim {latent_dim}")
        bad = [d for d in self.dims() if d >= latent_dim]
        if bad:
            raise ValueError(f"mapped dimensions {bad} out of range for latent_dim {latent_dim}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values; disabled terms are zero and total honors the toggles."""

    recon: torch.Tensor
    kl: torch.Tensor
    mlp: torch.Tensor
    ar: torch.Tensor
    total: torch.Tensor

    def floats(self) -> dict[str, float]:
        return {
            "recon": float(self.recon.detach()),
            "kl": float(self.kl.detach()),
            "mlp": float(self.mlp.detach()),
            "ar": float(self.ar.detach()),
            "total": float(self.total.detach()),
        }


def recon_loss(x_hat: torch.Tensor, x: torch.Tensor, kind: str = "bce") -> torch.Tensor:
    """Reconstruction error, summed over voxels and averaged over the batch.

    ``bce`` treats voxels as Bernoulli targets (predictions clamped away from
    0/1); ``mse`` is the summed squared error.
    """
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: x_hat {tuple(x_hat.shape)} vs x {tuple(x.shape)}")
    n = x.shape[0]
    if kind == "bce":
        p = x_hat.clamp(PROB_EPS, 1.0 - PROB_EPS)
        per_voxel = -(x * torch.log(p) + (1.0 - x) * torch.log1p(-p))
        return per_voxel.reshape(n, -1).sum(dim=1).mean()
    if kind == "mse":
        return ((x_hat - x) ** 2).reshape(n, -1).sum(dim=1).mean()
    raise ValueError(f"unknown reconstruction loss kind {kind!r}")


def kl_loss(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL divergence from the diagonal-Gaussian posterior to the unit prior."""
    per_sample = 0.5 * (mu**2 + torch.exp(logvar) - 1.0 - logvar).sum(dim=-1)
    return per_sample.mean()


def attr_reg_loss(
    z_batch: torch.Tensor,
    attrs: torch.Tensor,
    mapping: AttributeMapping,
    delta: float,
) -> torch.Tensor:
    """Monotonicity penalty tying each mapped latent dimension to its attribute.

    For every mapped pair and every ordered sample pair (i, j) inside the
    batch, the signed latent distance squashed through tanh(delta * .) must
    match the sign of the attribute distance; the mean absolute mismatch is
    summed over mapped attributes. ``attrs`` columns follow mapping order.
    """
    n = z_batch.shape[0]
    if n < 2:
        raise ValueError(f"attribute regularization needs at least 2 samples, got {n}")
    if attrs.shape != (n, len(mapping)):
        raise ValueError(
            f"attrs shape {tuple(attrs.shape)} does not match (batch={n}, mapped={len(mapping)})"
        )
    total = z_batch.new_zeros(())
    for k, (_, d) in enumerate(mapping.entries):
        dist_z = z_batch[:, d].unsqueeze(1) - z_batch[:, d].unsqueeze(0)
        dist_a = attrs[:, k].unsqueeze(1) - attrs[:, k].unsqueeze(0)
        total = total + (torch.tanh(delta * dist_z) - torch.sign(dist_a)).abs().mean()
    return total


def mlp_loss(y_c: torch.Tensor, y_gt: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy between predicted probabilities and 0/1 labels."""
    p = y_c.clamp(PROB_EPS, 1.0 - PROB_EPS)
    y = y_gt.to(p.dtype)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()


def total_loss(
    batch,
    outputs,
    weights: LossWeights,
    toggles: Toggles,
    mapping: AttributeMapping | None = None,
    recon_kind: str = "bce",
) -> LossBreakdown:
    """Combine the active terms into the training objective.

    ``batch`` is ``(x, attrs, y_true)`` and ``outputs`` is
    ``(x_hat, mu, logvar, z, y_c)``; ``attrs``/``y_true``/``y_c`` may be None
    when the corresponding toggle is off.
    """
    x, attrs, y_true = batch
    x_hat, mu, logvar, z, y_c = outputs

    recon = recon_loss(x_hat, x, kind=recon_kind)
    kl = kl_loss(mu, logvar)
    beta = toggles.effective_beta(weights)

    if toggles.use_mlp:
        if y_c is None or y_true is None:
            raise ValueError("use_mlp is on but classifier outputs or labels are missing")
        mlp = mlp_loss(y_c, y_true)
    else:
        mlp = recon.new_zeros(())

    if toggles.use_ar:
        if attrs is None or mapping is None:
            raise ValueError("use_ar is on but attributes or mapping are missing")
        ar = attr_reg_loss(z, attrs, mapping, weights.delta)
    else:
        ar = recon.new_zeros(())

    total = recon + beta * kl + mlp + weights.gamma * ar
    return LossBreakdown(recon=recon, kl=kl, mlp=mlp, ar=ar, total=total)
