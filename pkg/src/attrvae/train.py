"""Optimization loop: stratified splitting, minority oversampling, Adam
training of the combined objective, per-epoch loss logging, checkpointing,
hyperparameter sweeps, and full-model evaluation.

Training is deterministic per (config, data, seed) on a fixed platform: batch
order comes from a seeded numpy generator and reparameterization noise from a
seeded torch generator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .dataio import Dataset, oversample_minority
from .losses import AttributeMapping, LossWeights, total_loss
from .metrics import MetricsReport, build_report, interpretability
from .model import (
    AttrVae,
    ModelCheckpoint,
    ModelConfig,
    build_model,
    encode_dataset,
    reconstruct_dataset,
    volumes_to_tensor,
)


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    split_fraction: float = 0.7
    oversample: bool = True
    early_stop: bool = False
    patience: int = 50
    val_metrics_every: int = 25

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


@dataclass(frozen=True)
class TrainLogRow:
    epoch: int
    recon: float
    kl: float
    mlp: float
    ar: float
    total: float
    val_total: float | None = None
    val_interpretability: float | None = None


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split; the test side is never oversampled downstream."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    labels = dataset.labels()
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ValueError(f"class {int(c)} has fewer than 2 samples; cannot split")
        idx = rng.permutation(idx)
        n_train = int(math.floor(fraction * idx.size + 0.5))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    train_idx = [int(i) for i in rng.permutation(train_idx)]
    test_idx = [int(i) for i in rng.permutation(test_idx)]

    def subset(indices):
        return Dataset(
            samples=tuple(dataset.samples[i] for i in indices),
            attribute_names=dataset.attribute_names,
            shape=dataset.shape,
        )

    return subset(train_idx), subset(test_idx)


def _mapped_attribute_matrix(dataset: Dataset, mapping: AttributeMapping) -> np.ndarray:
    names = list(dataset.attribute_names)
    missing = [n for n in mapping.names() if n not in names]
    if missing:
        raise ValueError(f"mapped attributes {missing} not present in dataset {names}")
    cols = [names.index(n) for n in mapping.names()]
    return dataset.attribute_matrix()[:, cols]


def _epoch_loss(model, X, A, y, weights, toggles, mapping, recon_kind, batch_size):
    """Deterministic full-pass loss (eval mode, z = mu); returns total mean."""
    model.eval()
    sums = 0.0
    count = 0
    with torch.no_grad():
        for i in range(0, X.shape[0], batch_size):
            x = X[i : i + batch_size]
            out = model(x)
            batch = (
                x,
                A[i : i + batch_size] if A is not None else None,
                y[i : i + batch_size] if y is not None else None,
            )
            bd = total_loss(batch, out, weights, toggles, mapping, recon_kind)
            sums += float(bd.total) * x.shape[0]
            count += x.shape[0]
    model.train()
    return sums / count


def train(
    model: AttrVae,
    dataset: Dataset,
    config: TrainConfig,
    mapping: AttributeMapping | None = None,
) -> tuple[ModelCheckpoint, list[TrainLogRow]]:
    """Train ``model`` on the training side of a stratified split.

    Oversampling (when enabled) touches only the training split. The returned
    checkpoint holds the final weights plus the best-validation state.
    """
    toggles = model.config.toggles
    if mapping is not None:
        mapping.validate_for(model.config.latent_dim)
    if toggles.use_ar:
        if mapping is None or len(mapping) == 0:
            raise ValueError("attribute regularization is on but no mapping was provided")
        if config.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when attribute regularization is on")

    train_ds, val_ds = split(dataset, config.split_fraction, config.seed)
    if config.oversample:
        train_ds = oversample_minority(train_ds, config.seed)

    X = volumes_to_tensor(train_ds.volumes(), model.config)
    Xv = volumes_to_tensor(val_ds.volumes(), model.config)
    A = Av = None
    if toggles.use_ar:
        A = torch.as_tensor(_mapped_attribute_matrix(train_ds, mapping), dtype=torch.float32)
        Av = torch.as_tensor(_mapped_attribute_matrix(val_ds, mapping), dtype=torch.float32)
    y = yv = None
    if toggles.use_mlp:
        y = torch.as_tensor(train_ds.labels(), dtype=torch.float32)
        yv = torch.as_tensor(val_ds.labels(), dtype=torch.float32)

    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    noise_gen = torch.Generator().manual_seed(config.seed)
    order_rng = np.random.default_rng(config.seed)
    recon_kind = model.config.recon_loss_kind
    D = model.config.latent_dim
    n = X.shape[0]

    rows: list[TrainLogRow] = []
    best_val = float("inf")
    best_state = None
    best_epoch = None
    epochs_since_best = 0

    model.train()
    for epoch in range(1, config.epochs + 1):
        perm = order_rng.permutation(n)
        sums = {"recon": 0.0, "kl": 0.0, "mlp": 0.0, "ar": 0.0, "total": 0.0}
        seen = 0
        for start in range(0, n, config.batch_size):
            idx = torch.as_tensor(perm[start : start + config.batch_size])
            if idx.numel() < 2:
                continue  # batch norm and pairwise terms need >= 2 samples
            x = X[idx]
            noise = torch.randn(x.shape[0], D, generator=noise_gen)
            out = model(x, noise)
            batch = (x, A[idx] if A is not None else None, y[idx] if y is not None else None)
            bd = total_loss(batch, out, config.weights, toggles, mapping, recon_kind)
            if not torch.isfinite(bd.total):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}: "
                    f"{bd.floats()}"
                )
            opt.zero_grad()
            bd.total.backward()
            opt.step()
            vals = bd.floats()
            for key in sums:
                sums[key] += vals[key] * x.shape[0]
            seen += x.shape[0]

        val_total = _epoch_loss(
            model, Xv, Av, yv, config.weights, toggles, mapping, recon_kind, config.batch_size
        )
        val_interp = None
        if config.val_metrics_every and epoch % config.val_metrics_every == 0 and mapping:
            mu = encode_dataset(model, val_ds.volumes())
            model.train()
            scores = interpretability(mu, val_ds.attribute_matrix(), val_ds.attribute_names, mapping)
            vals = [v for v in scores.values() if v is not None]
            val_interp = float(np.mean(vals)) if vals else None

        rows.append(
            TrainLogRow(
                epoch=epoch,
                recon=sums["recon"] / seen,
                kl=sums["kl"] / seen,
                mlp=sums["mlp"] / seen,
                ar=sums["ar"] / seen,
                total=sums["total"] / seen,
                val_total=val_total,
                val_interpretability=val_interp,
            )
        )

        if val_total < best_val:
            best_val = val_total
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if config.early_stop and epochs_since_best >= config.patience:
                break

    model.eval()
    checkpoint = ModelCheckpoint(
        state_dict={k: v.detach().clone() for k, v in model.state_dict().items()},
        config=model.config,
        mapping=mapping,
        seed=config.seed,
        epochs=rows[-1].epoch,
        dataset_hash=dataset.content_hash(),
        best_state=best_state,
        best_epoch=best_epoch,
    )
    return checkpoint, rows


def write_train_log(rows: list[TrainLogRow], path: str | Path) -> Path:
    """CSV log with the per-epoch loss breakdown."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "recon", "kl", "mlp", "ar", "total"])
        for r in rows:
            writer.writerow([r.epoch, *(repr(v) for v in (r.recon, r.kl, r.mlp, r.ar, r.total))])
    return path


def evaluate_model(
    model: AttrVae,
    dataset: Dataset,
    mapping: AttributeMapping | None,
    bins: int = 20,
) -> MetricsReport:
    """Encode a dataset and score every metric on it.

    Interpretability uses the mapped dimensions when a mapping is given;
    unregularized baselines pass None and fall back to max-MI dimensions.
    """
    volumes = dataset.volumes()
    Z = encode_dataset(model, volumes)
    recon = reconstruct_dataset(model, volumes)
    with torch.no_grad():
        y_pred = model.classify(torch.as_tensor(Z, dtype=torch.float32)).numpy()
    return build_report(
        Z=Z,
        A=dataset.attribute_matrix(),
        attribute_names=dataset.attribute_names,
        mapping=mapping,
        images=volumes,
        reconstructions=recon,
        y_pred=y_pred,
        y_true=dataset.labels(),
        bins=bins,
    )


@dataclass(frozen=True)
class SweepRow:
    beta: float
    gamma: float
    delta: float
    interpretability: float
    image_mi: float


def hyperparameter_sweep(
    model_config: ModelConfig,
    dataset: Dataset,
    config: TrainConfig,
    mapping: AttributeMapping,
    betas: list[float],
    gammas: list[float],
    deltas: list[float],
) -> list[SweepRow]:
    """Train one model per (beta, gamma, delta) grid point on shared data/seed
    and report mean mapped-dimension interpretability plus mean image MI on
    the held-out split."""
    if not betas or not gammas or not deltas:
        raise ValueError("sweep grids must be nonempty")
    _, val_ds = split(dataset, config.split_fraction, config.seed)
    out: list[SweepRow] = []
    for beta in betas:
        for gamma in gammas:
            for delta in deltas:
                point = replace(config, weights=LossWeights(beta=beta, gamma=gamma, delta=delta))
                model = build_model(model_config, config.seed)
                train(model, dataset, point, mapping)
                report = evaluate_model(model, val_ds, mapping)
                out.append(
                    SweepRow(
                        beta=float(beta),
                        gamma=float(gamma),
                        delta=float(delta),
                        interpretability=report.interpretability_mean(),
                        image_mi=report.image_mi,
                    )
                )
    return out


def write_sweep_table(rows: list[SweepRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "gamma", "delta", "interpretability", "image_mi"])
        for r in rows:
            writer.writerow(
                [repr(r.beta), repr(r.gamma), repr(r.delta), repr(r.interpretability), repr(r.image_mi)]
            )
    return path
