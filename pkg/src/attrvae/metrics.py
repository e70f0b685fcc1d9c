"""Representation-quality metrics: disentanglement (modularity, MIG, SAP, SCC),
per-attribute interpretability, distribution fidelity (MMD), image similarity
(normalized mutual information), and binary classification scores.

Everything here is a pure function of numpy arrays. Mutual information uses
equal-width histograms (20 bins by default) and is reported in nats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .losses import AttributeMapping

DEFAULT_MI_BINS = 20
DEFAULT_IMAGE_BINS = 32


def _digitize(col: np.ndarray, bins: int) -> np.ndarray | None:
    """Equal-width bin indices over the observed range; None for a constant column."""
    lo, hi = float(col.min()), float(col.max())
    if hi == lo:
        return None
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.digitize(col, edges[1:-1])
    return idx


def binned_entropy(col: np.ndarray, bins: int = DEFAULT_MI_BINS) -> float:
    """Entropy (nats) of the equal-width histogram; 0 for a constant column."""
    idx = _digitize(np.asarray(col, dtype=np.float64), bins)
    if idx is None:
        return 0.0
    p = np.bincount(idx, minlength=bins) / idx.size
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def _hist_mi(xi: np.ndarray | None, yi: np.ndarray | None, bins: int) -> float:
    if xi is None or yi is None:
        return 0.0
    joint = np.zeros((bins, bins))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float((joint[nz] * np.log(joint[nz] / (px @ py)[nz])).sum())


def mi_matrix(Z: np.ndarray, A: np.ndarray, bins: int = DEFAULT_MI_BINS) -> np.ndarray:
    """Histogram mutual information between every latent column and attribute.

    Returns a (D, K) nonnegative matrix in nats; pairs involving a constant
    column are defined as 0.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    z_idx = [_digitize(Z[:, d], bins) for d in range(Z.shape[1])]
    a_idx = [_digitize(A[:, k], bins) for k in range(A.shape[1])]
    out = np.zeros((Z.shape[1], A.shape[1]))
    for d, zi in enumerate(z_idx):
        for k, ai in enumerate(a_idx):
            out[d, k] = max(0.0, _hist_mi(zi, ai, bins))
    return out


def modularity(mi: np.ndarray) -> float:
    """Mean over dimensions of 1 - (squared MI spread outside the best attribute).

    A dimension informative about exactly one attribute scores 1; spreading the
    same MI across all attributes scores 0. Dimensions with no MI at all count
    as perfectly modular.
    """
    mi = np.asarray(mi, dtype=np.float64)
    D, K = mi.shape
    if K < 2:
        raise ValueError(f"modularity needs at least 2 attributes, got {K}")
    scores = np.ones(D)
    for d in range(D):
        theta = mi[d].max()
        if theta <= 0:
            continue
        k_star = int(np.argmax(mi[d]))
        rest = np.delete(mi[d], k_star)
        scores[d] = 1.0 - float((rest**2).sum() / (theta**2 * (K - 1)))
    return float(scores.mean())


def mig(Z: np.ndarray, A: np.ndarray, bins: int = DEFAULT_MI_BINS) -> float:
    """Mutual information gap: normalized MI lead of each attribute's best
    latent dimension over the runner-up, averaged over attributes."""
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if Z.shape[1] < 2:
        raise ValueError(f"mig needs at least 2 latent dimensions, got {Z.shape[1]}")
    mi = mi_matrix(Z, A, bins)
    gaps = []
    for k in range(A.shape[1]):
        h = binned_entropy(A[:, k], bins)
        if h <= 0:
            continue
        top = np.sort(mi[:, k])[::-1]
        gaps.append((top[0] - top[1]) / h)
    if not gaps:
        raise ValueError("mig undefined: every attribute column is constant")
    return float(np.clip(np.mean(gaps), 0.0, 1.0))


def _r2_1d(z: np.ndarray, a: np.ndarray) -> float:
    """Coefficient of determination of the least-squares line a ~ w*z + b."""
    vz = z.std()
    va = a.std()
    if vz == 0 or va == 0:
        return 0.0
    r = float(np.corrcoef(z, a)[0, 1])
    return r * r


def _best_threshold_balanced_acc(z: np.ndarray, y: np.ndarray) -> float:
    """Best balanced accuracy of a single-threshold rule on z for binary y."""
    order = np.argsort(z, kind="mergesort")
    y_sorted = y[order]
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.0
    # cumulative counts below each cut position (cut after index i)
    pos_below = np.concatenate([[0], np.cumsum(y_sorted)])
    neg_below = np.concatenate([[0], np.cumsum(1 - y_sorted)])
    # rule A: predict 1 when z above cut; rule B: the reverse
    tpr_a = (n_pos - pos_below) / n_pos
    tnr_a = neg_below / n_neg
    bal_a = 0.5 * (tpr_a + tnr_a)
    bal_b = 1.0 - bal_a
    return float(max(bal_a.max(), bal_b.max()))


def sap(Z: np.ndarray, A: np.ndarray) -> float:
    """Separated attribute predictability: per attribute, the gap between the
    two most predictive single dimensions, averaged over attributes.

    Continuous attributes use the R-squared of a 1-D linear fit; binary ones
    use the best single-threshold balanced accuracy.
    """
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if Z.shape[0] < 10:
        raise ValueError(f"sap needs at least 10 samples, got {Z.shape[0]}")
    gaps = []
    for k in range(A.shape[1]):
        a = A[:, k]
        uniq = np.unique(a)
        if uniq.size == 2:
            y = (a == uniq[1]).astype(np.int64)
            scores = np.array([_best_threshold_balanced_acc(Z[:, d], y) for d in range(Z.shape[1])])
        else:
            scores = np.array([_r2_1d(Z[:, d], a) for d in range(Z.shape[1])])
        top = np.sort(scores)[::-1]
        gaps.append(top[0] - top[1] if scores.size > 1 else top[0])
    return float(np.clip(np.mean(gaps), 0.0, 1.0))


def _abs_spearman(z: np.ndarray, a: np.ndarray) -> float:
    if z.std() == 0 or a.std() == 0:
        return 0.0
    rho = stats.spearmanr(z, a).statistic
    return float(abs(rho)) if np.isfinite(rho) else 0.0


def scc(Z: np.ndarray, A: np.ndarray, mapping: AttributeMapping | None = None) -> float:
    """Mean over attributes of the best |Spearman| against any latent dimension.

    ``mapping`` is accepted for interface parity (see ``scc_per_mapping`` for
    the per-mapped-dimension values) but the score is always the max over dims.
    """
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if Z.shape[0] < 3:
        raise ValueError(f"scc needs at least 3 samples, got {Z.shape[0]}")
    per_attr = [
        max(_abs_spearman(Z[:, d], A[:, k]) for d in range(Z.shape[1]))
        for k in range(A.shape[1])
    ]
    return float(np.mean(per_attr))


def scc_per_mapping(
    Z: np.ndarray, A: np.ndarray, attribute_names, mapping: AttributeMapping
) -> dict[str, float]:
    """|Spearman| between each mapped attribute and its own latent dimension."""
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    names = list(attribute_names)
    out = {}
    for name, d in mapping.entries:
        k = names.index(name)
        out[name] = _abs_spearman(Z[:, d], A[:, k])
    return out


def interpretability(
    Z: np.ndarray,
    A: np.ndarray,
    attribute_names,
    mapping: AttributeMapping | None = None,
    bins: int = DEFAULT_MI_BINS,
) -> dict[str, float | None]:
    """Ability to predict each attribute from one latent dimension.

    The dimension is the mapped one when a mapping is given; otherwise (for
    unregularized baselines) the dimension with maximum MI is used. The score
    is the clipped R-squared of the 1-D linear fit; constant attributes are
    reported as None.
    """
    Z = np.asarray(Z, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    names = list(attribute_names)
    mi = None
    scores: dict[str, float | None] = {}
    for k, name in enumerate(names):
        a = A[:, k]
        if a.std() == 0:
            scores[name] = None
            continue
        if mapping is not None and name in mapping.names():
            d = mapping.dim_of(name)
        else:
            if mi is None:
                mi = mi_matrix(Z, A, bins)
            d = int(np.argmax(mi[:, k]))
        scores[name] = max(0.0, _r2_1d(Z[:, d], a))
    return scores


def mmd(X: np.ndarray, Y: np.ndarray) -> float:
    """Squared maximum mean discrepancy (biased V-statistic, Gaussian kernel).

    The bandwidth is the median pairwise distance over the pooled samples
    (fallback 1.0 when all points coincide). Inputs are flattened per row.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    Y = np.asarray(Y, dtype=np.float64).reshape(len(Y), -1)
    if len(X) < 2 or len(Y) < 2:
        raise ValueError("mmd needs at least 2 samples on each side")

    pooled = np.concatenate([X, Y], axis=0)
    sq = (pooled**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pooled @ pooled.T, 0.0)
    n = len(X)
    off_diag = ~np.eye(len(pooled), dtype=bool)
    sigma = float(np.median(np.sqrt(d2[off_diag])))
    if sigma <= 0:
        sigma = 1.0

    k = np.exp(-d2 / (2.0 * sigma**2))
    k_xx = k[:n, :n]
    k_yy = k[n:, n:]
    k_xy = k[:n, n:]
    return float(max(0.0, k_xx.mean() + k_yy.mean() - 2.0 * k_xy.mean()))


def image_mi(x: np.ndarray, x_hat: np.ndarray, bins: int = DEFAULT_IMAGE_BINS) -> float:
    """Normalized mutual information I / sqrt(H(x) * H(x_hat)) between the
    intensity distributions of two same-shape images; 0 if either is constant."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(x_hat, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("image_mi requires same-shape inputs")
    xi = _digitize(x, bins)
    yi = _digitize(y, bins)
    if xi is None or yi is None:
        return 0.0
    i_xy = _hist_mi(xi, yi, bins)
    hx = binned_entropy(x, bins)
    hy = binned_entropy(y, bins)
    if hx <= 0 or hy <= 0:
        return 0.0
    return float(np.clip(i_xy / np.sqrt(hx * hy), 0.0, 1.0))


def classification_scores(y_pred: np.ndarray, y_true: np.ndarray) -> tuple[float, float | None]:
    """Accuracy at threshold 0.5 and rank-statistic AUC (ties count half).

    AUC is None when only one class is present in the truth.
    """
    y_pred = np.asarray(y_pred, dtype=np.float64)
    y_true = np.asarray(y_true).astype(np.int64)
    acc = float(np.mean((y_pred >= 0.5).astype(np.int64) == y_true))
    pos = y_pred[y_true == 1]
    neg = y_pred[y_true == 0]
    if pos.size == 0 or neg.size == 0:
        return acc, None
    greater = (pos[:, None] > neg[None, :]).sum()
    equal = (pos[:, None] == neg[None, :]).sum()
    auc = float((greater + 0.5 * equal) / (pos.size * neg.size))
    return acc, auc


@dataclass
class MetricsReport:
    """All scalar scores from one evaluation run."""

    modularity: float
    mig: float
    sap: float
    scc: float
    interpretability: dict[str, float | None]
    mmd: float
    image_mi: float
    accuracy: float
    auc: float | None

    def interpretability_mean(self) -> float:
        vals = [v for v in self.interpretability.values() if v is not None]
        return float(np.mean(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "modularity": self.modularity,
            "mig": self.mig,
            "sap": self.sap,
            "scc": self.scc,
            "interpretability": self.interpretability,
            "mmd": self.mmd,
            "image_mi": self.image_mi,
            "accuracy": self.accuracy,
            "auc": self.auc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(
    Z: np.ndarray,
    A: np.ndarray,
    attribute_names,
    mapping: AttributeMapping | None,
    images: np.ndarray,
    reconstructions: np.ndarray,
    y_pred: np.ndarray,
    y_true: np.ndarray,
    bins: int = DEFAULT_MI_BINS,
) -> MetricsReport:
    """Assemble the full report from encoded latents and reconstructions.

    ``image_mi`` is averaged over samples; ``mmd`` compares the flattened
    image sets directly.
    """
    acc, auc = classification_scores(y_pred, y_true)
    per_image = [image_mi(x, r) for x, r in zip(images, reconstructions)]
    return MetricsReport(
        modularity=modularity(mi_matrix(Z, A, bins)),
        mig=mig(Z, A, bins),
        sap=sap(Z, A),
        scc=scc(Z, A, mapping),
        interpretability=interpretability(Z, A, attribute_names, mapping, bins),
        mmd=mmd(images, reconstructions),
        image_mi=float(np.mean(per_image)),
        accuracy=acc,
        auc=auc,
    )
