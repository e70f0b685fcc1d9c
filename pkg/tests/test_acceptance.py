"""Acceptance suite: one test per criterion, one printed PASS line each.

Criteria 1-3 and 8 are exact unit oracles and run in seconds. Criteria 4-7
train full models on the synthetic annulus cohort (1500 train / 500 test at
64x64) and are marked slow; expect roughly 30-60 minutes on a 2-core CPU for
the whole module.
"""

import math
import time

import numpy as np
import pytest
import torch
from scipy import ndimage

from attrvae.attention import gap_weights
from attrvae.dataio import ANNULUS_ATTRIBUTES, AnnulusSpec, generate_annulus_dataset
from attrvae.losses import (
    AttributeMapping,
    LossWeights,
    Toggles,
    attr_reg_loss,
    kl_loss,
    mlp_loss,
    recon_loss,
)
from attrvae.metrics import (
    image_mi,
    interpretability,
    mi_matrix,
    mig,
    mmd,
    modularity,
    sap,
    scc,
    scc_per_mapping,
)
from attrvae.model import ModelConfig, build_model, decode_latents, encode_dataset
from attrvae.train import TrainConfig, evaluate_model, hyperparameter_sweep, split, train

from conftest import tiny_annulus_spec, tiny_model_config
from test_losses import central_diff_grad, rel_grad_error

MAPPING = AttributeMapping.from_names(ANNULUS_ATTRIBUTES)

# trend-run scale (criteria 4-7): 2000 samples -> 1500 train / 500 test
N_SAMPLES = 2000
SPLIT_FRACTION = 0.75
DATA_SEED = 7
TRAIN_SEED = 0
TREND_LR = 3e-4
TREND_EPOCHS = 60


def report_pass(criterion: int, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS — {detail}")


# ---------------------------------------------------------------------------
# Shared trained models (criteria 4-7)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def trend_dataset():
    return generate_annulus_dataset(AnnulusSpec(n_samples=N_SAMPLES, seed=DATA_SEED))


def trend_train_config(weights: LossWeights) -> TrainConfig:
    return TrainConfig(
        weights=weights,
        lr=TREND_LR,
        batch_size=16,
        epochs=TREND_EPOCHS,
        seed=TRAIN_SEED,
        split_fraction=SPLIT_FRACTION,
        val_metrics_every=0,
    )


@pytest.fixture(scope="session")
def trend_test_set(trend_dataset):
    _, test_set = split(trend_dataset, SPLIT_FRACTION, TRAIN_SEED)
    return test_set


@pytest.fixture(scope="session")
def attri_run(trend_dataset, trend_test_set):
    """Full model at beta=2, gamma=200, delta=10; reused by criteria 4-7."""
    t0 = time.perf_counter()
    model = build_model(ModelConfig(), seed=TRAIN_SEED)
    weights = LossWeights(beta=2.0, gamma=200.0, delta=10.0)
    ckpt, rows = train(model, trend_dataset, trend_train_config(weights), MAPPING)
    minutes = (time.perf_counter() - t0) / 60
    report = evaluate_model(model, trend_test_set, MAPPING)
    print(f"\n[attri run] {rows[-1].epoch} epochs in {minutes:.1f} min")
    return {"model": model, "report": report, "log": rows, "minutes": minutes}


@pytest.fixture(scope="session")
def beta_vae_run(trend_dataset, trend_test_set):
    """beta-VAE ablation (no MLP, no AR) on identical data and seed."""
    t0 = time.perf_counter()
    cfg = ModelConfig(use_mlp=False, use_ar=False)
    model = build_model(cfg, seed=TRAIN_SEED)
    weights = LossWeights(beta=2.0, gamma=200.0, delta=10.0)
    ckpt, rows = train(model, trend_dataset, trend_train_config(weights))
    minutes = (time.perf_counter() - t0) / 60
    report = evaluate_model(model, trend_test_set, None)  # max-MI dims for baselines
    print(f"\n[beta-vae run] {rows[-1].epoch} epochs in {minutes:.1f} min")
    return {"model": model, "report": report, "minutes": minutes}


@pytest.fixture(scope="session")
def gamma_sweep(trend_dataset, attri_run):
    """gamma in {0, 10, 100} trained via the sweep op; gamma=200 is the attri run
    (same seed, data, and schedule), composed into the table."""
    rows = hyperparameter_sweep(
        ModelConfig(),
        trend_dataset,
        trend_train_config(LossWeights(beta=2.0, gamma=0.0, delta=10.0)),
        MAPPING,
        betas=[2.0],
        gammas=[0.0, 10.0, 100.0],
        deltas=[10.0],
    )
    attri_report = attri_run["report"]
    from attrvae.train import SweepRow

    rows = rows + [
        SweepRow(
            beta=2.0, gamma=200.0, delta=10.0,
            interpretability=attri_report.interpretability_mean(),
            image_mi=attri_report.image_mi,
        )
    ]
    return rows


# ---------------------------------------------------------------------------
# Decoded-mask measurement oracles (criterion 7)
# ---------------------------------------------------------------------------

def measured_cavity_area(volume: np.ndarray) -> float:
    """Pixel count above 0.5 inside the ring: the connected cavity-band
    component around the image center."""
    img = volume[:, :, 0]
    wall_est = float(img.max())
    band = (img > 0.40) & (img < (0.55 + wall_est) / 2)
    labeled, _ = ndimage.label(band)
    c = img.shape[0] // 2
    lab = labeled[c, c]
    if lab == 0:
        return 0.0
    return float(np.sum(labeled == lab))


def measured_ring_width(volume: np.ndarray) -> float:
    img = volume[:, :, 0]
    disc = float(np.sum(img > 0.15))
    cavity = measured_cavity_area(volume)
    return math.sqrt(max(disc, 0.0) / math.pi) - math.sqrt(max(cavity, 0.0) / math.pi)


def count_inversions(values) -> int:
    return int(np.sum(np.diff(values) < 0))


# ---------------------------------------------------------------------------
# Criterion 1: loss oracles
# ---------------------------------------------------------------------------

def test_criterion_1_loss_oracles():
    t0 = time.perf_counter()

    zero = torch.zeros((1, 4), dtype=torch.float64)
    assert float(kl_loss(zero, zero)) == 0.0

    m = AttributeMapping(entries=(("a", 0),))
    z = torch.tensor([[0.0], [10.0]], dtype=torch.float64)
    mono = attr_reg_loss(z, torch.tensor([[0.0], [1.0]], dtype=torch.float64), m, delta=10.0)
    anti = attr_reg_loss(z, torch.tensor([[1.0], [0.0]], dtype=torch.float64), m, delta=10.0)
    assert float(mono) <= 1e-3
    assert float(anti) == 1.0

    half = torch.full((1, 8), 0.5, dtype=torch.float64)
    assert float(recon_loss(half, half)) == pytest.approx(8 * math.log(2), abs=1e-9)
    ones = torch.ones((1, 8), dtype=torch.float64)
    assert float(recon_loss(half, ones)) == pytest.approx(8 * math.log(2), abs=1e-9)
    assert float(mlp_loss(torch.tensor([0.5], dtype=torch.float64),
                          torch.tensor([1.0], dtype=torch.float64))) == pytest.approx(
        math.log(2), abs=1e-9)

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report_pass(1, f"loss oracles exact in {elapsed * 1000:.0f} ms")


# ---------------------------------------------------------------------------
# Criterion 2: gradient checks
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_checks():
    t0 = time.perf_counter()
    torch.manual_seed(0)

    # losses: analytic vs central differences, rel error <= 1e-4
    x = torch.rand((2, 5), dtype=torch.float64)
    x_hat = (torch.rand((2, 5), dtype=torch.float64) * 0.8 + 0.1).requires_grad_()
    (g,) = torch.autograd.grad(recon_loss(x_hat, x), x_hat)
    n = central_diff_grad(lambda t: float(recon_loss(t, x)), x_hat.detach().clone())
    assert rel_grad_error(g, n) <= 1e-4

    mu = torch.randn((1, 5), dtype=torch.float64).requires_grad_()
    lv = (torch.randn((1, 5), dtype=torch.float64) * 0.3).requires_grad_()
    g_mu, g_lv = torch.autograd.grad(kl_loss(mu, lv), (mu, lv))
    assert rel_grad_error(g_mu, central_diff_grad(
        lambda t: float(kl_loss(t, lv.detach())), mu.detach().clone())) <= 1e-4
    assert rel_grad_error(g_lv, central_diff_grad(
        lambda t: float(kl_loss(mu.detach(), t)), lv.detach().clone())) <= 1e-4

    m = AttributeMapping(entries=(("a", 0),))
    z = (torch.randn((5, 2), dtype=torch.float64) * 0.1).requires_grad_()
    a = torch.randn((5, 1), dtype=torch.float64)
    (g,) = torch.autograd.grad(attr_reg_loss(z, a, m, delta=10.0), z)
    n = central_diff_grad(lambda t: float(attr_reg_loss(t, a, m, delta=10.0)), z.detach().clone())
    assert rel_grad_error(g, n) <= 1e-4

    y = torch.randint(0, 2, (10,)).to(torch.float64)
    p = (torch.rand((10,), dtype=torch.float64) * 0.8 + 0.1).requires_grad_()
    (g,) = torch.autograd.grad(mlp_loss(p, y), p)
    n = central_diff_grad(lambda t: float(mlp_loss(t, y)), p.detach().clone())
    assert rel_grad_error(g, n) <= 1e-4

    # attention GAP weights vs finite differences on 4x4 maps, rel error <= 1e-3
    cfg = ModelConfig(latent_dim=6, embedding_dim=16, conv_channels=(4, 4, 8, 8, 8),
                      image_shape=(64, 64, 1), mlp_hidden=(8, 4))
    model = build_model(cfg, seed=11).double().eval()
    vol = np.random.default_rng(4).random((64, 64, 1)).astype(np.float32)
    dim = 2
    analytic, feats = gap_weights(model, vol, dim)
    assert feats.shape[1:] == (4, 4)
    eps = 1e-4
    numeric = torch.zeros_like(analytic)
    for c in range(feats.shape[0]):
        acc = 0.0
        for p_ in range(4):
            for q in range(4):
                for sgn in (1.0, -1.0):
                    pert = feats.clone()
                    pert[c, p_, q] += sgn * eps
                    with torch.no_grad():
                        mu2, _ = model.latent_from_features(pert[None])
                    acc += sgn * float(mu2[0, dim])
        numeric[c] = acc / (2 * eps) / 16.0
    assert rel_grad_error(analytic, numeric) <= 1e-3

    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    report_pass(2, f"all gradient checks within tolerance in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# Criterion 3: metric oracles
# ---------------------------------------------------------------------------

def test_criterion_3_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(123)
    n, K = 10_000, 4
    A = rng.random((n, K))
    Z = A.copy()  # z_k = a_k
    names = [f"a{k}" for k in range(K)]
    mapping = AttributeMapping.from_names(names)

    assert modularity(mi_matrix(Z, A)) >= 0.95
    assert mig(Z, A) >= 0.9
    assert sap(Z, A) >= 0.9
    assert scc(Z, A) >= 0.99
    interp = interpretability(Z, A, names, mapping)
    assert all(v >= 0.99 for v in interp.values())

    X = rng.normal(size=(200, 32))
    assert mmd(X, X) <= 1e-12
    img = rng.random((64, 64))
    assert image_mi(img, img) == pytest.approx(1.0, abs=1e-9)

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    report_pass(3, f"metric oracles at thresholds in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# Criterion 4: trend reproduction, full model vs beta-VAE ablation
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_4_trend_reproduction(attri_run, beta_vae_run, trend_test_set):
    attri = attri_run["report"]
    beta = beta_vae_run["report"]

    assert attri.interpretability_mean() >= 0.8
    Z = encode_dataset(attri_run["model"], trend_test_set.volumes())
    per_dim = scc_per_mapping(
        Z, trend_test_set.attribute_matrix(), trend_test_set.attribute_names, MAPPING
    )
    assert all(v >= 0.9 for v in per_dim.values()), per_dim

    assert beta.interpretability_mean() <= 0.5
    assert beta.mig <= attri.mig / 2
    assert beta.sap <= attri.sap / 2

    log = attri_run["log"]
    assert log[-1].ar < log[0].ar  # regularization term trains down

    report_pass(
        4,
        f"interp {attri.interpretability_mean():.3f} vs {beta.interpretability_mean():.3f}, "
        f"min mapped |Spearman| {min(per_dim.values()):.3f}, "
        f"MIG {attri.mig:.3f} vs {beta.mig:.3f}, SAP {attri.sap:.3f} vs {beta.sap:.3f}, "
        f"runtime {attri_run['minutes'] + beta_vae_run['minutes']:.0f} min",
    )


# ---------------------------------------------------------------------------
# Criterion 5: gamma sweep trend
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_gamma_sweep_trend(gamma_sweep):
    rows = {r.gamma: r for r in gamma_sweep}
    assert set(rows) == {0.0, 10.0, 100.0, 200.0}
    base = rows[0.0]
    for gamma in (100.0, 200.0):
        assert rows[gamma].interpretability > base.interpretability
        assert rows[gamma].image_mi >= 0.85 * base.image_mi

    detail = ", ".join(
        f"g={int(g)}: interp {rows[g].interpretability:.3f} mi {rows[g].image_mi:.3f}"
        for g in sorted(rows)
    )
    report_pass(5, detail)


# ---------------------------------------------------------------------------
# Criterion 6: classification head
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_classification(attri_run):
    report = attri_run["report"]
    assert report.accuracy >= 0.9
    assert report.auc is not None and report.auc >= 0.9
    report_pass(6, f"accuracy {report.accuracy:.3f}, AUC {report.auc:.3f}")


# ---------------------------------------------------------------------------
# Criterion 7: attribute control along regularized dimensions
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_attribute_control(attri_run, trend_test_set):
    from attrvae.generate import empirical_dim_range, scan_attribute

    model = attri_run["model"]
    volumes = trend_test_set.volumes()
    labels = trend_test_set.labels()
    base_idx = int(np.flatnonzero(labels == 0)[0])  # healthy ring, clean masks
    z = encode_dataset(model, volumes[base_idx][None])[0]

    checks = {}
    for attr, measure in (("cavity_area", measured_cavity_area),
                          ("wall_thickness", measured_ring_width)):
        dim = MAPPING.dim_of(attr)
        lo, hi = empirical_dim_range(model, volumes, dim, coverage=0.98)
        row = scan_attribute(model, z, attr, MAPPING, (lo, hi), steps=7)
        values = [measure(v) for v in row.volumes]
        inversions = count_inversions(values)
        checks[attr] = (values, inversions)
        assert inversions <= 1, (attr, values)

    detail = "; ".join(
        f"{attr}: {inv} inversion(s), range {min(v):.0f}..{max(v):.0f}"
        for attr, (v, inv) in checks.items()
    )
    report_pass(7, detail)


# ---------------------------------------------------------------------------
# End-to-end example contracts riding on the trained model
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_trained_reconstruction_median_similarity(attri_run, trend_test_set):
    """Median normalized MI between inputs and decode(encode(x).mu) >= 0.5."""
    from attrvae.model import reconstruct_dataset

    volumes = trend_test_set.volumes()
    recon = reconstruct_dataset(attri_run["model"], volumes)
    scores = [image_mi(x, r) for x, r in zip(volumes, recon)]
    assert float(np.median(scores)) >= 0.5


@pytest.mark.slow
def test_projection_of_discriminative_attributes_separates_classes(attri_run, trend_test_set):
    """A line fit on the 2-D projection of the two most discriminative
    regularized dimensions separates the classes with >= 0.9 accuracy."""
    from sklearn.linear_model import LogisticRegression

    from attrvae.dataio import rfe_select

    top_two = rfe_select(trend_test_set, n_keep=2)
    dims = [MAPPING.dim_of(a) for a in top_two]
    Z = encode_dataset(attri_run["model"], trend_test_set.volumes())[:, dims]
    y = trend_test_set.labels()
    clf = LogisticRegression().fit(Z, y)
    assert clf.score(Z, y) >= 0.9


# ---------------------------------------------------------------------------
# Criterion 8: ablation parity of the logged breakdown
# ---------------------------------------------------------------------------

def test_criterion_8_ablation_parity():
    dataset = generate_annulus_dataset(tiny_annulus_spec(n_samples=48, seed=3))
    weights = LossWeights(beta=2.0, gamma=50.0, delta=10.0)
    finals = {}
    for variant in ("vae", "beta_vae", "ar_vae", "attri_vae"):
        toggles = Toggles.from_variant(variant)
        cfg = tiny_model_config(
            use_beta=toggles.use_beta, use_mlp=toggles.use_mlp, use_ar=toggles.use_ar
        )
        model = build_model(cfg, seed=1)
        tc = TrainConfig(weights=weights, lr=1e-3, batch_size=8, epochs=3, seed=1,
                         split_fraction=0.7, val_metrics_every=0)
        _, rows = train(model, dataset, tc, MAPPING if toggles.use_ar else None)
        beta_eff = weights.beta if toggles.use_beta else 1.0
        for r in rows:
            expect = r.recon + beta_eff * r.kl + r.mlp + weights.gamma * r.ar
            assert r.total == pytest.approx(expect, rel=1e-6)
            if not toggles.use_mlp:
                assert r.mlp == 0.0
            if not toggles.use_ar:
                assert r.ar == 0.0
        finals[variant] = round(rows[-1].total, 6)

    assert len(set(finals.values())) == 4, finals
    report_pass(8, f"four distinct objectives, identity holds: {finals}")
