"""Command-line entry point.

Commands: ``synth``, ``train``, ``eval``, ``traverse``, ``attend``,
``project``, ``sweep``. Configuration lives in a single JSON file, with
``--set key=value`` dotted overrides; every command validates its inputs fully
before touching the output directory.

Exit codes: 0 success, 2 configuration error, 3 runtime numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attention import attention_map, overlay, save_heat_raw, save_overlay_slices
from .dataio import (
    AnnulusSpec,
    Dataset,
    Sample,
    generate_annulus_dataset,
    load_dataset,
    preprocess,
    save_dataset,
)
from .generate import (
    TraversalGrid,
    TraversalRow,
    centered_scan_range,
    empirical_dim_range,
    interpolate,
    save_montage,
    scan_attribute,
    write_manifest,
)
from .losses import AttributeMapping, LossWeights, Toggles
from .model import (
    ModelCheckpoint,
    ModelConfig,
    build_model,
    decode_latents,
    encode_dataset,
)
from .train import (
    TrainConfig,
    evaluate_model,
    hyperparameter_sweep,
    train,
    write_sweep_table,
    write_train_log,
)

_TOP_KEYS = {"output_dir", "seed", "variant", "dataset", "model", "weights", "mapping", "train", "sweep"}
_DATASET_KEYS = {"synthetic", "dir", "volume_dir", "attribute_table", "preprocess"}
_TRAIN_KEYS = {
    "lr", "batch_size", "epochs", "split_fraction", "oversample",
    "early_stop", "patience", "val_metrics_every",
}
_WEIGHT_KEYS = {"beta", "gamma", "delta"}


@dataclass
class RunConfig:
    output_dir: Path
    seed: int
    dataset: dict
    model: ModelConfig
    weights: LossWeights
    mapping: AttributeMapping | None
    train: TrainConfig
    sweep: dict | None


def _apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ValueError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ValueError(f"--set path {key!r} traverses a non-object value")
    node[parts[-1]] = parsed


def _parse_mapping(raw) -> AttributeMapping | None:
    if raw is None:
        return None
    if isinstance(raw, dict):
        entries = tuple((str(k), int(v)) for k, v in raw.items())
    else:
        entries = tuple((str(n), int(d)) for n, d in raw)
    return AttributeMapping(entries=entries)


def load_config(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    """Parse, override, and validate the whole run configuration."""
    raw = json.loads(Path(path).read_text())
    for item in overrides or []:
        _apply_override(raw, item)

    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    dataset = raw.get("dataset", {})
    bad = set(dataset) - _DATASET_KEYS
    if bad:
        raise ValueError(f"unknown dataset config keys: {sorted(bad)}")
    sources = [k for k in ("synthetic", "dir", "volume_dir") if k in dataset]
    if len(sources) > 1:
        raise ValueError(f"dataset section must name one source, got {sources}")

    seed = int(raw.get("seed", 0))

    model_raw = dict(raw.get("model", {}))
    variant = raw.get("variant")
    if variant is not None:
        toggles = Toggles.from_variant(str(variant))
        model_raw.update(
            use_beta=toggles.use_beta, use_mlp=toggles.use_mlp, use_ar=toggles.use_ar
        )
    model = ModelConfig.from_dict(model_raw)

    weights_raw = raw.get("weights", {})
    bad = set(weights_raw) - _WEIGHT_KEYS
    if bad:
        raise ValueError(f"unknown weights keys: {sorted(bad)}")
    weights = LossWeights(**{k: float(v) for k, v in weights_raw.items()})

    train_raw = raw.get("train", {})
    bad = set(train_raw) - _TRAIN_KEYS
    if bad:
        raise ValueError(f"unknown train config keys: {sorted(bad)}")
    train_cfg = TrainConfig(weights=weights, seed=seed, **train_raw)

    mapping = _parse_mapping(raw.get("mapping"))
    if mapping is not None:
        mapping.validate_for(model.latent_dim)
    if model.use_ar and mapping is None:
        raise ValueError("attribute regularization is enabled but no mapping is configured")

    sweep = raw.get("sweep")
    if sweep is not None:
        bad = set(sweep) - _WEIGHT_KEYS
        if bad:
            raise ValueError(f"unknown sweep grid keys: {sorted(bad)}")

    return RunConfig(
        output_dir=Path(raw.get("output_dir", "attrvae_out")),
        seed=seed,
        dataset=dataset,
        model=model,
        weights=weights,
        mapping=mapping,
        train=train_cfg,
        sweep=sweep,
    )


def _load_dataset_dir(path: str | Path) -> Dataset:
    path = Path(path)
    table = path / "attributes.csv"
    if not table.exists():
        raise ValueError(f"no attributes.csv under {path}")
    return load_dataset(path, table)


def _resolve_dataset(config: RunConfig) -> Dataset:
    section = config.dataset
    if "synthetic" in section:
        spec = AnnulusSpec(**section["synthetic"])
        ds = generate_annulus_dataset(spec)
    elif "dir" in section:
        ds = _load_dataset_dir(section["dir"])
    elif "volume_dir" in section:
        if "attribute_table" not in section:
            raise ValueError("dataset.volume_dir requires dataset.attribute_table")
        ds = load_dataset(section["volume_dir"], section["attribute_table"])
    else:
        raise ValueError("dataset section must provide 'synthetic', 'dir', or 'volume_dir'")
    if section.get("preprocess"):
        target = tuple(config.model.image_shape)
        samples = tuple(
            Sample(id=s.id, volume=preprocess(s.volume, target), attributes=s.attributes, label=s.label)
            for s in ds.samples
        )
        ds = Dataset(samples=samples, attribute_names=ds.attribute_names, shape=target)
    return ds


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = load_config(args.config, args.set)
    if "synthetic" not in config.dataset:
        raise ValueError("synth requires a dataset.synthetic section")
    spec = AnnulusSpec(**config.dataset["synthetic"])
    ds = generate_annulus_dataset(spec)
    out = Path(args.out) if args.out else config.output_dir / "dataset"
    save_dataset(ds, out)

    labels = ds.labels()
    print(f"wrote {len(ds)} samples to {out}")
    print(f"class counts: 0={int(np.sum(labels == 0))} 1={int(np.sum(labels == 1))}")
    A = ds.attribute_matrix()
    for j, name in enumerate(ds.attribute_names):
        print(f"attribute {name}: min={A[:, j].min():.4g} max={A[:, j].max():.4g}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, args.set)
    ds = _resolve_dataset(config)
    if tuple(ds.shape) != tuple(config.model.image_shape):
        raise ValueError(
            f"dataset shape {tuple(ds.shape)} does not match model image_shape "
            f"{tuple(config.model.image_shape)}; set dataset.preprocess=true to adapt"
        )
    model = build_model(config.model, config.seed)
    checkpoint, rows = train(model, ds, config.train, config.mapping)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / "checkpoint")
    write_train_log(rows, out / "train_log.csv")
    last = rows[-1]
    print(f"trained {last.epoch} epochs; final total loss {last.total:.6g}")
    print(f"checkpoint written to {out / 'checkpoint.pt'}")
    return 0


def _interp_mapping(checkpoint: ModelCheckpoint) -> AttributeMapping | None:
    """Regularized models evaluate at their mapped dims; baselines use max-MI."""
    return checkpoint.mapping if checkpoint.config.use_ar else None


def cmd_eval(args) -> int:
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    ds = _load_dataset_dir(args.dataset)
    model = checkpoint.build(best=args.best)
    report = evaluate_model(model, ds, _interp_mapping(checkpoint))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json())
    print(report.to_json(), end="")
    return 0


def cmd_traverse(args) -> int:
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    ds = _load_dataset_dir(args.dataset)
    model = checkpoint.build(best=args.best)
    out = Path(args.out)
    ids = ds.ids()

    grid = TraversalGrid()
    if args.between:
        id_a, id_b = args.between
        for sid in (id_a, id_b):
            if sid not in ids:
                raise ValueError(f"sample id {sid!r} not found in dataset")
        vols = ds.volumes()
        mu = encode_dataset(model, np.stack([vols[ids.index(id_a)], vols[ids.index(id_b)]]))
        codes = interpolate(mu[0], mu[1], args.steps)
        decoded = decode_latents(model, np.stack(codes))
        grid.add(
            TraversalRow(
                descriptor=f"{id_a}->{id_b}",
                volumes=[decoded[i] for i in range(len(codes))],
                step_values=list(np.linspace(0.0, 1.0, args.steps)),
            )
        )
    elif args.scan:
        if checkpoint.mapping is None:
            raise ValueError("checkpoint has no attribute mapping; cannot scan")
        base_id = args.id or ids[0]
        if base_id not in ids:
            raise ValueError(f"sample id {base_id!r} not found in dataset")
        vols = ds.volumes()
        z = encode_dataset(model, vols[ids.index(base_id)][None])[0]
        for attr in args.scan:
            dim = checkpoint.mapping.dim_of(attr)
            lo, hi = empirical_dim_range(model, vols, dim, coverage=args.coverage)
            lo, hi = centered_scan_range(float(z[dim]), lo, hi)
            row = scan_attribute(model, z, attr, checkpoint.mapping, (lo, hi), args.steps)
            grid.add(row)
            if args.attend:
                overlays = []
                for vol in row.volumes:
                    amap = attention_map(model, vol, dim, attribute_name=attr)
                    overlays.append(overlay(amap, vol, args.alpha))
                grid.add(
                    TraversalRow(
                        descriptor=f"{attr}_attention",
                        volumes=overlays,
                        step_values=row.step_values,
                    )
                )
    else:
        raise ValueError("traverse requires --between or --scan")

    out.mkdir(parents=True, exist_ok=True)
    save_montage(grid, out / "traversal.png")
    write_manifest(grid, out / "traversal.csv")
    print(f"wrote {sum(len(r.volumes) for r in grid.rows)} tiles to {out / 'traversal.png'}")
    return 0


def cmd_attend(args) -> int:
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    ds = _load_dataset_dir(args.dataset)
    if checkpoint.mapping is None:
        raise ValueError("checkpoint has no attribute mapping; cannot render attention")
    model = checkpoint.build(best=args.best)
    out = Path(args.out)
    ids = ds.ids()
    targets = args.ids or ids[:1]
    attrs = args.attrs or checkpoint.mapping.names()
    for sid in targets:
        if sid not in ids:
            raise ValueError(f"sample id {sid!r} not found in dataset")
    written = 0
    for sid in targets:
        x = ds.samples[ids.index(sid)].volume
        for attr in attrs:
            dim = checkpoint.mapping.dim_of(attr)
            amap = attention_map(model, x, dim, attribute_name=attr)
            stack = overlay(amap, x, args.alpha)
            written += len(save_overlay_slices(stack, out, sid, attr))
            if args.raw:
                save_heat_raw(amap, out, f"{sid}_{attr}_heat")
    print(f"wrote {written} overlay slices to {out}")
    return 0


def cmd_project(args) -> int:
    checkpoint = ModelCheckpoint.load(args.checkpoint)
    ds = _load_dataset_dir(args.dataset)
    if checkpoint.mapping is None:
        raise ValueError("checkpoint has no attribute mapping; cannot project")
    model = checkpoint.build(best=args.best)
    dim_x = checkpoint.mapping.dim_of(args.x)
    dim_y = checkpoint.mapping.dim_of(args.y)
    Z = encode_dataset(model, ds.volumes())
    labels = ds.labels()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "projection.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", f"z_{args.x}", f"z_{args.y}", "label"])
        for sid, zx, zy, lab in zip(ds.ids(), Z[:, dim_x], Z[:, dim_y], labels):
            writer.writerow([sid, repr(float(zx)), repr(float(zy)), int(lab)])

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 5))
    for lab, color in ((0, "tab:blue"), (1, "tab:red")):
        m = labels == lab
        ax.scatter(Z[m, dim_x], Z[m, dim_y], s=8, c=color, label=f"class {lab}")
    ax.set_xlabel(f"z[{dim_x}] ({args.x})")
    ax.set_ylabel(f"z[{dim_y}] ({args.y})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "projection.png", dpi=150)
    plt.close(fig)
    print(f"wrote {len(ds)} points to {csv_path}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config, args.set)
    if config.mapping is None:
        raise ValueError("sweep requires a mapping")
    grids = config.sweep or {}
    betas = [float(v) for v in grids.get("beta", [config.weights.beta])]
    gammas = [float(v) for v in grids.get("gamma", [config.weights.gamma])]
    deltas = [float(v) for v in grids.get("delta", [config.weights.delta])]
    ds = _resolve_dataset(config)
    rows = hyperparameter_sweep(config.model, ds, config.train, config.mapping, betas, gammas, deltas)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_table(rows, out / "sweep.csv")

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for r in rows:
        ax.scatter(r.image_mi, r.interpretability, s=30)
        ax.annotate(f"b={r.beta:g},g={r.gamma:g},d={r.delta:g}", (r.image_mi, r.interpretability), fontsize=6)
    ax.set_xlabel("image mutual information")
    ax.set_ylabel("mean interpretability")
    fig.tight_layout()
    fig.savefig(out / "sweep.png", dpi=150)
    plt.close(fig)
    print(f"swept {len(rows)} grid points; table at {out / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")

    def add_ckpt(p):
        p.add_argument("--checkpoint", required=True, help="checkpoint path (without suffix)")
        p.add_argument("--dataset", required=True, help="dataset directory (with attributes.csv)")
        p.add_argument("--out", default="attrvae_out", help="output directory")
        p.add_argument("--best", action="store_true", help="use the best-validation weights")

    p = sub.add_parser("synth", help="generate and store a synthetic dataset")
    add_config(p)
    p.add_argument("--out", default=None, help="dataset directory override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model variant")
    add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    add_ckpt(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("traverse", help="latent interpolation or attribute scans")
    add_ckpt(p)
    p.add_argument("--between", nargs=2, metavar=("ID_A", "ID_B"), help="interpolate two samples")
    p.add_argument("--scan", nargs="+", metavar="ATTR", help="scan mapped attributes")
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--id", default=None, help="base sample id for scans")
    p.add_argument("--coverage", type=float, default=0.98)
    p.add_argument("--attend", action="store_true", help="add attention overlay rows to scans")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_traverse)

    p = sub.add_parser("attend", help="render attribute attention overlays")
    add_ckpt(p)
    p.add_argument("--ids", nargs="+", default=None)
    p.add_argument("--attrs", nargs="+", default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--raw", action="store_true", help="also dump raw heat volumes")
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("project", help="scatter two regularized dimensions")
    add_ckpt(p)
    p.add_argument("--x", required=True, help="attribute for the x axis")
    p.add_argument("--y", required=True, help="attribute for the y axis")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("sweep", help="hyperparameter grid sweep")
    add_config(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
