"""Command-line interface.

Subcommands::

    train         train a model on a dataset, write metrics/checkpoint
    eval          evaluate a checkpoint on a dataset
    cv            stratified k-fold cross-validation
    robustness    accuracy under point deletion / Gaussian noise
    oracle-check  verify the grid-convolution equivalence, exit 0 on success
    filters-dump  sample first-layer filter responses over an offset lattice

Every run writes ``manifest.json`` (seed, config hash, versions) into the
output directory so it can be reproduced. ``ECC_THREADS`` caps the worker
threads used for pyramid construction.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, coarsen, pointcloud
from .config import parse as parse_config
from .conv import build_grid_graph, ecc_forward, generate_weights, grid_interior_mask, grid_oracle, EccParams
from .datasets import load_cloud_directory, load_mnist, load_tu
from .errors import EccError, LoadError
from .graph import with_uniform_labels
from .network import (DEFAULT_HIDDEN_CATEGORICAL, DEFAULT_HIDDEN_CONTINUOUS,
                      build_network)
from .serialize import load_checkpoint, save_checkpoint
from .tensor import Tensor
from .training import (TrainConfig, cross_validate, evaluate, robustness_eval,
                       train, write_metrics)


def _threads() -> int:
    env = os.environ.get("ECC_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _pmap(fn, items):
    workers = _threads()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_manifest(out: Path, args: argparse.Namespace) -> None:
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "argv": sys.argv[1:],
        "seed": getattr(args, "seed", None),
        "config": getattr(args, "config", None),
        "config_sha256": hashlib.sha256(
            (getattr(args, "config", "") or "").encode()).hexdigest(),
        "eccnet_version": __version__,
        "numpy_version": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out / "manifest.json").write_text(json.dumps(payload, indent=2) + "\n")


def _filter_hidden(args) -> tuple[int, ...] | None:
    if args.filter_net is None:
        # the no-edge-label ablation pins a single-layer filter net
        return () if getattr(args, "no_edge_labels", False) else None
    text = args.filter_net.strip()
    if text.lower() in ("", "none"):
        return ()
    return tuple(int(t) for t in text.split(","))


def _apply_experiment_file(parser: argparse.ArgumentParser,
                           args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from a JSON experiment file; explicit flags win.

    The file maps option names (underscore form) to values, e.g.
    ``{"dataset": "data/molecules", "kind": "tu", "config": "...",
    "epochs": 50}``. Referenced paths must exist and the config must parse.
    """
    path = Path(args.experiment)
    if not path.exists():
        raise LoadError(f"experiment file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"experiment file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise LoadError(f"experiment file {path} must hold a JSON object")
    for key, value in payload.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("experiment", "fn", "_parser"):
            raise LoadError(f"experiment file {path}: unknown option {key!r}")
        if getattr(args, dest) == parser.get_default(dest):
            setattr(args, dest, value)
    if getattr(args, "config", None):
        parse_config(args.config)  # reject broken configs at load time
    for attr in ("dataset", "checkpoint"):
        value = getattr(args, attr, None)
        if value and not Path(value).exists():
            raise LoadError(f"experiment file {path}: {attr} path does not exist: {value}")
    return args


def _mnist_paths(root: Path, split: str) -> tuple[Path, Path]:
    prefix = "train" if split == "train" else "t10k"
    return root / f"{prefix}-images-idx3-ubyte", root / f"{prefix}-labels-idx1-ubyte"


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise EccError("missing required option(s): "
                       + ", ".join(f"--{n.replace('_', '-')}" for n in missing))


def _load_dataset(args, split: str = "train"):
    """Returns (pyramids, targets, default_hidden, make_pyramid_or_None, samples)."""
    _require(args, "dataset", "config")
    spec = parse_config(args.config, variant=args.variant,
                        filter_hidden=_filter_hidden(args))
    root = Path(args.dataset)
    if args.kind == "tu":
        ds = load_tu(root)
        depth = spec.num_pools()

        def make_pyramid(g, rng):
            pyr = coarsen.build_pyramid(g, depth, q=args.sparsify_q,
                                        degree_variant=args.degree_labels, rng=rng)
            return with_uniform_labels(pyr) if args.no_edge_labels else pyr

        pyramids = _pmap(
            lambda i: make_pyramid(ds.graphs[i], np.random.default_rng((args.seed, i))),
            list(range(len(ds.graphs))))
        return pyramids, ds.targets, DEFAULT_HIDDEN_CATEGORICAL, make_pyramid, ds.graphs
    if args.kind == "mnist":
        images, labels = _mnist_paths(root, split)
        clouds, targets = load_mnist(images, labels, sparse=args.sparse)
        levels = [(args.r0, args.rho0)] + spec.pool_params()
        pyramids = _pmap(lambda pc: pointcloud.build_pyramid(pc, levels, args.label_scheme),
                         clouds)
        return pyramids, targets, DEFAULT_HIDDEN_CONTINUOUS, None, clouds
    if args.kind == "pointcloud":
        clouds, targets, _ = load_cloud_directory(root)
        levels = [(args.r0, args.rho0)] + spec.pool_params()
        pyramids = _pmap(lambda pc: pointcloud.build_pyramid(pc, levels, args.label_scheme),
                         clouds)
        return pyramids, targets, DEFAULT_HIDDEN_CONTINUOUS, None, clouds
    raise EccError(f"unknown dataset kind {args.kind!r}")


def _build_model(args, pyramids, default_hidden):
    spec = parse_config(args.config, variant=args.variant,
                        filter_hidden=_filter_hidden(args))
    sample = pyramids[0]
    return build_network(spec, input_dim=sample.levels[0].signal_dim,
                         label_widths=sample.label_widths(),
                         rng=np.random.default_rng(args.seed),
                         default_hidden=default_hidden,
                         conv_dropout=args.conv_dropout,
                         filter_bias=not args.no_edge_labels)


def _train_config(args) -> TrainConfig:
    ops = tuple(t for t in (args.augment or "").split(",") if t)
    params = {}
    if args.augment_delete_fraction is not None:
        params["delete_fraction"] = args.augment_delete_fraction
    if args.augment_noise_sigma is not None:
        params["noise_sigma"] = args.augment_noise_sigma
    return TrainConfig(epochs=args.epochs, batch_size=args.batch, base_lr=args.lr,
                       lr_decay_epochs=tuple(args.lr_decay), seed=args.seed,
                       lr_decay_factor=args.lr_decay_factor, momentum=args.momentum,
                       augment_ops=ops, augment_params=params)


def cmd_train(args) -> int:
    out = Path(args.out)
    _write_manifest(out, args)
    pyramids, targets, hidden, make_pyramid, samples = _load_dataset(args)
    eval_pyr = eval_y = None
    if args.kind == "mnist" and _mnist_paths(Path(args.dataset), "test")[0].exists():
        eval_pyr, eval_y, _, _, _ = _load_dataset(args, split="test")
    cfg = _train_config(args)
    refresh = None
    if args.kind == "tu" and args.expand > 1:
        # pre-generate independently sparsified pyramid copies per graph
        expanded, ey = [], []
        for i, g in enumerate(samples):
            expanded.append(pyramids[i])
            ey.append(targets[i])
            for c in range(1, args.expand):
                rng = np.random.default_rng((args.seed, c, i))
                expanded.append(make_pyramid(g, rng))
                ey.append(targets[i])
        pyramids, targets = expanded, np.asarray(ey)
    elif args.kind in ("mnist", "pointcloud") and cfg.augment_ops:
        spec = parse_config(args.config, variant=args.variant)
        levels = [(args.r0, args.rho0)] + spec.pool_params()

        def refresh(epoch, rng):
            return [pointcloud.build_pyramid(
                pointcloud.augment(pc, cfg.augment_ops, rng, **cfg.augment_params),
                levels, args.label_scheme) for pc in samples]

    model = _build_model(args, pyramids, hidden)
    log = train(model, pyramids, targets, cfg,
                eval_pyramids=eval_pyr, eval_targets=eval_y, refresh=refresh)
    write_metrics(out / "metrics.csv", log)
    save_checkpoint(out / "checkpoint.bin", model.state_arrays())
    final = log[-1] if log else {}
    print(f"train_loss={final.get('train_loss'):.4f} train_acc={final.get('train_acc'):.4f}")
    return 0


def cmd_eval(args) -> int:
    _require(args, "checkpoint")
    _write_manifest(Path(args.out), args)
    pyramids, targets, hidden, _, _ = _load_dataset(args, split=args.split)
    model = _build_model(args, pyramids, hidden)
    model.load_state(load_checkpoint(args.checkpoint))
    acc = evaluate(model, pyramids, targets, args.batch)
    print(f"accuracy={acc:.4f}")
    return 0


def cmd_cv(args) -> int:
    out = Path(args.out)
    _write_manifest(out, args)
    pyramids, targets, hidden, make_pyramid, samples = _load_dataset(args)
    cfg = _train_config(args)
    if make_pyramid is None:
        # deterministic pyramids: reuse them across folds
        make_cached = lambda i, rng: pyramids[i]
        samples = list(range(len(pyramids)))
        make_pyramid = make_cached

    def model_factory(sample_pyr, rng):
        spec = parse_config(args.config, variant=args.variant,
                            filter_hidden=_filter_hidden(args))
        return build_network(spec, input_dim=sample_pyr.levels[0].signal_dim,
                             label_widths=sample_pyr.label_widths(), rng=rng,
                             default_hidden=hidden, conv_dropout=args.conv_dropout,
                             filter_bias=not args.no_edge_labels)

    result = cross_validate(samples, targets, cfg, make_pyramid, model_factory,
                            k=args.folds, expand=args.expand)
    for i, acc in enumerate(result.fold_accuracies):
        print(f"fold {i}: {acc:.4f}")
    print(f"mean accuracy: {result.mean:.4f} +/- {result.std:.4f}")
    (out / "cv.json").write_text(json.dumps({
        "folds": result.fold_accuracies, "mean": result.mean, "std": result.std}) + "\n")
    return 0


def cmd_robustness(args) -> int:
    _require(args, "dataset", "config", "checkpoint")
    out = Path(args.out)
    _write_manifest(out, args)
    spec = parse_config(args.config, variant=args.variant)
    clouds, targets, _ = load_cloud_directory(Path(args.dataset))
    levels = [(args.r0, args.rho0)] + spec.pool_params()
    pyramids = _pmap(lambda pc: pointcloud.build_pyramid(pc, levels, args.label_scheme),
                     clouds)
    model = _build_model(args, pyramids, DEFAULT_HIDDEN_CONTINUOUS)
    model.load_state(load_checkpoint(args.checkpoint))
    grid = [float(t) for t in args.levels.split(",")]
    curve = robustness_eval(
        model, clouds, targets, args.perturb, grid,
        lambda pc: pointcloud.build_pyramid(pc, levels, args.label_scheme),
        seed=args.seed)
    path = out / "robustness.csv"
    with open(path, "w") as fh:
        fh.write("level,accuracy\n")
        for level, acc in curve:
            fh.write(f"{level},{acc}\n")
            print(f"perturbation {level}: accuracy {acc:.4f}")
    return 0


def cmd_oracle_check(args) -> int:
    """Random grids: the one-hot-label convolution must match the direct
    convolution oracle on interior vertices."""
    if args.target != "grid":
        raise EccError(f"unknown oracle target {args.target!r}")
    _write_manifest(Path(args.out), args)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(10):
        if trial % 2 == 0:
            n, w = 16, rng.choice([3, 5])
            g = build_grid_graph(int(n), int(w))
            signal = rng.standard_normal(n)
            kernel = rng.standard_normal(int(w))
            shape = int(n)
        else:
            shape, w = (9, 9), 3
            g = build_grid_graph(shape, w)
            signal = rng.standard_normal(shape)
            kernel = rng.standard_normal((w, w))
        params = EccParams(1, 1, g.s, rng, hidden=(), normalize=False,
                           filter_bias=False)
        params.filter_net.weights[0].data = kernel.reshape(-1, 1).astype(float)
        out = ecc_forward(g, Tensor(signal.reshape(-1, 1)), params)
        expected = grid_oracle(signal, kernel).reshape(-1)
        interior = grid_interior_mask(shape, int(w))
        worst = max(worst, float(np.abs(out.data[:, 0] - expected)[interior].max()))
    print(f"max interior deviation: {worst:.3e}")
    if worst > 1e-10:
        print("FAIL")
        return 1
    print("OK")
    return 0


def cmd_filters_dump(args) -> int:
    _require(args, "config")
    out = Path(args.out)
    _write_manifest(out, args)
    spec = parse_config(args.config, variant=args.variant,
                        filter_hidden=_filter_hidden(args))
    from .config import Conv
    first = next(d for d in spec.layers if isinstance(d, Conv))
    d_out, d_in = first.channels, args.input_dim
    hidden = spec.filter_hidden if spec.filter_hidden is not None else DEFAULT_HIDDEN_CONTINUOUS
    params = EccParams(d_in, d_out, 6, np.random.default_rng(args.seed), hidden=hidden)
    if args.checkpoint:
        arrays = load_checkpoint(args.checkpoint)
        for j, w in enumerate(params.filter_net.weights):
            w.data = arrays[f"layer0.ConvLayer.filter.w{j}"]
        for j, b in enumerate(params.filter_net.biases):
            b.data = arrays[f"layer0.ConvLayer.filter.b{j}"]
    ticks = np.arange(-2.0, 2.0 + 1e-9, args.step)
    gx, gy = np.meshgrid(ticks, ticks, indexing="xy")
    offsets = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    labels = pointcloud.edge_labels_from_offsets(offsets, "full6d")
    theta = generate_weights(params, labels).data  # [npts, d_out, d_in]
    side = len(ticks)
    rows = ["offset_x,offset_y,out_channel,in_channel,value"]
    for o in range(d_out):
        for i in range(d_in):
            grid = theta[:, o, i].reshape(side, side)
            lo, hi = grid.min(), grid.max()
            scaled = np.zeros_like(grid) if hi == lo else (grid - lo) / (hi - lo)
            pgm = out / f"filter_o{o}_i{i}.pgm"
            with open(pgm, "wb") as fh:
                fh.write(f"P5 {side} {side} 255\n".encode())
                fh.write((scaled * 255).astype(np.uint8).tobytes())
            for p in range(theta.shape[0]):
                rows.append(f"{offsets[p, 0]},{offsets[p, 1]},{o},{i},{theta[p, o, i]}")
    (out / "filters.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {d_out * d_in} filter grid(s) at step {args.step} to {out}")
    return 0


def _add_common(p: argparse.ArgumentParser, with_data: bool = True) -> None:
    p.add_argument("--experiment", default=None,
                   help="JSON experiment file supplying defaults for any option")
    if with_data:
        p.add_argument("--dataset", default=None, help="dataset path")
        p.add_argument("--kind", choices=["tu", "mnist", "pointcloud"], default="tu")
    p.add_argument("--config", default=None, help="network configuration string")
    p.add_argument("--filter-net", default=None,
                   help="comma-separated filter-net hidden widths ('none' for single layer)")
    p.add_argument("--variant", choices=["plain", "resnet", "z"], default="plain")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--lr-decay", type=int, nargs="*", default=[])
    p.add_argument("--lr-decay-factor", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--conv-dropout", type=float, default=0.0)
    p.add_argument("--degree-labels",
                   choices=["none", "inv_sqrt", "inv", "sqrt", "raw"], default="none")
    p.add_argument("--label-scheme", choices=sorted(pointcloud.LABEL_SCHEMES),
                   default="full6d")
    p.add_argument("--sparsify-q", type=float, default=4.0)
    p.add_argument("--expand", type=int, default=5,
                   help="sparsified pyramid copies per training graph")
    p.add_argument("--no-edge-labels", action="store_true",
                   help="ablation: uniform labels and single-layer filter nets")
    p.add_argument("--augment", default="",
                   help="comma-separated point-cloud augmentation ops applied per epoch "
                        "(rotate_z,scale_jitter,mirror,delete_points,gaussian_noise)")
    p.add_argument("--augment-delete-fraction", type=float, default=None)
    p.add_argument("--augment-noise-sigma", type=float, default=None)
    p.add_argument("--sparse", action="store_true", help="drop zero-signal raster points")
    p.add_argument("--r0", type=float, default=0.1, help="level-0 voxel resolution")
    p.add_argument("--rho0", type=float, default=0.2, help="level-0 neighborhood radius")
    p.add_argument("--out", default="runs/out", help="output directory")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="eccnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.set_defaults(fn=cmd_train, _parser=p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.set_defaults(fn=cmd_eval, _parser=p)

    p = sub.add_parser("cv", help="k-fold cross-validation")
    _add_common(p)
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(fn=cmd_cv, _parser=p)

    p = sub.add_parser("robustness", help="perturbation robustness curve")
    _add_common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--perturb", choices=["delete", "gaussian"], default="delete")
    p.add_argument("--levels", default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p.set_defaults(fn=cmd_robustness, _parser=p)

    p = sub.add_parser("oracle-check", help="grid-convolution equivalence check")
    p.add_argument("target", nargs="?", default="grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/oracle-check")
    p.set_defaults(fn=cmd_oracle_check, _parser=p)

    p = sub.add_parser("filters-dump", help="sample filter responses over offsets")
    _add_common(p, with_data=False)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--input-dim", type=int, default=1)
    p.set_defaults(fn=cmd_filters_dump, _parser=p)

    args = parser.parse_args(argv)
    try:
        if getattr(args, "experiment", None):
            args = _apply_experiment_file(args._parser, args)
        return args.fn(args)
    except (EccError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
