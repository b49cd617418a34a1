"""``dscnet`` command line: staged pipeline with on-disk artifacts.

Every stage reads a flat JSON run configuration (``--config``) and writes into
an output directory together with ``manifest.json``, which records the config
hash, the resolved configuration and per-stage seeds. See ``docs/formats.md``.
"""

import argparse
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    load_pgm_dir,
    read_label_csv,
    read_matrix,
    resize_bilinear,
    save_pgm_dir,
    write_heatmap,
    write_label_csv,
    write_matrix,
)
from .estimators import AFFINITIES, cluster_coefficients
from .evaluation import SynthSpec, clustering_error, format_error, synth_subspaces, write_results
from .exceptions import ConfigError, DSCError, MissingArtifactError, NumericalError
from .model import PRESETS, ModelConfig, count_params, load_checkpoint, save_checkpoint
from .training import TrainSchedule, finetune, pretrain

logger = logging.getLogger("dscnet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4

MANIFEST = "manifest.json"
PRETRAIN_CKPT, PRETRAIN_LOG = "pretrain.ckpt", "pretrain_log.csv"
FINETUNE_CKPT, FINETUNE_LOG = "finetune.ckpt", "finetune_log.csv"
C_FILE, A_FILE, LABELS_FILE, METRICS_FILE = "C.dscmat", "A.dscmat", "labels.csv", "metrics.csv"

RUN_DEFAULTS = {
    "data": None,
    "truth": None,
    "resize": None,
    "preset": None,
    "kernels": None,
    "channels": None,
    "input_hw": None,
    "regularizer": "L2",
    "zero_diag": None,
    "lambda1": 1.0,
    "lambda2": 1.0,
    "n_clusters": None,
    "seed": 0,
    "learning_rate": 1e-3,
    "pretrain_epochs": 1000,
    "finetune_epochs": 100,
    "early_stop_patience": 50,
    "affinity": "lowrank",
    "subspace_dim": 4,
    "alpha": 1.0,
    "rho": 1.0,
    "restarts": 20,
    "out": "run",
}


# -- configuration ---------------------------------------------------------------------------


def load_run_config(path):
    """Read a flat JSON run config (or a manifest) and fill in defaults.

    Relative ``data``/``truth``/``out`` paths are resolved against the config
    file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if "config_hash" in raw and "config" in raw:
        raw = raw["config"]  # re-running from a manifest
    unknown = sorted(set(raw) - set(RUN_DEFAULTS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    cfg = dict(RUN_DEFAULTS)
    if raw.get("preset"):
        if raw["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {raw['preset']!r}; choose from {sorted(PRESETS)}")
        cfg.update({k: v for k, v in PRESETS[raw["preset"]].items() if k != "dataset_size"})
    cfg.update(raw)
    base = path.parent
    for key in ("data", "truth", "out"):
        if cfg[key] is not None and not Path(cfg[key]).is_absolute():
            cfg[key] = str((base / cfg[key]).resolve())
    if cfg["affinity"] not in AFFINITIES:
        raise ConfigError(f"affinity must be one of {AFFINITIES}")
    if cfg["n_clusters"] is not None and int(cfg["n_clusters"]) < 2:
        raise ConfigError(f"n_clusters must be >= 2, got {cfg['n_clusters']}")
    return cfg


def config_hash(cfg):
    canonical = json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_data(cfg):
    """Images ``(N, 1, H, W)`` and ground-truth labels (or ``None``)."""
    if not cfg["data"]:
        raise ConfigError("config has no 'data' entry")
    data = Path(cfg["data"])
    if not data.exists():
        raise ConfigError(f"data path {data} does not exist")
    labels = None
    if data.is_dir():
        bundle = load_pgm_dir(data)
        images, labels = bundle.images, bundle.labels
    else:
        rows = read_matrix(data)
        if not cfg["input_hw"]:
            raise ConfigError("matrix data needs 'input_hw' to reshape rows into images")
        h, w = (int(v) for v in cfg["input_hw"])
        if rows.shape[1] != h * w:
            raise ConfigError(f"matrix rows have {rows.shape[1]} entries, input_hw {h}x{w} needs {h * w}")
        images = rows.reshape(-1, 1, h, w)
    if cfg["resize"]:
        images = resize_bilinear(images, cfg["resize"])
    if cfg["truth"]:
        labels = read_label_csv(cfg["truth"])
        if len(labels) != len(images):
            raise ConfigError(f"truth has {len(labels)} labels for {len(images)} images")
    return images, labels


def model_config(cfg, n_samples=None, input_hw=None):
    if not cfg["kernels"] or not cfg["channels"]:
        raise ConfigError("config needs 'kernels' and 'channels' (or a 'preset')")
    return ModelConfig.from_layers(
        cfg["kernels"],
        cfg["channels"],
        input_hw or cfg["input_hw"],
        n_samples,
        regularizer=cfg["regularizer"],
        zero_diag=cfg["zero_diag"],
        lambda1=float(cfg["lambda1"]),
        lambda2=float(cfg["lambda2"]),
    )


# -- manifest ----------------------------------------------------------------------------------


def _read_manifest(out):
    path = out / MANIFEST
    return json.loads(path.read_text()) if path.exists() else None


def _check_manifest(out, cfg, force, quiet=False):
    """Manifest to extend, or ``None`` to start afresh; refuses a changed config unless forced."""
    digest = config_hash(cfg)
    manifest = _read_manifest(out)
    if manifest is not None and manifest.get("config_hash") != digest:
        if not force:
            raise ConfigError(
                f"{out / MANIFEST} was written with a different configuration "
                f"(hash {manifest.get('config_hash', '?')[:12]} vs {digest[:12]}); pass --force to overwrite"
            )
        if not quiet:
            logger.warning("configuration changed since earlier stages; continuing because of --force")
        return None
    return manifest


def _record_stage(out, cfg, stage, seed, force, **extra):
    out.mkdir(parents=True, exist_ok=True)
    manifest = _check_manifest(out, cfg, force, quiet=True)
    if manifest is None:
        manifest = {"version": __version__, "config_hash": config_hash(cfg), "config": cfg, "stages": {}}
    manifest["stages"][stage] = {
        "seed": seed,
        "finished": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _require(path, stage):
    if not path.exists():
        raise MissingArtifactError(path, stage)
    return path


def _out_dir(cfg, args):
    return Path(args.out or cfg["out"])


def _seed(cfg, args):
    return int(args.seed if args.seed is not None else cfg["seed"])


# -- subcommands -------------------------------------------------------------------------------


def cmd_params(args):
    cfg = load_run_config(args.config)
    if cfg["preset"]:
        n = PRESETS[cfg["preset"]]["dataset_size"]
    elif cfg["data"]:
        n = len(load_data(cfg)[0])
    else:
        raise ConfigError("need a 'preset' or 'data' to know the number of samples")
    hw = cfg["input_hw"] or cfg["resize"] or load_data(cfg)[0].shape[2:]
    counts = count_params(model_config(cfg, n, hw))
    for i, c in enumerate(counts["encoder"]):
        print(f"encoder.{i}\t{c}")
    print(f"self_expressive\t{counts['self_expressive']}")
    for j, c in enumerate(counts["decoder"]):
        print(f"decoder.{j}\t{c}")
    print(f"autoencoder_total\t{counts['autoencoder_total']}")
    print(f"total\t{counts['total']}")
    return EXIT_OK


def cmd_pretrain(args):
    cfg = load_run_config(args.config)
    out, seed = _out_dir(cfg, args), _seed(cfg, args)
    _check_manifest(out, cfg, args.force)
    X, _ = load_data(cfg)
    config = model_config(cfg, len(X), X.shape[2:])
    epochs = int(args.epochs or cfg["pretrain_epochs"])
    schedule = TrainSchedule(
        stage="pretrain",
        epochs=epochs,
        learning_rate=float(cfg["learning_rate"]),
        early_stop_patience=cfg["early_stop_patience"],
        seed=seed,
    )
    t0 = time.perf_counter()
    params, log = pretrain(X, config, schedule)
    _record_stage(out, cfg, "pretrain", seed, args.force, epochs=epochs, seconds=time.perf_counter() - t0)
    save_checkpoint(out / PRETRAIN_CKPT, config, params)
    log.to_csv(out / PRETRAIN_LOG)
    print(f"pretrain: {len(log)} epochs, final loss {log.losses[-1]:.6g} -> {out / PRETRAIN_CKPT}")
    return EXIT_OK


def cmd_finetune(args):
    cfg = load_run_config(args.config)
    out, seed = _out_dir(cfg, args), _seed(cfg, args)
    _check_manifest(out, cfg, args.force)
    _, pretrained = load_checkpoint(_require(out / PRETRAIN_CKPT, "pretrain"))
    X, _ = load_data(cfg)
    config = model_config(cfg, len(X), X.shape[2:])
    epochs = int(args.epochs or cfg["finetune_epochs"])
    schedule = TrainSchedule(epochs=epochs, learning_rate=float(cfg["learning_rate"]), seed=seed)
    t0 = time.perf_counter()
    params, log = finetune(X, pretrained, config, schedule)
    _record_stage(out, cfg, "finetune", seed, args.force, epochs=epochs, seconds=time.perf_counter() - t0)
    save_checkpoint(out / FINETUNE_CKPT, config, params)
    log.to_csv(out / FINETUNE_LOG)
    write_matrix(out / C_FILE, params.C)
    print(f"finetune: {len(log)} epochs, final loss {log.losses[-1]:.6g} -> {out / C_FILE}")
    return EXIT_OK


def cmd_cluster(args):
    cfg = load_run_config(args.config)
    out, seed = _out_dir(cfg, args), _seed(cfg, args)
    _check_manifest(out, cfg, args.force)
    config, params = load_checkpoint(_require(out / FINETUNE_CKPT, "finetune"))
    if not params.has_self_expressive:
        raise ConfigError(f"{out / FINETUNE_CKPT} holds no self-expressive coefficients")
    if cfg["n_clusters"] is None:
        raise ConfigError("config needs 'n_clusters'")
    t0 = time.perf_counter()
    A, labels = cluster_coefficients(
        params.C,
        int(cfg["n_clusters"]),
        affinity=cfg["affinity"],
        subspace_dim=int(cfg["subspace_dim"]),
        alpha=float(cfg["alpha"]),
        rho=float(cfg["rho"]),
        seed=seed,
        restarts=int(cfg["restarts"]),
    )
    seconds = time.perf_counter() - t0
    _record_stage(out, cfg, "cluster", seed, args.force, seconds=seconds)
    write_matrix(out / A_FILE, A)
    write_label_csv(out / LABELS_FILE, labels)
    print(f"cluster: {len(set(labels.tolist()))} clusters -> {out / LABELS_FILE}")
    _, truth = load_data(cfg) if cfg["data"] else (None, None)
    if truth is not None:
        err = clustering_error(labels, truth)
        row = dict(run=seed, K=int(cfg["n_clusters"]), method=f"DSC-Net-{config.regularizer}",
                   error_percent=err, seconds=seconds)
        write_results(out / METRICS_FILE, [row])
        print(f"error_percent {format_error(err)}")
    return EXIT_OK


def cmd_eval(args):
    pred = read_label_csv(_require(Path(args.pred), None))
    truth = read_label_csv(_require(Path(args.truth), None))
    if len(pred) != len(truth):
        raise ConfigError(f"{args.pred} has {len(pred)} labels, {args.truth} has {len(truth)}")
    err = clustering_error(pred, truth)
    if args.out:
        k = len(np.unique(truth))
        write_results(args.out, [dict(run=0, K=k, method=args.method, error_percent=err, seconds=0.0)])
    print(format_error(err))
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(
        n_subspaces=args.k,
        ambient_dim=args.ambient,
        dims=args.dim,
        points=args.per,
        noise=args.noise,
        nonlinearity=args.nonlinearity,
        image=True,
        seed=args.seed,
    )
    data = synth_subspaces(spec)
    out = Path(args.out)
    save_pgm_dir(out / "images", data.X, data.labels)
    write_matrix(out / "X.dscmat", data.X.reshape(len(data.X), -1))
    write_label_csv(out / "truth.csv", data.labels)
    side = int(data.X.shape[-1])
    run = {
        "data": "X.dscmat",
        "truth": "truth.csv",
        "input_hw": [side, side],
        "kernels": [3],
        "channels": [5],
        "n_clusters": args.k,
        # the [0, 1] rescaling turns each linear subspace into an affine one of one dimension more
        "subspace_dim": args.dim + 1,
        "lambda1": 1.0,
        "lambda2": 1.0,
        "pretrain_epochs": 300,
        "finetune_epochs": 100,
        "seed": args.seed,
        "out": "run",
    }
    (out / "config.json").write_text(json.dumps(run, indent=2) + "\n")
    print(f"synth: {len(data.X)} images of {side}x{side} -> {out}")
    return EXIT_OK


def cmd_heatmap(args):
    M = read_matrix(_require(Path(args.matrix), None))
    write_heatmap(args.out, np.abs(M) if args.abs else M)
    print(f"heatmap: {M.shape[0]}x{M.shape[1]} -> {args.out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dscnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dscnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def staged(name, func, help_text, epochs=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat JSON run configuration")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--force", action="store_true", help="continue despite a config-hash mismatch")
        if epochs:
            p.add_argument("--epochs", type=int, help="override the epoch count of this stage")
        p.set_defaults(func=func)
        return p

    staged("pretrain", cmd_pretrain, "train the auto-encoder", epochs=True)
    staged("finetune", cmd_finetune, "train with the self-expressive layer", epochs=True)
    staged("cluster", cmd_cluster, "affinity + spectral clustering from finetune.ckpt")

    p = sub.add_parser("params", help="per-layer parameter counts")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("eval", help="clustering error between two label CSVs")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="also write a metrics CSV")
    p.add_argument("--method", default="eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic union-of-subspaces image set")
    p.add_argument("--k", type=int, required=True, help="number of subspaces")
    p.add_argument("--ambient", type=int, required=True, help="ambient dimension (a perfect square)")
    p.add_argument("--dim", type=int, required=True, help="subspace dimension")
    p.add_argument("--per", type=int, required=True, help="points per subspace")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--nonlinearity", default="none", choices=["none", "cubic", "random-monotone"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("heatmap", help="render a DSCMAT1 matrix as an 8-bit PGM")
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--abs", action="store_true", help="plot absolute values")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except MissingArtifactError as exc:
        logger.error("%s", exc)
        return EXIT_MISSING
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (DSCError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
