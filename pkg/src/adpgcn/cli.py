"""Operator surface.

Subcommands: synth, train, eval, ablate, export-adjacency. Every run writes a
resolved-config INI next to its outputs; rerunning from that file reproduces
the outputs bitwise. Exit codes: 0 ok, 2 config error, 3 data/IO error,
4 numeric failure.
"""

import argparse
import configparser
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    chronological_split,
    fit_normalize,
    ingest_csv,
    make_windows,
    synthesize_coupled,
    write_couplings,
    write_csv,
    RawSeries,
)
from .errors import ConfigError, DataError, NumericError
from .evaluation import (
    EvalReport,
    RunMetrics,
    ablation_compare,
    evaluate_checkpoint,
    relative_improvement,
    write_report_csv,
)
from .graph import materialize_adjacency
from .model import GcnConfig, ModelConfig
from .tensor import no_grad
from .training import TrainConfig, train

SEED_ENV = "ADPGCN_SEED"

# every key the resolved-config file may carry, per section
_KNOWN_KEYS = {
    "model": {
        "n_dims", "seq_len", "label_len", "pred_len", "d_model", "n_heads",
        "d_ff", "enc_layers_main", "enc_layers_aux", "dec_layers", "dropout",
        "attention", "use_gcn",
    },
    "gcn": {"hidden", "diffusion_steps", "embed_dim", "depth", "init_scale"},
    "train": {
        "lr0", "epochs", "patience", "batch_size", "beta1", "beta2", "eps",
        "seed", "grad_clip",
    },
    "data": {"target_column", "split_train", "split_val", "split_test", "stride"},
}

_INT_KEYS = {
    "n_dims", "seq_len", "label_len", "pred_len", "d_model", "n_heads", "d_ff",
    "enc_layers_main", "enc_layers_aux", "dec_layers", "hidden",
    "diffusion_steps", "embed_dim", "depth", "epochs", "patience",
    "batch_size", "seed", "stride",
}
_FLOAT_KEYS = {
    "dropout", "lr0", "beta1", "beta2", "eps", "grad_clip",
    "split_train", "split_val", "split_test", "init_scale",
}
_BOOL_KEYS = {"use_gcn"}


def _default_seed():
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def _coerce(key, raw):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"cannot parse config key {key} = {raw!r}") from None
    return raw


def read_config_file(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise DataError(f"cannot read config file {path}")
    values = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            values[(section, key)] = _coerce(key, raw)
    return values


def write_resolved_config(path, model_cfg, train_cfg, data_cfg):
    parser = configparser.ConfigParser()
    parser["model"] = {
        k: str(v) for k, v in model_cfg.to_dict().items() if k != "gcn"
    }
    parser["gcn"] = {k: str(v) for k, v in model_cfg.to_dict()["gcn"].items()}
    parser["train"] = {
        k: ("" if v is None else str(v)) for k, v in train_cfg.to_dict().items()
    }
    parser["data"] = {k: str(v) for k, v in data_cfg.items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _layered(section, key, flags, file_values, default):
    """Precedence: explicit flag > config file > default."""
    flag = flags.get(key)
    if flag is not None:
        return flag
    if (section, key) in file_values:
        value = file_values[(section, key)]
        if value is not None:
            return value
    return default


def _build_configs(args, n_dims, target_column):
    file_values = read_config_file(args.config) if args.config else {}
    flags = vars(args)

    def m(key, default):
        return _layered("model", key, flags, file_values, default)

    def g(file_key, flag_key, default):
        flag = flags.get(flag_key)
        if flag is not None:
            return flag
        value = file_values.get(("gcn", file_key))
        return value if value is not None else default

    def t(key, default):
        return _layered("train", key, flags, file_values, default)

    def d(key, default):
        return _layered("data", key, flags, file_values, default)

    declared = file_values.get(("model", "n_dims"))
    if declared is not None and declared != n_dims:
        raise ConfigError(f"config n_dims {declared} != dataset dimensions {n_dims}")

    use_gcn = True
    if getattr(args, "no_gcn", False):
        use_gcn = False
    elif ("model", "use_gcn") in file_values:
        use_gcn = file_values[("model", "use_gcn")]

    gcn_cfg = GcnConfig(
        hidden=g("hidden", "gcn_hidden", 16),
        diffusion_steps=g("diffusion_steps", "gcn_diffusion_steps", 2),
        embed_dim=g("embed_dim", "gcn_embed_dim", 10),
        depth=g("depth", "gcn_depth", 2),
        init_scale=g("init_scale", "gcn_init_scale", 1.0),
    )
    model_cfg = ModelConfig(
        n_dims=n_dims,
        seq_len=m("seq_len", 48),
        label_len=m("label_len", None),
        pred_len=m("pred_len", 24),
        d_model=m("d_model", 32),
        n_heads=m("n_heads", 4),
        d_ff=m("d_ff", 64),
        enc_layers_main=m("enc_layers_main", 3),
        enc_layers_aux=m("enc_layers_aux", 1),
        dec_layers=m("dec_layers", 2),
        dropout=m("dropout", 0.05),
        use_gcn=use_gcn,
        gcn=gcn_cfg,
    )
    train_cfg = TrainConfig(
        lr0=t("lr0", 1e-4),
        epochs=t("epochs", 6),
        patience=t("patience", 3),
        batch_size=t("batch_size", 32),
        beta1=t("beta1", 0.9),
        beta2=t("beta2", 0.999),
        eps=t("eps", 1e-8),
        seed=t("seed", _default_seed()),
        grad_clip=t("grad_clip", None),
    )
    data_cfg = {
        "target_column": target_column or "",
        "split_train": d("split_train", 0.7),
        "split_val": d("split_val", 0.1),
        "split_test": d("split_test", 0.2),
        "stride": d("stride", 1),
    }
    return model_cfg, train_cfg, data_cfg


def _prepare_windows(series, model_cfg, data_cfg, norm_stats=None):
    if norm_stats is None:
        normalized, norm_stats = fit_normalize(series, data_cfg["split_train"])
    else:
        normalized = RawSeries(
            series.timestamps, norm_stats.transform(series.values),
            list(series.column_names),
        )
    splits = chronological_split(
        normalized,
        (data_cfg["split_train"], data_cfg["split_val"], data_cfg["split_test"]),
    )
    windows = tuple(
        make_windows(part, model_cfg.seq_len, model_cfg.label_len,
                     model_cfg.pred_len, data_cfg["stride"])
        for part in splits
    )
    return windows, norm_stats


def _parse_couple(spec):
    parts = spec.split(":")
    if len(parts) != 4:
        raise ConfigError(f"coupling {spec!r} is not src:dst:lag:weight")
    try:
        return int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError:
        raise ConfigError(f"coupling {spec!r} has non-numeric fields") from None


# --- subcommands ----------------------------------------------------------------


def cmd_synth(args):
    couplings = [_parse_couple(c) for c in args.couple or []]
    seed = args.seed if args.seed is not None else _default_seed()
    series, couplings = synthesize_coupled(
        args.n, args.t, couplings, noise_std=args.noise_std, seed=seed,
        ar_coeff=args.ar_coeff,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(series, out / "synthetic.csv")
    write_couplings(couplings, out / "couplings.csv")
    print(f"wrote {out / 'synthetic.csv'} ({args.t} rows x {args.n} dims)")
    return 0


def cmd_train(args):
    series = ingest_csv(args.data, args.target_column)
    model_cfg, train_cfg, data_cfg = _build_configs(
        args, series.n_dims, args.target_column
    )
    (train_w, val_w, test_w), norm_stats = _prepare_windows(
        series, model_cfg, data_cfg
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out / "config.resolved", model_cfg, train_cfg, data_cfg)

    from .model import Forecaster

    model = Forecaster(model_cfg, seed=train_cfg.seed)
    log = print if args.verbose else None
    result = train(model, train_w, val_w, train_cfg, log=log)
    ckpt = Checkpoint.from_training(
        model, result, norm_stats=norm_stats, train_config=train_cfg,
        column_names=series.column_names,
    )
    save_checkpoint(ckpt, out / "checkpoint.bin")
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for r in result.history:
            writer.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.val_loss)])
    print(f"best epoch {result.best_epoch} val loss {result.best_val_loss:.6f}; "
          f"wrote {out / 'checkpoint.bin'}")
    return 0


def cmd_eval(args):
    if not os.path.exists(args.checkpoint):
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    ckpt = load_checkpoint(args.checkpoint)
    series = ingest_csv(args.data, args.target_column)
    model_cfg = ckpt.model_config
    data_cfg = {
        "target_column": args.target_column or "",
        "split_train": 0.7, "split_val": 0.1, "split_test": 0.2, "stride": 1,
    }
    (train_w, val_w, test_w), _ = _prepare_windows(
        series, model_cfg, data_cfg, norm_stats=ckpt.norm_stats
    )
    horizons = [int(h) for h in args.horizons.split(",")] if args.horizons else None
    reports = evaluate_checkpoint(
        ckpt, test_w, dataset_id=Path(args.data).stem, horizons=horizons,
        target_only=args.target_only,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "horizon", "kind", "seed", "mse", "mae",
                         "runs", "wall_clock_s"])
        for report in reports:
            for r in report.runs:
                writer.writerow([report.dataset_id, report.horizon, "run", r.seed,
                                 repr(r.mse), repr(r.mae), "", ""])
            writer.writerow([report.dataset_id, report.horizon, "mean", "",
                             repr(report.mean_mse), repr(report.mean_mae),
                             report.run_count, f"{report.wall_clock:.3f}"])
    for report in reports:
        print(f"horizon {report.horizon}: mse {report.mean_mse:.6f} "
              f"mae {report.mean_mae:.6f}")
    return 0


def cmd_ablate(args):
    series = ingest_csv(args.data, args.target_column)
    model_cfg, train_cfg, data_cfg = _build_configs(
        args, series.n_dims, args.target_column
    )
    windows, norm_stats = _prepare_windows(series, model_cfg, data_cfg)
    seeds = [int(s) for s in args.seeds.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out / "config.resolved", model_cfg, train_cfg, data_cfg)
    log = print if args.verbose else None
    adp, base, deltas = ablation_compare(
        model_cfg, train_cfg, *windows, seeds=seeds,
        dataset_id=Path(args.data).stem, log=log,
    )
    write_report_csv(adp, out / "ablation_adaptive.csv")
    write_report_csv(base, out / "ablation_baseline.csv")
    with open(out / "ablation_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "baseline_mean", "adaptive_mean",
                         "improvement_pct"])
        writer.writerow(["mse", repr(base.mean_mse), repr(adp.mean_mse),
                         repr(deltas["mse_improvement_pct"])])
        writer.writerow(["mae", repr(base.mean_mae), repr(adp.mean_mae),
                         repr(deltas["mae_improvement_pct"])])
    print(f"mse: baseline {base.mean_mse:.6f} adaptive {adp.mean_mse:.6f} "
          f"({deltas['mse_improvement_pct']:+.2f}%)")
    print(f"mae: baseline {base.mean_mae:.6f} adaptive {adp.mean_mae:.6f} "
          f"({deltas['mae_improvement_pct']:+.2f}%)")
    return 0


def cmd_export_adjacency(args):
    if not os.path.exists(args.checkpoint):
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    ckpt = load_checkpoint(args.checkpoint)
    if not ckpt.model_config.use_gcn:
        raise ConfigError("checkpoint was trained with use_gcn=false; "
                          "no adjacency to export")
    model = ckpt.build_model()
    with no_grad():
        matrix = materialize_adjacency(model.adjacency).data
    row_sums = matrix.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-9:
        raise NumericError(f"adjacency rows do not sum to 1: {row_sums}")
    names = ckpt.column_names or [f"dim{i}" for i in range(matrix.shape[0])]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.out} ({matrix.shape[0]}x{matrix.shape[1]})")
    return 0


# --- argument plumbing ---------------------------------------------------------------


def _add_model_args(sub):
    sub.add_argument("--seq-len", dest="seq_len", type=int)
    sub.add_argument("--label-len", dest="label_len", type=int)
    sub.add_argument("--pred-len", dest="pred_len", type=int)
    sub.add_argument("--d-model", dest="d_model", type=int)
    sub.add_argument("--n-heads", dest="n_heads", type=int)
    sub.add_argument("--d-ff", dest="d_ff", type=int)
    sub.add_argument("--dropout", dest="dropout", type=float)
    sub.add_argument("--no-gcn", dest="no_gcn", action="store_true",
                     help="ablation: disable the GCN blocks")
    sub.add_argument("--gcn-hidden", dest="gcn_hidden", type=int)
    sub.add_argument("--gcn-diffusion-steps", dest="gcn_diffusion_steps", type=int)
    sub.add_argument("--gcn-embed-dim", dest="gcn_embed_dim", type=int)
    sub.add_argument("--gcn-depth", dest="gcn_depth", type=int)
    sub.add_argument("--gcn-init-scale", dest="gcn_init_scale", type=float)


def _add_train_args(sub):
    sub.add_argument("--lr0", dest="lr0", type=float)
    sub.add_argument("--epochs", dest="epochs", type=int)
    sub.add_argument("--patience", dest="patience", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--grad-clip", dest="grad_clip", type=float)
    sub.add_argument("--seed", dest="seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adpgcn",
        description="Adaptive graph convolution forecasting toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a coupled synthetic dataset")
    synth.add_argument("--n", type=int, required=True, help="number of dimensions")
    synth.add_argument("--t", type=int, required=True, help="number of rows")
    synth.add_argument("--couple", action="append",
                       help="src:dst:lag:weight (repeatable)")
    synth.add_argument("--noise-std", type=float, default=0.1)
    synth.add_argument("--ar-coeff", type=float, default=0.7)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out", required=True)
    synth.set_defaults(fn=cmd_synth)

    tr = subs.add_parser("train", help="train a forecaster")
    tr.add_argument("--data", required=True)
    tr.add_argument("--target-column", dest="target_column")
    tr.add_argument("--config", help="INI config file (flags override)")
    tr.add_argument("--out", required=True)
    tr.add_argument("--verbose", action="store_true")
    _add_model_args(tr)
    _add_train_args(tr)
    tr.set_defaults(fn=cmd_train)

    ev = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--target-column", dest="target_column")
    ev.add_argument("--horizons", help="comma list, each <= checkpoint pred_len")
    ev.add_argument("--target-only", action="store_true",
                    help="score only the target column")
    ev.add_argument("--out", required=True)
    ev.set_defaults(fn=cmd_eval)

    ab = subs.add_parser("ablate", help="paired use_gcn on/off comparison")
    ab.add_argument("--data", required=True)
    ab.add_argument("--target-column", dest="target_column")
    ab.add_argument("--config", help="INI config file (flags override)")
    ab.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")
    ab.add_argument("--out", required=True)
    ab.add_argument("--verbose", action="store_true")
    _add_model_args(ab)
    _add_train_args(ab)
    ab.set_defaults(fn=cmd_ablate)

    ex = subs.add_parser("export-adjacency",
                         help="write the learned dependency matrix as CSV")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--out", required=True)
    ex.set_defaults(fn=cmd_export_adjacency)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
