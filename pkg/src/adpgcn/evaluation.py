"""Metrics, batched evaluation, and the paired ablation harness.

MSE = (1/n) sum (y - y_hat)^2 and MAE = (1/n) sum |y - y_hat| over every
element of the evaluation tensor, on the normalized scale by default (the
scale on which reported magnitudes are comparable across datasets).
Denormalized metrics are available via NormStats.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import collate
from .errors import ConfigMismatch, ShapeMismatch
from .model import Forecaster
from .tensor import no_grad
from .training import TrainConfig, train


def mse(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeMismatch(f"mse shapes differ: {y.shape} vs {y_hat.shape}")
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeMismatch(f"mae shapes differ: {y.shape} vs {y_hat.shape}")
    return float(np.mean(np.abs(y - y_hat)))


def predict(model, samples, batch_size=32):
    """Stacked eval-mode predictions, (n_samples, pred_len, N)."""
    model.eval_mode()
    chunks = []
    with no_grad():
        for lo in range(0, len(samples), batch_size):
            batch = collate(samples[lo:lo + batch_size])
            chunks.append(model.forward_batch(batch).data)
    return np.concatenate(chunks, axis=0)


def evaluate_model(model, samples, batch_size=32, norm_stats=None,
                   target_only=False, horizon=None):
    """Metrics dict for one model on one sample list.

    horizon: optionally truncate targets/predictions to the first `horizon`
    steps (must not exceed the model's pred_len).
    target_only: score only the last column (the conventional target slot).
    """
    preds = predict(model, samples, batch_size)
    truth = np.stack([s.y for s in samples])
    if horizon is not None:
        if horizon > preds.shape[1]:
            raise ConfigMismatch(
                f"horizon {horizon} exceeds checkpoint pred_len {preds.shape[1]}"
            )
        preds = preds[:, :horizon]
        truth = truth[:, :horizon]
    if target_only:
        preds = preds[..., -1:]
        truth = truth[..., -1:]
    out = {"mse": mse(truth, preds), "mae": mae(truth, preds)}
    if norm_stats is not None:
        scale = norm_stats.std[-1:] if target_only else norm_stats.std
        shift = norm_stats.mean[-1:] if target_only else norm_stats.mean
        out["mse_denorm"] = mse(truth * scale + shift, preds * scale + shift)
        out["mae_denorm"] = mae(truth * scale + shift, preds * scale + shift)
    return out


@dataclass
class RunMetrics:
    seed: int
    mse: float
    mae: float


@dataclass
class EvalReport:
    dataset_id: str
    horizon: int
    runs: List[RunMetrics] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def run_count(self):
        return len(self.runs)

    @property
    def seeds(self):
        return [r.seed for r in self.runs]

    @property
    def mean_mse(self):
        return float(np.mean([r.mse for r in self.runs]))

    @property
    def mean_mae(self):
        return float(np.mean([r.mae for r in self.runs]))


def write_report_csv(report, path):
    """One row per run plus a summary row; stable layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "horizon", "kind", "seed", "mse", "mae",
                         "runs", "wall_clock_s"])
        for r in report.runs:
            writer.writerow([report.dataset_id, report.horizon, "run", r.seed,
                             repr(r.mse), repr(r.mae), "", ""])
        writer.writerow([report.dataset_id, report.horizon, "mean", "",
                         repr(report.mean_mse), repr(report.mean_mae),
                         report.run_count, f"{report.wall_clock:.3f}"])


def evaluate_checkpoint(ckpt, samples, dataset_id="dataset", horizons=None,
                        batch_size=32, target_only=False):
    """EvalReports (one per horizon) for a stored checkpoint."""
    n_dims = samples[0].x_enc.shape[-1]
    if n_dims != ckpt.model_config.n_dims:
        raise ConfigMismatch(
            f"checkpoint has {ckpt.model_config.n_dims} dims, dataset {n_dims}"
        )
    model = ckpt.build_model()
    if horizons is None:
        horizons = [ckpt.model_config.pred_len]
    reports = []
    for horizon in horizons:
        started = time.perf_counter()
        metrics = evaluate_model(
            model, samples, batch_size, norm_stats=ckpt.norm_stats,
            target_only=target_only, horizon=horizon,
        )
        report = EvalReport(dataset_id, horizon)
        report.runs.append(RunMetrics(seed=-1, mse=metrics["mse"], mae=metrics["mae"]))
        report.wall_clock = time.perf_counter() - started
        reports.append(report)
    return reports


def relative_improvement(base, treated):
    """Percent improvement of `treated` over `base`: 100 * (base - treated) / base."""
    return 100.0 * (base - treated) / base


def adjacency_rank_report(matrix, couplings):
    """How prominently each planted coupling shows up in a learned adjacency.

    For a coupling src -> dst, reports the 1-based descending rank of entry
    (dst, src) within row dst (rank 1 = the dimension dst attends to most).
    Interpretability diagnostic: ranks are reported, not asserted.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    rows = []
    for c in couplings:
        row = matrix[c.dst]
        order = np.argsort(-row)
        rank = int(np.where(order == c.src)[0][0]) + 1
        rows.append({
            "src": c.src, "dst": c.dst, "lag": c.lag, "weight": c.weight,
            "entry": float(row[c.src]), "rank": rank, "row_size": len(row),
        })
    return rows


def write_rank_report_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "lag", "weight", "entry", "rank", "row_size"])
        for r in rows:
            writer.writerow([r["src"], r["dst"], r["lag"], r["weight"],
                             repr(r["entry"]), r["rank"], r["row_size"]])


def ablation_compare(model_config, train_config, train_samples, val_samples,
                     test_samples, seeds, dataset_id="dataset", log=None,
                     keep_models=False):
    """Train use_gcn on/off pairs from identical host initializations per seed.

    Returns (adaptive EvalReport, baseline EvalReport, deltas dict). The two
    arms share every host parameter draw and the batch order; only the GCN
    blocks differ.
    """
    if len(seeds) < 1:
        raise ValueError("at least one seed required")
    from dataclasses import replace

    started = time.perf_counter()
    adp_report = EvalReport(dataset_id, model_config.pred_len)
    base_report = EvalReport(dataset_id, model_config.pred_len)
    models = {}
    for seed in seeds:
        for use_gcn, report in ((True, adp_report), (False, base_report)):
            cfg = replace(model_config, use_gcn=use_gcn)
            tcfg = replace(train_config, seed=seed)
            model = Forecaster(cfg, seed=seed)
            result = train(model, train_samples, val_samples, tcfg, log=log)
            metrics = evaluate_model(model, test_samples, train_config.batch_size)
            report.runs.append(RunMetrics(seed, metrics["mse"], metrics["mae"]))
            if keep_models:
                models[(seed, use_gcn)] = (model, result)
            if log is not None:
                label = "adaptive" if use_gcn else "baseline"
                log(f"seed {seed} {label}: test mse {metrics['mse']:.6f} "
                    f"mae {metrics['mae']:.6f}")
    elapsed = time.perf_counter() - started
    adp_report.wall_clock = elapsed / 2
    base_report.wall_clock = elapsed / 2
    deltas = {
        "mse_improvement_pct": relative_improvement(
            base_report.mean_mse, adp_report.mean_mse
        ),
        "mae_improvement_pct": relative_improvement(
            base_report.mean_mae, adp_report.mean_mae
        ),
    }
    if keep_models:
        return adp_report, base_report, deltas, models
    return adp_report, base_report, deltas
