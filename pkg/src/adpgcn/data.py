"""Dataset ingestion, normalization, windowing, splits, synthetic generator.

CSV convention: UTF-8, comma-separated, header line, first column a
`YYYY-MM-DD HH:MM:SS` timestamp, remaining columns numeric. Timestamps must
be strictly increasing and equally spaced; missing cells are a hard error.
"""

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import List, NamedTuple

import numpy as np

from .errors import (
    ConstantColumn,
    InvalidCoupling,
    InvalidSplit,
    MissingValue,
    NonMonotonicTimestamp,
    ParseError,
    SeriesTooShort,
)

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"


@dataclass
class RawSeries:
    timestamps: List[datetime]
    values: np.ndarray  # (T, N) float64
    column_names: List[str]

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_dims(self):
        return self.values.shape[1]


@dataclass
class NormStats:
    mean: np.ndarray  # (N,)
    std: np.ndarray  # (N,)

    def transform(self, values):
        return (values - self.mean) / self.std

    def inverse(self, values):
        return values * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


class WindowSample(NamedTuple):
    x_enc: np.ndarray  # (seq_len, N)
    x_dec_known: np.ndarray  # (label_len, N)
    y: np.ndarray  # (pred_len, N)
    marks_enc: np.ndarray  # (seq_len, 4)
    marks_dec: np.ndarray  # (label_len + pred_len, 4)


class Coupling(NamedTuple):
    src: int
    dst: int
    lag: int
    weight: float


def time_features(timestamps):
    """Calendar features per step, each scaled to [-0.5, 0.5]:
    month, day of month, weekday, hour."""
    out = np.empty((len(timestamps), 4))
    for i, ts in enumerate(timestamps):
        out[i, 0] = (ts.month - 1) / 11.0 - 0.5
        out[i, 1] = (ts.day - 1) / 30.0 - 0.5
        out[i, 2] = ts.weekday() / 6.0 - 0.5
        out[i, 3] = ts.hour / 23.0 - 0.5
    return out


def ingest_csv(path, target_column=None):
    """Parse a timestamped CSV into a RawSeries, placing the target column last."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, 0, "empty file") from None
        columns = header[1:]
        if not columns:
            raise ParseError(0, 1, "no value columns")
        timestamps = []
        rows = []
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ParseError(row_idx, len(row), f"expected {len(header)} cells")
            try:
                ts = datetime.strptime(row[0].strip(), TIMESTAMP_FORMAT)
            except ValueError as exc:
                raise ParseError(row_idx, 0, str(exc)) from None
            parsed = np.empty(len(columns))
            for col_idx, cell in enumerate(row[1:], start=1):
                cell = cell.strip()
                if cell == "":
                    raise MissingValue(row_idx, col_idx)
                try:
                    parsed[col_idx - 1] = float(cell)
                except ValueError:
                    raise ParseError(row_idx, col_idx, f"not numeric: {cell!r}") from None
            timestamps.append(ts)
            rows.append(parsed)
    if not rows:
        raise SeriesTooShort(f"{path} has no data rows")

    spacing = None
    for i in range(1, len(timestamps)):
        delta = timestamps[i] - timestamps[i - 1]
        if delta <= timedelta(0):
            raise NonMonotonicTimestamp(i + 1, "not strictly increasing")
        if spacing is None:
            spacing = delta
        elif delta != spacing:
            raise NonMonotonicTimestamp(i + 1, f"gap {delta} != spacing {spacing}")

    values = np.vstack(rows)
    if target_column is not None:
        if target_column not in columns:
            raise ParseError(0, 0, f"target column {target_column!r} not in header")
        idx = columns.index(target_column)
        order = [i for i in range(len(columns)) if i != idx] + [idx]
        columns = [columns[i] for i in order]
        values = values[:, order]
    return RawSeries(timestamps, np.ascontiguousarray(values), columns)


def write_csv(series, path):
    """Inverse of ingest_csv (modulo float formatting; repr round-trips exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(series.column_names))
        for ts, row in zip(series.timestamps, series.values):
            writer.writerow(
                [ts.strftime(TIMESTAMP_FORMAT)] + [repr(float(v)) for v in row]
            )


def fit_normalize(series, train_fraction):
    """Zero-mean/unit-variance per column, statistics from the leading
    train_fraction of rows only (population std). Returns the normalized
    series and the stats for the exact inverse transform."""
    if not 0.0 < train_fraction <= 1.0:
        raise InvalidSplit(f"train_fraction must lie in (0, 1], got {train_fraction}")
    n_train = max(1, int(series.n_rows * train_fraction))
    head = series.values[:n_train]
    mean = head.mean(axis=0)
    std = head.std(axis=0)
    for col, s in enumerate(std):
        if s == 0.0:
            raise ConstantColumn(series.column_names[col])
    stats = NormStats(mean, std)
    normalized = RawSeries(
        series.timestamps, stats.transform(series.values), list(series.column_names)
    )
    return normalized, stats


def chronological_split(series, fractions=(0.7, 0.1, 0.2)):
    """Contiguous train/val/test segments; windows never straddle a boundary
    because each segment becomes its own series."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise InvalidSplit(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidSplit(f"fractions must sum to 1, got {fractions}")
    t = series.n_rows
    n_train = int(t * fractions[0])
    n_val = int(t * fractions[1])
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, t)]
    if any(hi - lo < 1 for lo, hi in bounds):
        raise SeriesTooShort(f"{t} rows cannot be split as {fractions}")
    return tuple(
        RawSeries(series.timestamps[lo:hi],
                  np.ascontiguousarray(series.values[lo:hi]),
                  list(series.column_names))
        for lo, hi in bounds
    )


def make_windows(series, seq_len, label_len, pred_len, stride=1):
    """Sliding windows: encoder sees rows [s, s+seq); the target is the next
    pred_len rows; the decoder's known region is the last label_len encoder
    rows. Count for stride 1: T - seq_len - pred_len + 1."""
    t = series.n_rows
    if t < seq_len + pred_len:
        raise SeriesTooShort(
            f"{t} rows < seq_len {seq_len} + pred_len {pred_len}"
        )
    if label_len > seq_len:
        raise InvalidSplit(f"label_len {label_len} > seq_len {seq_len}")
    marks = time_features(series.timestamps)
    values = series.values
    samples = []
    for start in range(0, t - seq_len - pred_len + 1, stride):
        enc_end = start + seq_len
        samples.append(
            WindowSample(
                x_enc=values[start:enc_end],
                x_dec_known=values[enc_end - label_len:enc_end],
                y=values[enc_end:enc_end + pred_len],
                marks_enc=marks[start:enc_end],
                marks_dec=marks[enc_end - label_len:enc_end + pred_len],
            )
        )
    return samples


def collate(samples):
    """Stack a list of WindowSamples into batched arrays."""
    return {
        "x_enc": np.stack([s.x_enc for s in samples]),
        "x_dec_known": np.stack([s.x_dec_known for s in samples]),
        "y": np.stack([s.y for s in samples]),
        "marks_enc": np.stack([s.marks_enc for s in samples]),
        "marks_dec": np.stack([s.marks_dec for s in samples]),
    }


def synthesize_coupled(n_dims, t_total, couplings, noise_std=0.1, seed=0,
                       ar_coeff=0.7, start="2020-01-01 00:00:00"):
    """Coupled AR(1) system with planted lagged cross-dimension dependencies.

    value[d][t] = ar_coeff * value[d][t-1]
                  + sum over couplings into d of weight * value[src][t-lag]
                  + noise_std * gaussian

    Returns (RawSeries, couplings) so the ground-truth dependency graph
    travels with the data.
    """
    couplings = [Coupling(*c) for c in couplings]
    for c in couplings:
        if c.src == c.dst:
            raise InvalidCoupling(f"self-coupling on dimension {c.src}")
        if c.lag < 1:
            raise InvalidCoupling(f"lag must be >= 1, got {c.lag}")
        if not (0 <= c.src < n_dims and 0 <= c.dst < n_dims):
            raise InvalidCoupling(f"dimension out of range in {c}")
    rng = np.random.default_rng(seed)
    values = np.zeros((t_total, n_dims))
    values[0] = rng.normal(size=n_dims)
    noise = noise_std * rng.normal(size=(t_total, n_dims))
    for t in range(1, t_total):
        values[t] = ar_coeff * values[t - 1] + noise[t]
        for c in couplings:
            if t - c.lag >= 0:
                values[t, c.dst] += c.weight * values[t - c.lag, c.src]
    t0 = datetime.strptime(start, TIMESTAMP_FORMAT)
    timestamps = [t0 + timedelta(hours=i) for i in range(t_total)]
    names = [f"dim{i}" for i in range(n_dims)]
    return RawSeries(timestamps, values, names), couplings


def write_couplings(couplings, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "lag", "weight"])
        for c in couplings:
            writer.writerow([c.src, c.dst, c.lag, repr(c.weight)])


def read_couplings(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [
            Coupling(int(r[0]), int(r[1]), int(r[2]), float(r[3])) for r in reader
        ]
