"""Self-describing binary checkpoint container.

Layout (all integers little-endian, documented in docs/checkpoint_format.md):

    bytes 0..7    magic b"ADPGCNCK"
    bytes 8..11   format version, uint32
    bytes 12..19  header length H, uint64
    bytes 20..    UTF-8 JSON header of H bytes:
                  {"model_config", "norm_stats", "train_config", "history",
                   "rng_state", "param_count"}
    then param_count records, each:
                  uint32 name length, name bytes,
                  uint8 dtype length, dtype bytes (always "<f8"),
                  uint32 ndim, ndim x uint64 extents,
                  product(extents) x 8 raw float64 bytes

A reload rebuilds predictions bit-for-bit: parameter payloads are raw IEEE754
and the JSON floats round-trip exactly (repr shortest form).
"""

import json
import struct

import numpy as np

from .data import NormStats
from .errors import CorruptCheckpoint, FormatVersionMismatch
from .model import Forecaster, ModelConfig

MAGIC = b"ADPGCNCK"
FORMAT_VERSION = 1


class Checkpoint:
    def __init__(self, model_config, params, norm_stats=None, train_config=None,
                 history=None, rng_state=None, column_names=None):
        self.model_config = model_config  # ModelConfig
        self.params = dict(params)  # name -> float64 ndarray
        self.norm_stats = norm_stats  # NormStats or None
        self.train_config = train_config  # plain dict or None
        self.history = history or []  # [[epoch, lr, train, val], ...]
        self.rng_state = rng_state  # jsonable or None
        self.column_names = column_names  # dataset dimension names, in order

    def build_model(self, seed=0):
        model = Forecaster(self.model_config, seed=seed)
        model.load_state_dict(self.params)
        model.eval_mode()
        return model

    @classmethod
    def from_training(cls, model, result, norm_stats=None, train_config=None,
                      column_names=None):
        return cls(
            model_config=model.config,
            params=result.best_state,
            norm_stats=norm_stats,
            train_config=train_config.to_dict() if train_config else None,
            history=[[r.epoch, r.lr, r.train_loss, r.val_loss] for r in result.history],
            rng_state=model._dropout_rng.bit_generator.state,
            column_names=column_names,
        )


def save_checkpoint(ckpt, path):
    header = {
        "model_config": ckpt.model_config.to_dict(),
        "norm_stats": ckpt.norm_stats.to_dict() if ckpt.norm_stats else None,
        "train_config": ckpt.train_config,
        "history": ckpt.history,
        "rng_state": ckpt.rng_state,
        "column_names": ckpt.column_names,
        "param_count": len(ckpt.params),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name, arr in ckpt.params.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", 3))
            fh.write(b"<f8")
            fh.write(struct.pack("<I", arr.ndim))
            for extent in arr.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(arr.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptCheckpoint(f"truncated while reading {what}")
    return buf


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise CorruptCheckpoint(f"{path} is not an adpgcn checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise FormatVersionMismatch(version, FORMAT_VERSION)
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as exc:
            raise CorruptCheckpoint(f"invalid header JSON: {exc}") from None
        params = {}
        for _ in range(header["param_count"]):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (dtype_len,) = struct.unpack("<B", _read_exact(fh, 1, "dtype length"))
            dtype = _read_exact(fh, dtype_len, "dtype").decode("ascii")
            if dtype != "<f8":
                raise CorruptCheckpoint(f"{name}: unsupported dtype {dtype!r}")
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
            shape = struct.unpack(
                "<" + "Q" * ndim, _read_exact(fh, 8 * ndim, "shape")
            )
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = _read_exact(fh, count * 8, f"data of {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CorruptCheckpoint("trailing bytes after last parameter record")
    stats = header["norm_stats"]
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        params=params,
        norm_stats=NormStats.from_dict(stats) if stats else None,
        train_config=header["train_config"],
        history=header["history"],
        rng_state=header["rng_state"],
        column_names=header.get("column_names"),
    )
