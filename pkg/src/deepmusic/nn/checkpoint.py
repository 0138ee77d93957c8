"""Checkpoint persistence for a single trained network (magic ``DMNN``).

Layout: magic, version u16, a JSON manifest block (layer specs, input shape,
standardization statistics, parameter/state names and shapes), the blobs as
little-endian float32 in manifest order, then the training-log records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import binio
from ..errors import FileFormatError
from .network import LayerSpec, Network
from .train import EpochRecord, TrainingLog

CHECKPOINT_MAGIC = b"DMNN"
CHECKPOINT_VERSION = 1


@dataclass
class InputStats:
    """Per-channel standardization statistics of the training inputs."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have the same shape")
        if np.any(self.std <= 0):
            raise ValueError("standard deviations must be positive")

    @classmethod
    def from_inputs(cls, inputs: np.ndarray, floor: float = 1e-12) -> "InputStats":
        """Statistics over a (batch, h, w, channels) block, one pair per channel."""
        flat = inputs.reshape(-1, inputs.shape[-1]).astype(np.float64)
        return cls(flat.mean(axis=0), np.maximum(flat.std(axis=0), floor))

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.std).astype(x.dtype, copy=False)


def _float_list(arr: np.ndarray) -> list:
    return [float(v) for v in np.asarray(arr).ravel()]


def save_checkpoint(f, net: Network, stats: InputStats, log: TrainingLog | None = None) -> None:
    binio.write_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    manifest = {
        "specs": [s.to_json() for s in net.specs],
        "input_shape": list(net.input_shape),
        "seed": net.seed,
        "stream": list(net.stream),
        "input_stats": {"mean": _float_list(stats.mean), "std": _float_list(stats.std)},
        "arrays": [{"name": name, "shape": list(shape)} for name, shape in net.parameter_manifest()],
    }
    binio.write_json_block(f, manifest)
    for arr in net.state_arrays():
        binio.write_array(f, arr, "<f4")
    records = log.epochs if log is not None else []
    binio.write_struct(f, "I", len(records))
    binio.write_struct(f, "I", log.best_epoch if log is not None else 0)
    for rec in records:
        binio.write_struct(f, "Iddd", rec.epoch, rec.train_loss, rec.val_loss, rec.learning_rate)


def load_checkpoint(f):
    """Read a checkpoint; returns (network, input_stats, training_log)."""
    binio.check_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    manifest = binio.read_json_block(f)
    try:
        specs = [LayerSpec.from_json(s) for s in manifest["specs"]]
        input_shape = tuple(manifest["input_shape"])
        stats = InputStats(manifest["input_stats"]["mean"], manifest["input_stats"]["std"])
        arrays_meta = manifest["arrays"]
        seed = int(manifest.get("seed", 0))
        stream = tuple(manifest.get("stream", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"incomplete checkpoint manifest: {exc}") from None

    net = Network(specs, input_shape, seed=seed, stream=stream)
    expected = net.parameter_manifest()
    if len(arrays_meta) != len(expected):
        raise FileFormatError("checkpoint manifest does not match the layer chain")
    arrays = []
    for meta, (name, shape) in zip(arrays_meta, expected):
        if meta["name"] != name or tuple(meta["shape"]) != tuple(shape):
            raise FileFormatError(f"unexpected array {meta['name']} in checkpoint")
        arrays.append(binio.read_array(f, "<f4", tuple(shape)))
    net.load_state_arrays(arrays)

    (count,) = binio.read_struct(f, "I")
    (best_epoch,) = binio.read_struct(f, "I")
    log = TrainingLog(best_epoch=best_epoch)
    for _ in range(count):
        epoch, train_loss, val_loss, lr = binio.read_struct(f, "Iddd")
        log.epochs.append(EpochRecord(epoch, train_loss, val_loss, lr))
    if log.epochs:
        log.best_val_loss = min(r.val_loss for r in log.epochs)
    return net, stats, log
