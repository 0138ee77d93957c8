"""Inference with the trained per-subregion networks.

One covariance tensor is standardized and fed to all Q networks; each
returns the predicted spectrum of its own angular subregion.  DOA estimates
are read off by ranking region peak values and taking the within-region
argmax angles.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import binio
from .arraysim import ArrayConfig, CovMatrix
from .datagen import InputTensor, SpectrumDataset, build_input_tensor, split_train_val
from .errors import FileFormatError
from .grids import AngularGrid, Partition
from .nn.checkpoint import InputStats, load_checkpoint, save_checkpoint
from .nn.network import Network, build_deepmusic_network
from .nn.train import TrainConfig, TrainingLog, train_network
from .rng import derive_seed
from .subspace import Spectrum

BUNDLE_MAGIC = b"DMMB"
BUNDLE_VERSION = 1


@dataclass
class DeepMusicModel:
    """Bundle of Q trained networks plus the grid geometry they map onto."""

    networks: list
    partition: Partition
    array: ArrayConfig
    input_stats: InputStats
    training_logs: list | None = None

    def __post_init__(self):
        q = self.partition.num_regions
        if len(self.networks) != q:
            raise ValueError(f"expected {q} networks, got {len(self.networks)}")
        m = self.array.num_elements
        for i, net in enumerate(self.networks):
            if net.input_shape != (m, m, 3):
                raise ValueError(f"network {i} input shape {net.input_shape} != ({m}, {m}, 3)")
            if net.output_len != self.partition.region_len:
                raise ValueError(
                    f"network {i} output length {net.output_len} != region length "
                    f"{self.partition.region_len}"
                )

    @property
    def num_regions(self) -> int:
        return self.partition.num_regions

    def save(self, path) -> None:
        with open(path, "wb") as f:
            _write_bundle(f, self)

    @classmethod
    def load(cls, path) -> "DeepMusicModel":
        with open(path, "rb") as f:
            return _read_bundle(f)


@dataclass
class DoaEstimate:
    """Sorted DOA estimates plus the per-region peak values used to rank regions."""

    angles_deg: np.ndarray
    region_peak_values: np.ndarray
    degraded: bool = False

    def __post_init__(self):
        self.angles_deg = np.atleast_1d(np.asarray(self.angles_deg, dtype=float))
        self.region_peak_values = np.asarray(self.region_peak_values, dtype=float)


def _standardized_input(model: DeepMusicModel, tensor: InputTensor) -> np.ndarray:
    x = tensor.data.astype(np.float32)
    return model.input_stats.standardize(x)[None, ...]


def predict_subspectrum(model: DeepMusicModel, region: int, tensor: InputTensor) -> np.ndarray:
    """Predicted spectrum slice (length L, sums to one) for one subregion."""
    if not 0 <= region < model.num_regions:
        raise ValueError(f"region {region} out of range 0..{model.num_regions - 1}")
    x = _standardized_input(model, tensor)
    return model.networks[region].forward(x, mode="infer")[0]


def predict_full_spectrum(model: DeepMusicModel, tensor: InputTensor) -> Spectrum:
    """Concatenation of all Q predicted sub-spectra in region order."""
    x = _standardized_input(model, tensor)
    parts = [net.forward(x, mode="infer")[0] for net in model.networks]
    values = np.concatenate(parts).astype(np.float64)
    return Spectrum(np.maximum(values, 0.0), model.partition.grid)


def estimate_doas(model: DeepMusicModel, cov: CovMatrix, num_sources: int) -> DoaEstimate:
    """Grid angles of the within-region argmaxes of the K strongest regions.

    Regions are ranked by their sub-spectrum peak value; ties go to the
    lower region index.
    """
    if not 1 <= num_sources <= model.num_regions:
        raise ValueError(f"num_sources must lie in 1..{model.num_regions}")
    if cov.num_elements != model.array.num_elements:
        raise ValueError("covariance size does not match the model's array")
    tensor = build_input_tensor(cov)
    x = _standardized_input(model, tensor)
    partition = model.partition
    peaks = np.empty(model.num_regions)
    argmaxes = np.empty(model.num_regions, dtype=int)
    for q, net in enumerate(model.networks):
        sub = net.forward(x, mode="infer")[0]
        argmaxes[q] = int(np.argmax(sub))
        peaks[q] = float(sub[argmaxes[q]])
    chosen = np.argsort(-peaks, kind="stable")[:num_sources]
    angles = [
        partition.grid.angle_at(q * partition.region_len + argmaxes[q]) for q in chosen
    ]
    return DoaEstimate(np.sort(np.array(angles)), peaks, degraded=False)


def fit_model(
    dataset: SpectrumDataset,
    train_cfg: TrainConfig,
    num_filters: int = 256,
    fc_width: int = 1024,
    dropout_p: float = 0.5,
    train_fraction: float = 0.8,
    log_fn=None,
) -> DeepMusicModel:
    """Train one network per subregion on a generated corpus.

    The dataset is split once (the same shuffle for every region), the
    standardization statistics come from the training split only, and each
    region's network trains on its own label slice.  Network q derives its
    initialization and batch randomness from (train_cfg.seed, q).
    """
    train, val = split_train_val(dataset, train_fraction)
    stats = InputStats.from_inputs(train.inputs)
    train_x = stats.standardize(train.inputs)
    val_x = stats.standardize(val.inputs)
    m = dataset.array.num_elements

    networks = []
    logs = []
    for q in range(dataset.num_regions):
        specs = build_deepmusic_network(m, dataset.region_len, num_filters, fc_width, dropout_p)
        net = Network(specs, (m, m, 3), seed=train_cfg.seed, stream=(q,))
        region_cfg = _region_train_config(train_cfg, q)
        wrapped = (lambda rec, q=q: log_fn(q, rec)) if log_fn is not None else None
        log = train_network(
            net,
            train_x,
            train.region_labels(q),
            val_x,
            val.region_labels(q),
            region_cfg,
            log_fn=wrapped,
        )
        networks.append(net)
        logs.append(log)

    return DeepMusicModel(
        networks=networks,
        partition=dataset.partition(),
        array=dataset.array,
        input_stats=stats,
        training_logs=logs,
    )


def _region_train_config(cfg: TrainConfig, region: int) -> TrainConfig:
    """Per-region config with an independent derived seed."""
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        momentum=cfg.momentum,
        batch_size=cfg.batch_size,
        lr_drop_factor=cfg.lr_drop_factor,
        lr_drop_period_epochs=cfg.lr_drop_period_epochs,
        early_stop_patience_epochs=cfg.early_stop_patience_epochs,
        max_epochs=cfg.max_epochs,
        seed=derive_seed(cfg.seed, 2, region),
    )


def _write_bundle(f, model: DeepMusicModel) -> None:
    binio.write_magic(f, BUNDLE_MAGIC, BUNDLE_VERSION)
    grid = model.partition.grid
    header = {
        "array": {
            "num_elements": model.array.num_elements,
            "spacing_wavelengths": model.array.spacing_wavelengths,
        },
        "grid": {
            "start_deg": grid.start_deg,
            "final_deg": grid.final_deg,
            "num_points": grid.num_points,
        },
        "num_regions": model.partition.num_regions,
    }
    binio.write_json_block(f, header)
    logs = model.training_logs or [None] * model.num_regions
    for net, log in zip(model.networks, logs):
        blob = io.BytesIO()
        save_checkpoint(blob, net, model.input_stats, log)
        payload = blob.getvalue()
        binio.write_struct(f, "Q", len(payload))
        f.write(payload)


def _read_bundle(f) -> DeepMusicModel:
    binio.check_magic(f, BUNDLE_MAGIC, BUNDLE_VERSION)
    header = binio.read_json_block(f)
    try:
        array = ArrayConfig(
            int(header["array"]["num_elements"]),
            float(header["array"]["spacing_wavelengths"]),
        )
        grid = AngularGrid(
            float(header["grid"]["start_deg"]),
            float(header["grid"]["final_deg"]),
            int(header["grid"]["num_points"]),
        )
        partition = Partition(grid, int(header["num_regions"]))
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"incomplete bundle header: {exc}") from None

    networks = []
    logs = []
    stats = None
    for _ in range(partition.num_regions):
        (size,) = binio.read_struct(f, "Q")
        blob = io.BytesIO(binio.read_exact(f, size))
        net, net_stats, log = load_checkpoint(blob)
        networks.append(net)
        logs.append(log)
        stats = net_stats if stats is None else stats
    return DeepMusicModel(
        networks=networks,
        partition=partition,
        array=array,
        input_stats=stats,
        training_logs=logs,
    )
