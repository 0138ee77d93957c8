"""Training-corpus construction.

Builds covariance input tensors, noise-free per-region spectrum labels, and
the full training corpus: for each random DOA scene the labels are computed
once from the exact signal covariance, then several noisy snapshot draws at
several SNR levels produce sample-covariance inputs that all share those
labels.  One dataset object holds the common inputs plus all Q label sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import binio
from .arraysim import (
    ArrayConfig,
    CovMatrix,
    SourceConfig,
    ideal_covariance,
    sample_covariance,
    simulate_snapshots,
)
from .errors import FileFormatError, TruncatedFileError
from .grids import AngularGrid, Partition
from .rng import substream
from .subspace import eigendecompose_rank, forward_backward_smooth, music_spectrum

DATASET_MAGIC = b"DMDS"
DATASET_VERSION = 1
EDGE_GUARD_STEPS = 2.0
GAMMA_RANK_EPS = 1e-12

# derivation-path tags under the dataset seed
_STREAM_SCENE = 0
_STREAM_SPLIT = 1


@dataclass
class InputTensor:
    """M x M x 3 real view of a covariance matrix.

    Channel 0 is the real part, channel 1 the imaginary part, channel 2 the
    entrywise principal-value phase in radians.
    """

    data: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.data)
        if x.ndim != 3 or x.shape[0] != x.shape[1] or x.shape[2] != 3:
            raise ValueError("input tensor must have shape (M, M, 3)")
        self.data = x

    @property
    def num_elements(self) -> int:
        return self.data.shape[0]

    def covariance(self) -> np.ndarray:
        """Reconstruct the complex matrix from the first two channels."""
        return self.data[:, :, 0] + 1j * self.data[:, :, 1]


def build_input_tensor(cov: CovMatrix) -> InputTensor:
    """Stack real part, imaginary part and entrywise phase of a covariance."""
    c = cov.data
    phase = np.angle(c)
    # fold the -pi branch (imag == -0.0 on the negative real axis) onto +pi
    phase[phase == -np.pi] = np.pi
    return InputTensor(np.stack([c.real, c.imag, phase], axis=-1))


@dataclass
class LabeledSample:
    """One training record: shared input tensor plus the Q label slices."""

    sample_id: int
    input: InputTensor
    labels: np.ndarray
    true_doas_deg: np.ndarray


@dataclass(frozen=True)
class DatasetConfig:
    """Corpus shape: grid/partition, scene size, and noise levels.

    The corpus holds ``num_doa_sets * num_noise_draws * len(snr_train_db)``
    records; source powers are fixed at one, so each training SNR level sets
    the noise variance directly.
    """

    grid: AngularGrid
    num_regions: int
    num_sources: int
    num_snapshots: int
    snr_train_db: tuple
    num_doa_sets: int
    num_noise_draws: int
    seed: int

    def __post_init__(self):
        if self.num_sources < 1:
            raise ValueError("num_sources must be at least 1")
        if self.num_sources > self.num_regions:
            raise ValueError("at most one source per subregion: num_sources <= num_regions")
        if self.num_snapshots < 1:
            raise ValueError("num_snapshots must be at least 1")
        if self.num_doa_sets < 1 or self.num_noise_draws < 1:
            raise ValueError("num_doa_sets and num_noise_draws must be at least 1")
        if len(self.snr_train_db) == 0:
            raise ValueError("snr_train_db must not be empty")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        object.__setattr__(self, "snr_train_db", tuple(float(s) for s in self.snr_train_db))

    @property
    def total_samples(self) -> int:
        return self.num_doa_sets * self.num_noise_draws * len(self.snr_train_db)

    def partition(self) -> Partition:
        return Partition(self.grid, self.num_regions)


def snr_to_noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    return signal_power * 10.0 ** (-snr_db / 10.0)


def draw_doa_set(rng: np.random.Generator, partition: Partition, num_sources: int) -> np.ndarray:
    """K off-grid DOAs in K distinct subregions, kept away from region edges.

    Regions are chosen uniformly without replacement; within each region the
    angle is uniform with a guard margin of two grid steps from both edges.
    Returned ascending.
    """
    guard = EDGE_GUARD_STEPS * partition.grid.resolution_deg
    regions = np.sort(rng.choice(partition.num_regions, size=num_sources, replace=False))
    doas = np.empty(num_sources)
    for i, region in enumerate(regions):
        lo, hi = partition.region_bounds[region]
        doas[i] = rng.uniform(lo + guard, hi - guard)
    return doas


def label_spectra(doas_deg, partition: Partition, cfg: ArrayConfig, signal_covariance) -> np.ndarray:
    """Noise-free normalized spectrum labels, one length-L row per region.

    The exact signal covariance (no noise term) is eigendecomposed with a
    threshold split between signal and zero eigenvalues; for a singular
    signal covariance (coherent sources) the covariance is first smoothed
    onto an (M - K)-element subarray.  The resulting spectrum is divided by
    its sum over the whole grid and sliced region by region, so the
    concatenated labels form a probability-like vector.
    """
    doas = np.atleast_1d(np.asarray(doas_deg, dtype=float))
    regions = [partition.region_of(t) for t in doas]
    if len(set(regions)) != len(regions):
        raise ValueError("label generation requires at most one DOA per subregion")

    gamma = np.asarray(signal_covariance, dtype=complex)
    src = SourceConfig(doas, gamma, noise_variance=0.0)
    exact = ideal_covariance(src, cfg)
    evals = np.linalg.eigvalsh(gamma)
    full_rank = evals[0] > GAMMA_RANK_EPS * max(float(evals[-1]), 0.0)
    if full_rank:
        basis = eigendecompose_rank(exact.data)
        eval_cfg = cfg
    else:
        sub = cfg.num_elements - doas.size
        smoothed = forward_backward_smooth(exact, sub)
        basis = eigendecompose_rank(smoothed.data)
        eval_cfg = ArrayConfig(sub, cfg.spacing_wavelengths)

    spectrum = music_spectrum(basis, partition.grid, eval_cfg)
    normalized = spectrum.values / spectrum.values.sum()
    return normalized.reshape(partition.num_regions, partition.region_len)


@dataclass
class SpectrumDataset:
    """Generated corpus: shared inputs plus per-region label sets.

    ``inputs`` has shape (J, M, M, 3) float32, ``labels`` (J, Q, L) float32,
    ``true_doas`` (J, K) float64.  Sample ids are the generation order and
    survive splits, so shuffled subsets can be traced back.
    """

    array: ArrayConfig
    grid: AngularGrid
    num_regions: int
    num_sources: int
    num_snapshots: int
    snr_train_db: tuple
    seed: int
    sample_ids: np.ndarray
    true_doas: np.ndarray
    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def region_len(self) -> int:
        return self.grid.num_points // self.num_regions

    def partition(self) -> Partition:
        return Partition(self.grid, self.num_regions)

    def region_labels(self, region: int) -> np.ndarray:
        if not 0 <= region < self.num_regions:
            raise ValueError(f"region {region} out of range 0..{self.num_regions - 1}")
        return self.labels[:, region, :]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(
            sample_id=int(self.sample_ids[i]),
            input=InputTensor(self.inputs[i].astype(np.float64)),
            labels=self.labels[i],
            true_doas_deg=self.true_doas[i].copy(),
        )

    def subset(self, indices) -> "SpectrumDataset":
        idx = np.asarray(indices, dtype=int)
        return SpectrumDataset(
            array=self.array,
            grid=self.grid,
            num_regions=self.num_regions,
            num_sources=self.num_sources,
            num_snapshots=self.num_snapshots,
            snr_train_db=self.snr_train_db,
            seed=self.seed,
            sample_ids=self.sample_ids[idx].copy(),
            true_doas=self.true_doas[idx].copy(),
            inputs=self.inputs[idx].copy(),
            labels=self.labels[idx].copy(),
        )

    def save(self, path) -> None:
        with open(path, "wb") as f:
            _write_dataset(f, self)

    @classmethod
    def load(cls, path) -> "SpectrumDataset":
        with open(path, "rb") as f:
            return _read_dataset(f)


def generate_dataset(cfg: DatasetConfig, array: ArrayConfig) -> SpectrumDataset:
    """Generate the full corpus deterministically from (cfg, cfg.seed).

    Scene alpha draws its DOAs and labels from an independent substream of
    the dataset seed; within a scene, noise draws iterate over realizations
    (outer) and training SNR levels (inner), each contributing one record.
    """
    partition = cfg.partition()
    m = array.num_elements
    j = cfg.total_samples
    q, length = cfg.num_regions, partition.region_len
    k = cfg.num_sources

    sample_ids = np.arange(j, dtype=np.uint32)
    true_doas = np.empty((j, k))
    inputs = np.empty((j, m, m, 3), dtype=np.float32)
    labels = np.empty((j, q, length), dtype=np.float32)

    gamma = np.eye(k, dtype=complex)
    mu = 0
    for alpha in range(cfg.num_doa_sets):
        rng = substream(cfg.seed, _STREAM_SCENE, alpha)
        doas = draw_doa_set(rng, partition, k)
        scene_labels = label_spectra(doas, partition, array, gamma).astype(np.float32)
        for _ in range(cfg.num_noise_draws):
            for snr_db in cfg.snr_train_db:
                src = SourceConfig(doas, gamma, snr_to_noise_variance(snr_db))
                snaps = simulate_snapshots(src, array, cfg.num_snapshots, rng)
                cov = sample_covariance(snaps)
                tensor = build_input_tensor(cov)
                true_doas[mu] = doas
                inputs[mu] = tensor.data.astype(np.float32)
                labels[mu] = scene_labels
                mu += 1

    return SpectrumDataset(
        array=array,
        grid=cfg.grid,
        num_regions=q,
        num_sources=k,
        num_snapshots=cfg.num_snapshots,
        snr_train_db=cfg.snr_train_db,
        seed=cfg.seed,
        sample_ids=sample_ids,
        true_doas=true_doas,
        inputs=inputs,
        labels=labels,
    )


def split_train_val(dataset: SpectrumDataset, fraction: float, seed: int | None = None):
    """Deterministic shuffled split into (train, val) with a train share ``fraction``.

    The permutation is drawn from a dedicated substream of the dataset seed
    (or of ``seed`` when given), so every label set sees the same split.
    """
    if len(dataset) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = len(dataset)
    n_train = int(round(fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"fraction {fraction} leaves an empty split for {n} samples")
    rng = substream(dataset.seed if seed is None else seed, _STREAM_SPLIT)
    perm = rng.permutation(n)
    return dataset.subset(perm[:n_train]), dataset.subset(perm[n_train:])


def _write_dataset(f, ds: SpectrumDataset) -> None:
    binio.write_magic(f, DATASET_MAGIC, DATASET_VERSION)
    m = ds.array.num_elements
    n = ds.grid.num_points
    j = len(ds)
    snrs = ds.snr_train_db
    binio.write_struct(f, "IIIIIII", m, n, ds.num_regions, ds.region_len,
                       ds.num_sources, j, ds.num_snapshots)
    binio.write_struct(f, "I", len(snrs))
    binio.write_struct(f, f"{len(snrs)}d", *snrs)
    binio.write_struct(f, "dd", ds.grid.start_deg, ds.grid.final_deg)
    binio.write_struct(f, "Q", ds.seed)
    rec = _record_dtype(m, ds.num_sources, ds.num_regions, ds.region_len)
    out = np.empty(j, dtype=rec)
    out["id"] = ds.sample_ids
    out["doas"] = ds.true_doas
    out["x"] = np.transpose(ds.inputs, (0, 3, 1, 2))
    out["z"] = ds.labels
    f.write(out.tobytes())


def _record_dtype(m: int, k: int, q: int, length: int) -> np.dtype:
    # channel-major input layout in the file; in memory the channel axis is last
    return np.dtype([
        ("id", "<u4"),
        ("doas", "<f8", (k,)),
        ("x", "<f4", (3, m, m)),
        ("z", "<f4", (q, length)),
    ])


def _read_dataset(f) -> SpectrumDataset:
    binio.check_magic(f, DATASET_MAGIC, DATASET_VERSION)
    m, n, q, length, k, j, t = binio.read_struct(f, "IIIIIII")
    (n_snr,) = binio.read_struct(f, "I")
    snrs = binio.read_struct(f, f"{n_snr}d")
    start, final = binio.read_struct(f, "dd")
    (seed,) = binio.read_struct(f, "Q")
    if q == 0 or length == 0 or n != q * length:
        raise FileFormatError(f"inconsistent grid split in header: N={n}, Q={q}, L={length}")
    grid = AngularGrid(start, final, n)

    rec = _record_dtype(m, k, q, length)
    payload = f.read()
    if len(payload) < j * rec.itemsize:
        raise TruncatedFileError(
            f"payload holds {len(payload)} bytes, need {j * rec.itemsize}"
        )
    if len(payload) > j * rec.itemsize:
        raise FileFormatError("trailing bytes after the declared records")
    records = np.frombuffer(payload, dtype=rec)
    return SpectrumDataset(
        array=ArrayConfig(m),
        grid=grid,
        num_regions=q,
        num_sources=k,
        num_snapshots=t,
        snr_train_db=tuple(snrs),
        seed=int(seed),
        sample_ids=records["id"].copy(),
        true_doas=records["doas"].astype(np.float64),
        inputs=np.ascontiguousarray(np.transpose(records["x"], (0, 2, 3, 1))),
        labels=records["z"].copy(),
    )
