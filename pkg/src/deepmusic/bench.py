"""Monte-Carlo benchmark harness.

RMSE sweeps over SNR and over the source correlation coefficient, a timing
comparison of the estimation methods, and the rank-paired RMSE metric.  All
methods inside one trial consume the identical sample covariance, and every
trial derives its own random substream, so sweeps parallelize cleanly and
results depend only on (config, seed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from .arraysim import (
    ArrayConfig,
    CovMatrix,
    SourceConfig,
    correlated_pair_covariance,
    sample_covariance,
    simulate_snapshots,
)
from .datagen import draw_doa_set, snr_to_noise_variance
from .grids import AngularGrid, Partition
from .rng import substream
from .subspace import (
    eigendecompose,
    forward_backward_smooth,
    grid_manifold,
    music_spectrum,
    root_music,
    spectral_peaks,
    stochastic_crb,
)

KNOWN_METHODS = ("deepmusic", "spectral_music", "root_music", "spectral_music_smoothed")

# derivation-path tags under the experiment seed
_STREAM_SNR = 0
_STREAM_CORR = 1
_STREAM_TIMING = 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Evaluation protocol: scene geometry, sweep axes, and trial counts."""

    array: ArrayConfig
    grid: AngularGrid
    num_regions: int
    num_sources: int
    num_snapshots: int
    snr_eval_db: tuple
    rho_grid: tuple
    snr_corr_db: float
    num_trials: int
    seed: int
    smoothing_subarray: int | None = None

    def __post_init__(self):
        if self.num_trials < 1:
            raise ValueError("num_trials must be at least 1")
        if len(self.snr_eval_db) == 0:
            raise ValueError("snr_eval_db must not be empty")
        if self.num_sources < 1 or self.num_sources > self.num_regions:
            raise ValueError("num_sources must lie in 1..num_regions")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        object.__setattr__(self, "snr_eval_db", tuple(float(s) for s in self.snr_eval_db))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))

    def partition(self) -> Partition:
        return Partition(self.grid, self.num_regions)

    def subarray_size(self) -> int:
        if self.smoothing_subarray is not None:
            return self.smoothing_subarray
        return self.array.num_elements - self.num_sources


@dataclass
class RmseRow:
    method: str
    sweep_value: float
    rmse_deg: float
    crb_deg: float | None
    runtime_s: float | None
    trials: int


@dataclass
class RmseTable:
    sweep_name: str
    rows: list = field(default_factory=list)

    def methods(self):
        seen = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    def series(self, method: str):
        """(sweep values, rmse values) for one method, in sweep order."""
        rows = [r for r in self.rows if r.method == method]
        return [r.sweep_value for r in rows], [r.rmse_deg for r in rows]


@dataclass
class TimingRow:
    method: str
    mean_s: float
    std_s: float
    repetitions: int


def rmse(estimates, truths) -> float:
    """Root mean squared error over trials, rank-pairing angles within a trial.

    Both lists hold one angle list per trial; within a trial both are sorted
    ascending and paired by rank, so the metric is insensitive to ordering.
    """
    if len(estimates) != len(truths):
        raise ValueError("estimates and truths must have the same number of trials")
    total = 0.0
    count = 0
    for est, true in zip(estimates, truths):
        e = np.sort(np.asarray(est, dtype=float))
        t = np.sort(np.asarray(true, dtype=float))
        if e.size != t.size:
            raise ValueError(f"trial has {e.size} estimates but {t.size} targets")
        total += float(np.sum((e - t) ** 2))
        count += e.size
    return float(np.sqrt(total / count))


def _check_methods(methods, model) -> list:
    methods = list(methods)
    if not methods:
        raise ValueError("at least one method is required")
    for name in methods:
        if name not in KNOWN_METHODS:
            raise ValueError(f"unknown method {name!r}; known: {', '.join(KNOWN_METHODS)}")
    if "deepmusic" in methods and model is None:
        raise ValueError("method 'deepmusic' needs a trained model bundle")
    return methods


def _make_runners(cfg: ExperimentConfig, methods, model):
    """Per-method estimators CovMatrix -> sorted angle array (length K)."""
    k = cfg.num_sources
    manifold = grid_manifold(cfg.grid, cfg.array)
    runners = {}
    if "spectral_music" in methods:
        def run_music(cov, _manifold=manifold):
            basis = eigendecompose(cov, k)
            spec = music_spectrum(basis, cfg.grid, cfg.array, manifold=_manifold)
            return spectral_peaks(spec, k).angles_deg
        runners["spectral_music"] = run_music
    if "spectral_music_smoothed" in methods:
        sub = cfg.subarray_size()
        sub_cfg = ArrayConfig(sub, cfg.array.spacing_wavelengths)
        sub_manifold = manifold[:sub, :]
        def run_smoothed(cov):
            smoothed = forward_backward_smooth(cov, sub)
            basis = eigendecompose(smoothed, k)
            spec = music_spectrum(basis, cfg.grid, sub_cfg, manifold=sub_manifold)
            return spectral_peaks(spec, k).angles_deg
        runners["spectral_music_smoothed"] = run_smoothed
    if "root_music" in methods:
        def run_root(cov):
            basis = eigendecompose(cov, k)
            return _padded(root_music(basis, cfg.array).angles_deg, k)
        runners["root_music"] = run_root
    if "deepmusic" in methods:
        from .estimator import estimate_doas
        def run_deep(cov):
            return estimate_doas(model, cov, k).angles_deg
        runners["deepmusic"] = run_deep
    return {name: runners[name] for name in methods}


def _padded(angles: np.ndarray, k: int) -> np.ndarray:
    # a degraded estimate keeps its trial comparable: missing angles count as 0 deg
    if angles.size >= k:
        return angles[:k]
    return np.sort(np.concatenate([angles, np.zeros(k - angles.size)]))


def _aggregate_crb(values) -> float | None:
    valid = [v for v in values if v is not None]
    if not valid:
        return None
    stacked = np.concatenate(valid)
    return float(np.sqrt(np.mean(stacked ** 2)))


def _sweep(cfg: ExperimentConfig, methods, model, sweep_name, sweep_values, stream_tag,
           gamma_for, noise_for) -> RmseTable:
    methods = _check_methods(methods, model)
    runners = _make_runners(cfg, methods, model)
    partition = cfg.partition()
    k = cfg.num_sources
    table = RmseTable(sweep_name)

    for si, value in enumerate(sweep_values):
        gamma = gamma_for(value)
        noise_var = noise_for(value)
        estimates = {name: [] for name in methods}
        times = {name: 0.0 for name in methods}
        truths = []
        crbs = []
        for trial in range(cfg.num_trials):
            rng = substream(cfg.seed, stream_tag, si, trial)
            doas = draw_doa_set(rng, partition, k)
            src = SourceConfig(doas, gamma, noise_var)
            snaps = simulate_snapshots(src, cfg.array, cfg.num_snapshots, rng)
            cov = sample_covariance(snaps)
            truths.append(doas)
            for name in methods:
                t0 = time.perf_counter()
                estimates[name].append(runners[name](cov))
                times[name] += time.perf_counter() - t0
            try:
                crbs.append(stochastic_crb(src, cfg.array, cfg.num_snapshots))
            except ValueError:
                crbs.append(None)
        crb_value = _aggregate_crb(crbs)
        for name in methods:
            table.rows.append(RmseRow(
                method=name,
                sweep_value=float(value),
                rmse_deg=rmse(estimates[name], truths),
                crb_deg=crb_value,
                runtime_s=times[name] / cfg.num_trials,
                trials=cfg.num_trials,
            ))
        table.rows.append(RmseRow(
            method="crb",
            sweep_value=float(value),
            rmse_deg=crb_value if crb_value is not None else float("nan"),
            crb_deg=crb_value,
            runtime_s=None,
            trials=cfg.num_trials,
        ))
    return table


def run_rmse_vs_snr(cfg: ExperimentConfig, methods, model=None) -> RmseTable:
    """RMSE of each method over the SNR grid, with a CRB reference row per SNR.

    Every trial draws a fresh guarded DOA scene with independent unit-power
    sources, simulates T snapshots, and hands the same sample covariance to
    every method.
    """
    k = cfg.num_sources
    gamma = np.eye(k, dtype=complex)
    return _sweep(
        cfg, methods, model,
        sweep_name="snr_db",
        sweep_values=cfg.snr_eval_db,
        stream_tag=_STREAM_SNR,
        gamma_for=lambda _snr: gamma,
        noise_for=lambda snr: snr_to_noise_variance(snr),
    )


def run_correlation_sweep(cfg: ExperimentConfig, methods, model=None) -> RmseTable:
    """RMSE of each method over the correlation grid at a fixed SNR.

    Requires two sources; the pair covariance has unit powers and the swept
    cross-correlation.  Spatial smoothing is exposed as the separate method
    name ``spectral_music_smoothed`` so smoothed and plain spectra can be
    compared side by side.
    """
    if cfg.num_sources != 2:
        raise ValueError("the correlation sweep is defined for exactly two sources")
    noise_var = snr_to_noise_variance(cfg.snr_corr_db)
    return _sweep(
        cfg, methods, model,
        sweep_name="rho",
        sweep_values=cfg.rho_grid,
        stream_tag=_STREAM_CORR,
        gamma_for=lambda rho: correlated_pair_covariance(1.0, 1.0, rho),
        noise_for=lambda _rho: noise_var,
    )


def time_methods(cfg: ExperimentConfig, methods, model=None,
                 repetitions: int = 100, warmup: int = 5) -> list:
    """Mean and standard deviation of covariance-to-DOA latency per method.

    One fixed scene is drawn from the experiment seed; the timed section
    excludes simulation and model loading.  Runs are pinned to a single
    BLAS thread when threadpoolctl is available.
    """
    if repetitions < 2:
        raise ValueError("repetitions must be at least 2")
    methods = _check_methods(methods, model)
    runners = _make_runners(cfg, methods, model)
    rng = substream(cfg.seed, _STREAM_TIMING)
    doas = draw_doa_set(rng, cfg.partition(), cfg.num_sources)
    snr = cfg.snr_eval_db[len(cfg.snr_eval_db) // 2]
    src = SourceConfig.uncorrelated(doas, noise_variance=snr_to_noise_variance(snr))
    snaps = simulate_snapshots(src, cfg.array, cfg.num_snapshots, rng)
    cov = sample_covariance(snaps)

    def timed() -> list:
        rows = []
        for name in methods:
            run = runners[name]
            for _ in range(warmup):
                run(cov)
            samples = np.empty(repetitions)
            for i in range(repetitions):
                t0 = time.perf_counter()
                run(cov)
                samples[i] = time.perf_counter() - t0
            rows.append(TimingRow(name, float(samples.mean()), float(samples.std()), repetitions))
        return rows

    if threadpool_limits is not None:
        with threadpool_limits(limits=1):
            return timed()
    return timed()
