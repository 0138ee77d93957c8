"""Uniform-linear-array signal simulation.

Far-field narrowband point sources impinge on an M-element ULA whose element
spacing is expressed in carrier wavelengths (half-wavelength by default).
This module produces steering vectors/matrices, ideal (ensemble) covariance
matrices, simulated snapshot blocks, and sample covariance matrices.  All
angles at the public interfaces are degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import complex_normal, substream

HERMITIAN_RTOL = 1e-10
PSD_RTOL = 1e-10
RANK_EPS = 1e-12


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry: element count and inter-element spacing in wavelengths."""

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if self.num_elements < 2:
            raise ValueError("num_elements must be at least 2")
        if self.spacing_wavelengths <= 0:
            raise ValueError("spacing_wavelengths must be positive")


@dataclass
class SourceConfig:
    """Source scene: DOAs in degrees, signal covariance, and noise variance.

    ``signal_covariance`` is the K x K Hermitian PSD covariance of the complex
    source amplitudes; its diagonal holds the per-source powers.  A scene with
    zero sources (empty ``doas_deg``) is allowed and yields pure noise.
    """

    doas_deg: np.ndarray
    signal_covariance: np.ndarray
    noise_variance: float

    def __post_init__(self):
        doas = np.atleast_1d(np.asarray(self.doas_deg, dtype=float))
        k = doas.size
        gamma = np.asarray(self.signal_covariance, dtype=complex)
        if k == 0:
            gamma = gamma.reshape(0, 0)
        elif gamma.shape != (k, k):
            raise ValueError(f"signal_covariance must be {k}x{k}, got {gamma.shape}")
        if k and (doas.min() <= -90.0 or doas.max() >= 90.0):
            raise ValueError("DOAs must lie strictly inside (-90, 90) degrees")
        if len(set(doas.tolist())) != k:
            raise ValueError("DOAs must be pairwise distinct")
        if k:
            scale = max(float(np.abs(gamma).max()), 1.0)
            if not np.allclose(gamma, gamma.conj().T, rtol=0.0, atol=HERMITIAN_RTOL * scale):
                raise ValueError("signal_covariance must be Hermitian")
            evals = np.linalg.eigvalsh(gamma)
            if evals[0] < -PSD_RTOL * max(float(evals[-1]), 0.0):
                raise ValueError("signal_covariance must be positive semidefinite")
            if np.any(np.real(np.diag(gamma)) <= 0):
                raise ValueError("per-source powers (diagonal entries) must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        self.doas_deg = doas
        self.signal_covariance = gamma

    @property
    def num_sources(self) -> int:
        return int(self.doas_deg.size)

    @classmethod
    def uncorrelated(cls, doas_deg, power: float = 1.0, noise_variance: float = 0.0):
        """Scene with independent equal-power sources."""
        doas = np.atleast_1d(np.asarray(doas_deg, dtype=float))
        return cls(doas, power * np.eye(doas.size, dtype=complex), noise_variance)


@dataclass
class SnapshotMatrix:
    """Block of array outputs; column i is the sensor vector at time t_i."""

    data: np.ndarray
    num_snapshots: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2:
            raise ValueError("snapshot data must be 2-D (elements x snapshots)")
        if data.shape[1] != self.num_snapshots:
            raise ValueError(
                f"column count {data.shape[1]} != num_snapshots {self.num_snapshots}"
            )
        self.data = data

    @property
    def num_elements(self) -> int:
        return self.data.shape[0]


@dataclass
class CovMatrix:
    """Hermitian positive-semidefinite covariance matrix (within tolerance)."""

    data: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.data, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError("covariance must be a square matrix")
        scale = max(float(np.abs(r).max()), 1.0)
        if not np.allclose(r, r.conj().T, rtol=0.0, atol=HERMITIAN_RTOL * scale):
            raise ValueError("covariance must be Hermitian within tolerance")
        evals = np.linalg.eigvalsh(r)
        if evals[0] < -PSD_RTOL * max(float(evals[-1]), 0.0):
            raise ValueError("covariance must be positive semidefinite within tolerance")
        self.data = r

    @property
    def num_elements(self) -> int:
        return self.data.shape[0]


def _hermitianize(c: np.ndarray) -> np.ndarray:
    """Exactly Hermitian copy: mirror the upper triangle, keep the diagonal real."""
    upper = np.triu(c, 1)
    return upper + upper.conj().T + np.diag(np.real(np.diag(c)).astype(complex))


def _unchecked_steering(thetas_deg, cfg: ArrayConfig) -> np.ndarray:
    th = np.deg2rad(np.asarray(thetas_deg, dtype=float))
    m = np.arange(cfg.num_elements)[:, None]
    return np.exp(-2j * np.pi * cfg.spacing_wavelengths * m * np.sin(th)[None, :])


def steering_vector(theta_deg: float, cfg: ArrayConfig) -> np.ndarray:
    """Array phase response to a unit plane wave arriving from ``theta_deg``.

    Element m (1-based) equals exp(-j 2 pi d (m-1) sin(theta)) with d the
    spacing in wavelengths; the first element is always 1.
    """
    if not -90.0 < theta_deg < 90.0:
        raise ValueError(f"DOA {theta_deg} deg outside the open interval (-90, 90)")
    return _unchecked_steering([theta_deg], cfg)[:, 0]


def steering_matrix(doas_deg, cfg: ArrayConfig) -> np.ndarray:
    """Stack steering vectors for several DOAs as columns (M x K)."""
    doas = np.atleast_1d(np.asarray(doas_deg, dtype=float))
    if doas.size and (doas.min() <= -90.0 or doas.max() >= 90.0):
        raise ValueError("all DOAs must lie strictly inside (-90, 90) degrees")
    if len(set(doas.tolist())) != doas.size:
        raise ValueError("duplicate DOAs make the steering matrix rank deficient")
    return _unchecked_steering(doas, cfg)


def ideal_covariance(src: SourceConfig, cfg: ArrayConfig) -> CovMatrix:
    """Ensemble covariance of the array output: signal part plus white noise."""
    m = cfg.num_elements
    c = src.noise_variance * np.eye(m, dtype=complex)
    if src.num_sources:
        a = steering_matrix(src.doas_deg, cfg)
        c = c + a @ src.signal_covariance @ a.conj().T
    return CovMatrix(_hermitianize(c))


def correlated_pair_covariance(sigma1_sq: float, sigma2_sq: float, rho: float) -> np.ndarray:
    """Two-source signal covariance with real cross-correlation ``rho``.

    ``rho`` = 0 gives independent sources, ``rho`` = 1 (with unit powers) a
    fully coherent pair.
    """
    if sigma1_sq <= 0 or sigma2_sq <= 0:
        raise ValueError("source powers must be positive")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if rho * rho > sigma1_sq * sigma2_sq:
        raise ValueError("rho^2 exceeds sigma1^2 * sigma2^2; matrix would not be PSD")
    return np.array([[sigma1_sq, rho], [rho, sigma2_sq]], dtype=complex)


def _covariance_factor(gamma: np.ndarray) -> np.ndarray:
    """Rank-revealing factor F with F F^H = gamma; handles singular gamma."""
    if gamma.size == 0:
        return np.zeros((0, 0), dtype=complex)
    evals, vecs = np.linalg.eigh(gamma)
    keep = evals > RANK_EPS * max(float(evals[-1]), 0.0)
    return vecs[:, keep] * np.sqrt(evals[keep])


def simulate_snapshots(src: SourceConfig, cfg: ArrayConfig, num_snapshots: int, rng) -> SnapshotMatrix:
    """Simulate T snapshots of the array output.

    Source amplitudes are circularly-symmetric complex Gaussian with
    covariance ``src.signal_covariance`` (drawn through a rank-revealing
    factor, so coherent scenes with singular covariance are fine); noise is
    white circular Gaussian with variance ``src.noise_variance``.  ``rng`` is
    either a nonnegative integer seed or a ``numpy.random.Generator``; a given
    seed always reproduces the same snapshots bit for bit (signal block drawn
    before the noise block).
    """
    if num_snapshots < 1:
        raise ValueError("num_snapshots must be at least 1")
    gen = rng if isinstance(rng, np.random.Generator) else substream(rng)
    m = cfg.num_elements
    y = np.zeros((m, num_snapshots), dtype=complex)
    if src.num_sources:
        a = steering_matrix(src.doas_deg, cfg)
        factor = _covariance_factor(src.signal_covariance)
        w = complex_normal(gen, (factor.shape[1], num_snapshots))
        y += a @ (factor @ w)
    y += complex_normal(gen, (m, num_snapshots), variance=src.noise_variance)
    return SnapshotMatrix(y, num_snapshots)


def sample_covariance(snapshots: SnapshotMatrix) -> CovMatrix:
    """Sample covariance (1/T) Y Y^H of a snapshot block."""
    y = snapshots.data
    c = (y @ y.conj().T) / snapshots.num_snapshots
    return CovMatrix(_hermitianize(c))
