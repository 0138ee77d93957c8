"""Classical subspace baselines.

Eigendecomposition of covariance matrices, the grid-scanned noise-subspace
spectrum with peak extraction, the polynomial-rooting (grid-free) variant,
forward-backward spatial smoothing for coherent scenes, and the stochastic
Cramer-Rao bound on DOA estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arraysim import ArrayConfig, CovMatrix, SourceConfig, _hermitianize, steering_matrix
from .grids import AngularGrid

DENOM_FLOOR = 1e-18
UNITARY_TOL = 1e-10
NOISE_EVAL_RTOL = 1e-10


@dataclass
class EigenBasis:
    """Eigenpairs of a Hermitian covariance, eigenvalues descending.

    The first ``signal_dim`` eigenvector columns span the signal subspace,
    the remaining columns the noise subspace.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    signal_dim: int

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        u = np.asarray(self.eigenvectors, dtype=complex)
        m = w.size
        if u.shape != (m, m):
            raise ValueError("eigenvector matrix must be M x M")
        if np.any(np.diff(w) > 0):
            raise ValueError("eigenvalues must be sorted descending")
        if not 0 <= self.signal_dim < m:
            raise ValueError("signal_dim must lie in [0, M)")
        gram = u.conj().T @ u
        if np.linalg.norm(gram - np.eye(m)) > UNITARY_TOL * m:
            raise ValueError("eigenvector matrix is not unitary within tolerance")
        self.eigenvalues = w
        self.eigenvectors = u

    @property
    def num_elements(self) -> int:
        return self.eigenvalues.size

    @property
    def signal_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, : self.signal_dim]

    @property
    def noise_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, self.signal_dim:]


@dataclass
class Spectrum:
    """Nonnegative pseudo-spectrum sampled on an angular grid.

    ``saturated`` marks that at least one denominator hit the numerical
    floor (noiseless data evaluated exactly on a source angle).
    """

    values: np.ndarray
    grid: AngularGrid
    saturated: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.num_points,):
            raise ValueError("spectrum length must match the grid point count")
        if np.any(v < 0):
            raise ValueError("spectrum values must be nonnegative")
        self.values = v


@dataclass
class DoaResult:
    """Estimated DOAs in ascending order; ``degraded`` marks a fallback path."""

    angles_deg: np.ndarray
    degraded: bool = False

    def __post_init__(self):
        self.angles_deg = np.atleast_1d(np.asarray(self.angles_deg, dtype=float))


def eigendecompose(cov: CovMatrix, num_sources: int) -> EigenBasis:
    """Hermitian eigendecomposition with a fixed signal-subspace dimension."""
    m = cov.num_elements
    if not 0 < num_sources < m:
        raise ValueError(f"num_sources must lie in 1..{m - 1}")
    w, u = np.linalg.eigh(cov.data)
    return EigenBasis(w[::-1].copy(), u[:, ::-1].copy(), num_sources)


def eigendecompose_rank(cov_data: np.ndarray) -> EigenBasis:
    """Eigendecomposition with the signal dimension found by eigenvalue threshold.

    Meant for noise-free covariances, where the noise subspace is spanned by
    the (numerically) zero eigenvalues rather than by a fixed count.
    """
    w, u = np.linalg.eigh(cov_data)
    w = w[::-1].copy()
    u = u[:, ::-1].copy()
    rank = int(np.sum(w > NOISE_EVAL_RTOL * max(float(w[0]), 0.0)))
    rank = min(rank, w.size - 1)
    return EigenBasis(w, u, rank)


def grid_manifold(grid: AngularGrid, cfg: ArrayConfig) -> np.ndarray:
    """Steering matrix over all grid angles (M x N); reusable across calls."""
    return steering_matrix(grid.angles(), cfg)


def music_spectrum(
    basis: EigenBasis,
    grid: AngularGrid,
    cfg: ArrayConfig,
    manifold: np.ndarray | None = None,
) -> Spectrum:
    """Reciprocal projection power onto the noise subspace over the grid.

    Precomputing ``manifold`` with :func:`grid_manifold` avoids recomputing
    the steering matrix in tight loops.
    """
    if cfg.num_elements != basis.num_elements:
        raise ValueError("array size does not match the eigenbasis")
    a = grid_manifold(grid, cfg) if manifold is None else manifold
    if a.shape != (cfg.num_elements, grid.num_points):
        raise ValueError("manifold shape does not match array/grid")
    g = basis.noise_subspace.conj().T @ a
    denom = np.einsum("ij,ij->j", g, g.conj()).real
    saturated = bool(np.any(denom < DENOM_FLOOR))
    values = 1.0 / np.maximum(denom, DENOM_FLOOR)
    return Spectrum(values, grid, saturated)


def spectral_peaks(spectrum: Spectrum, num_sources: int) -> DoaResult:
    """Angles of the K largest strict local maxima of the spectrum.

    Endpoints compare against their single neighbour.  If fewer than K local
    maxima exist, the remaining slots are filled with the largest leftover
    values and the result is flagged degraded.
    """
    p = spectrum.values
    n = p.size
    if num_sources < 1:
        raise ValueError("num_sources must be at least 1")
    if num_sources > n:
        raise ValueError("num_sources exceeds the grid size")
    if n == 1:
        peak_idx = np.array([0])
    else:
        interior = np.flatnonzero((p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])) + 1
        ends = [i for i, j in ((0, 1), (n - 1, n - 2)) if p[i] > p[j]]
        peak_idx = np.sort(np.concatenate([interior, np.array(ends, dtype=int)]))

    order = peak_idx[np.argsort(-p[peak_idx], kind="stable")]
    degraded = order.size < num_sources
    if degraded:
        taken = set(order.tolist())
        rest = np.argsort(-p, kind="stable")
        filler = [i for i in rest if i not in taken][: num_sources - order.size]
        order = np.concatenate([order, np.array(filler, dtype=int)])
    chosen = order[:num_sources]
    angles = np.sort(spectrum.grid.angles()[chosen])
    return DoaResult(angles, degraded)


def root_music(basis: EigenBasis, cfg: ArrayConfig) -> DoaResult:
    """Grid-free DOA estimation by rooting the noise-subspace polynomial.

    Builds the degree 2(M-1) polynomial whose coefficients are the diagonal
    sums of U_N U_N^H, keeps the K roots inside the unit circle closest to
    it, and maps each root phase to an angle.  Roots whose phase falls
    outside the arcsine domain are rejected; if fewer than K admissible
    roots remain the result is flagged degraded.
    """
    if cfg.spacing_wavelengths > 0.5:
        raise ValueError("spacing above half a wavelength makes the angle mapping ambiguous")
    if cfg.num_elements != basis.num_elements:
        raise ValueError("array size does not match the eigenbasis")
    un = basis.noise_subspace
    m = basis.num_elements
    k = basis.signal_dim
    c = un @ un.conj().T
    upper = np.array([np.sum(np.diag(c, off)) for off in range(1, m)])
    coeffs = np.concatenate([upper[::-1], [np.sum(np.diag(c))], upper.conj()])
    roots = np.roots(coeffs)

    inside = roots[np.abs(roots) <= 1.0]
    by_circle_distance = inside[np.argsort(np.abs(np.abs(inside) - 1.0), kind="stable")]
    factor = 2.0 * np.pi * cfg.spacing_wavelengths
    angles = []
    for z in by_circle_distance:
        if len(angles) == k:
            break
        sin_theta = -np.angle(z) / factor
        if abs(sin_theta) <= 1.0:
            angles.append(np.degrees(np.arcsin(sin_theta)))
    return DoaResult(np.sort(np.array(angles)), degraded=len(angles) < k)


def forward_backward_smooth(cov: CovMatrix, subarray_size: int) -> CovMatrix:
    """Average forward subarray covariances and their exchange-conjugated mirrors.

    Restores signal-subspace rank for up to (M - subarray_size + 1) coherent
    sources; the output covariance lives on a ``subarray_size``-element array.
    """
    m = cov.num_elements
    if not 1 <= subarray_size <= m:
        raise ValueError(f"subarray_size must lie in 1..{m}")
    r = cov.data
    count = m - subarray_size + 1
    forward = np.zeros((subarray_size, subarray_size), dtype=complex)
    for i in range(count):
        forward += r[i:i + subarray_size, i:i + subarray_size]
    forward /= count
    backward = forward[::-1, ::-1].conj()
    return CovMatrix(_hermitianize((forward + backward) / 2.0))


def _steering_derivative(doas_deg: np.ndarray, cfg: ArrayConfig) -> np.ndarray:
    """Derivative of each steering vector with respect to its DOA in radians."""
    th = np.deg2rad(np.asarray(doas_deg, dtype=float))
    m = np.arange(cfg.num_elements)[:, None]
    a = steering_matrix(doas_deg, cfg)
    return -2j * np.pi * cfg.spacing_wavelengths * m * np.cos(th)[None, :] * a


def stochastic_crb(src: SourceConfig, cfg: ArrayConfig, num_snapshots: int) -> np.ndarray:
    """Stochastic (unconditional) Cramer-Rao bound on the DOA standard deviations.

    Treats the signal covariance and the noise variance as unknown nuisance
    parameters; returns one bound in degrees per source.
    """
    k = src.num_sources
    m = cfg.num_elements
    if k < 1:
        raise ValueError("at least one source is required")
    if k >= m:
        raise ValueError("the bound requires fewer sources than array elements")
    if num_snapshots < 1:
        raise ValueError("num_snapshots must be at least 1")
    if src.noise_variance <= 0:
        raise ValueError("noise variance must be positive")

    a = steering_matrix(src.doas_deg, cfg)
    d = _steering_derivative(src.doas_deg, cfg)
    gamma = src.signal_covariance
    r = a @ gamma @ a.conj().T + src.noise_variance * np.eye(m)
    try:
        proj = a @ np.linalg.solve(a.conj().T @ a, a.conj().T)
        inner = (d.conj().T @ (np.eye(m) - proj) @ d) * (
            gamma @ a.conj().T @ np.linalg.solve(r, a) @ gamma
        ).T
        crb = np.linalg.inv(np.real(inner)) * src.noise_variance / (2.0 * num_snapshots)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular system in the bound computation: {exc}") from None
    return np.sqrt(np.diag(crb)) * 180.0 / np.pi
