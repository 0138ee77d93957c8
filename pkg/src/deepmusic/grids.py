"""DOA search grid and its partition into contiguous angular subregions.

The grid is half-open: N points at ``start + i * resolution`` for
i = 0..N-1, so the final angle itself is not a grid point.  A partition
splits the grid into Q contiguous regions of equal length L = N/Q; region
boundaries coincide (one region's final angle is the next one's start).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AngularGrid:
    start_deg: float
    final_deg: float
    num_points: int
    resolution_deg: float = field(init=False)

    def __post_init__(self):
        if self.num_points < 1:
            raise ValueError("num_points must be at least 1")
        if not self.start_deg < self.final_deg:
            raise ValueError("start_deg must be smaller than final_deg")
        object.__setattr__(
            self, "resolution_deg", (self.final_deg - self.start_deg) / self.num_points
        )

    def angles(self) -> np.ndarray:
        """All grid angles, ascending."""
        return self.start_deg + np.arange(self.num_points) * self.resolution_deg

    def angle_at(self, index: int) -> float:
        if not 0 <= index < self.num_points:
            raise ValueError(f"grid index {index} out of range 0..{self.num_points - 1}")
        return self.start_deg + index * self.resolution_deg

    def index_of(self, theta_deg: float) -> int:
        """Index of the grid point nearest to ``theta_deg`` (clipped to the grid)."""
        i = int(round((theta_deg - self.start_deg) / self.resolution_deg))
        return min(max(i, 0), self.num_points - 1)

    def contains(self, theta_deg: float) -> bool:
        return self.start_deg <= theta_deg < self.final_deg


def make_grid(start_deg: float, final_deg: float, num_points: int) -> AngularGrid:
    return AngularGrid(start_deg, final_deg, num_points)


@dataclass(frozen=True)
class Partition:
    grid: AngularGrid
    num_regions: int
    region_len: int = field(init=False)
    region_bounds: tuple = field(init=False)

    def __post_init__(self):
        n, q = self.grid.num_points, self.num_regions
        if q < 1:
            raise ValueError("num_regions must be at least 1")
        if n % q != 0:
            raise ValueError(f"num_regions {q} does not divide num_points {n}")
        length = n // q
        step = self.grid.resolution_deg
        bounds = tuple(
            (
                self.grid.start_deg + r * length * step,
                self.grid.start_deg + (r + 1) * length * step,
            )
            for r in range(q)
        )
        object.__setattr__(self, "region_len", length)
        object.__setattr__(self, "region_bounds", bounds)

    def region_slice(self, region: int) -> slice:
        self._check_region(region)
        return slice(region * self.region_len, (region + 1) * self.region_len)

    def region_angles(self, region: int) -> np.ndarray:
        return self.grid.angles()[self.region_slice(region)]

    def region_of(self, theta_deg: float) -> int:
        """Region index containing ``theta_deg``."""
        if not self.grid.contains(theta_deg):
            raise ValueError(f"angle {theta_deg} deg outside the grid span")
        i = int((theta_deg - self.grid.start_deg) / self.grid.resolution_deg)
        return min(i // self.region_len, self.num_regions - 1)

    def _check_region(self, region: int) -> None:
        if not 0 <= region < self.num_regions:
            raise ValueError(f"region {region} out of range 0..{self.num_regions - 1}")


def partition_grid(grid: AngularGrid, num_regions: int) -> Partition:
    return Partition(grid, num_regions)
