"""Truncated uniform grids and the density/dual fields living on them.

The whole library works on a box [-L, L]^d with n cells per dimension and
nodes at cell centers.  Density fields carry the discrete L1 geometry
(norm = h^d * sum|values|), dual fields the discrete L-infinity one.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["TruncatedBox", "GridField", "DualGridField", "pairing"]


@dataclass(frozen=True)
class TruncatedBox:
    """Axis-aligned box [-L, L]^d discretized by n cells per dimension."""

    half_width: float
    cells_per_dim: int
    dimension: int = 1

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.cells_per_dim < 8:
            raise ValueError("cells_per_dim must be at least 8")
        if self.dimension not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.cells_per_dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dimension

    @property
    def num_nodes(self) -> int:
        return self.cells_per_dim**self.dimension

    @cached_property
    def nodes_1d(self) -> np.ndarray:
        n, L = self.cells_per_dim, self.half_width
        return -L + (np.arange(n) + 0.5) * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (num_nodes, dimension), C order."""
        if self.dimension == 1:
            return self.nodes_1d[:, None]
        xx, yy = np.meshgrid(self.nodes_1d, self.nodes_1d, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @cached_property
    def node_radii(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def ball_mask(self, center, radius: float) -> np.ndarray:
        """Boolean mask of nodes with |x - center| < radius."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        return np.linalg.norm(self.nodes - c[None, :], axis=1) < radius

    def indicator(self, center, radius: float) -> np.ndarray:
        return self.ball_mask(center, radius).astype(float)

    def sample(self, func, t: float) -> np.ndarray:
        """Evaluate a coefficient map at time t on all nodes."""
        return np.asarray(func(t, self.nodes), dtype=float).reshape(self.num_nodes)


def _check_same_box(a, b):
    if a.box != b.box:
        raise ValueError("fields live on different boxes")


@dataclass
class GridField:
    """Density field (discrete L1 object) sampled on a box grid."""

    values: np.ndarray
    box: TruncatedBox
    time_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.box.num_nodes)

    def norm_l1(self) -> float:
        return self.box.cell_volume * float(np.sum(np.abs(self.values)))

    def mass(self) -> float:
        return self.box.cell_volume * float(np.sum(self.values))

    def copy(self) -> "GridField":
        return GridField(self.values.copy(), self.box, self.time_tag)


@dataclass
class DualGridField:
    """Test-function field (discrete L-infinity object) on a box grid."""

    values: np.ndarray
    box: TruncatedBox
    time_tag: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.box.num_nodes)

    def norm_sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "DualGridField":
        return DualGridField(self.values.copy(), self.box, self.time_tag)


def pairing(phi, f) -> float:
    """Discrete duality bracket <phi, f> = h^d * sum_i phi_i f_i."""
    pv = phi.values if hasattr(phi, "values") else np.asarray(phi, dtype=float)
    fv = f.values if hasattr(f, "values") else np.asarray(f, dtype=float)
    box = f.box if hasattr(f, "box") else phi.box
    if hasattr(phi, "box") and hasattr(f, "box"):
        _check_same_box(phi, f)
    return box.cell_volume * float(np.dot(pv, fv))
