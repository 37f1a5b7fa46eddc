"""Approximate the complement of a sampled free space on [-pi, pi]^2.

The square is cut into a uniform grid whose cell width is 2*pi / floor(sqrt(n)/2)
for n input points, so an average cell holds about four samples. Cells holding
no sample are complement candidates; a candidate is confirmed as complement
boundary only if an adjacent cell along one of the scan axes is also empty,
which filters isolated holes left by sampling noise. Confirmed cells from both
axis scans are pooled and resampled uniformly by area.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


class ComplementError(ValueError):
    """Invalid input to the complement approximation."""


def _empty_cell_grid(points: np.ndarray, cells: int) -> np.ndarray:
    """Boolean (cells, cells) grid, True where no point falls in the cell.

    Index [i, j] covers theta0 interval i and theta1 interval j.
    """
    ij = np.floor((points + np.pi) / TWO_PI * cells).astype(int)
    ij = np.clip(ij, 0, cells - 1)  # theta == pi lands in the last cell
    occupied = np.zeros((cells, cells), dtype=bool)
    occupied[ij[:, 0], ij[:, 1]] = True
    return ~occupied


def confirmed_boundary_cells(points: np.ndarray, cells: int) -> np.ndarray:
    """(k, 2) integer indices of empty cells confirmed on either scan axis."""
    empty = _empty_cell_grid(points, cells)
    confirm = np.zeros_like(empty)
    # scan along theta0: an empty interval confirmed by the neighbor row above or below
    confirm[1:, :] |= empty[1:, :] & empty[:-1, :]
    confirm[:-1, :] |= empty[:-1, :] & empty[1:, :]
    # scan along theta1 (transposed pass)
    confirm[:, 1:] |= empty[:, 1:] & empty[:, :-1]
    confirm[:, :-1] |= empty[:, :-1] & empty[:, 1:]
    return np.argwhere(confirm)


def approximate_complement(points: np.ndarray, n_out: int, seed) -> np.ndarray:
    """Resample n_out points uniformly over the confirmed complement cells.

    Requires at least 100 input points so the grid is meaningful. Returns an
    empty (0, 2) array when no cell is confirmed (a space-filling cloud).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ComplementError(f"expected a point cloud of shape (n, 2), got {points.shape}")
    if len(points) < 100:
        raise ComplementError(f"need at least 100 points, got {len(points)}")
    if n_out < 0:
        raise ComplementError("n_out must be non-negative")
    cells = int(np.floor(np.sqrt(len(points)) / 2.0))
    found = confirmed_boundary_cells(points, cells)
    if len(found) == 0 or n_out == 0:
        return np.zeros((0, 2))
    rng = np.random.default_rng(seed)
    # all cells share the same area, so area weighting is a uniform choice
    pick = rng.integers(0, len(found), size=n_out)
    width = TWO_PI / cells
    offset = rng.uniform(0.0, width, size=(n_out, 2))
    return -np.pi + found[pick] * width + offset
