"""Witness filtrations on landmark subsets and Z/2 persistent homology.

A filtration is a list of simplices (vertices, edges, triangles over the
landmark set) with appearance values. Witness appearance of edge (i, j) is

    max(0, min_w (max(d(w, l_i), d(w, l_j)) - nu(w)))

over all cloud points w, where nu(w) is the distance from w to its nearest
landmark; a triangle appears when its last edge does. Appearance values are
snapped up to a uniform grid of alpha_steps cells on [0, alpha_max] so Betti
numbers are exactly piecewise constant between grid points.

Intervals are reported closed, [birth, death], with death capped at alpha_max
for classes that never die; zero-length intervals are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial.distance import cdist


class FiltrationError(ValueError):
    """Invalid filtration input."""


@dataclass
class Filtration:
    """Simplices as (value, dim, vertex id tuple), sorted faces-first."""

    simplices: list[tuple[float, int, tuple[int, ...]]]
    alpha_max: float
    n_vertices: int


@dataclass
class PersistenceDiagram:
    """Closed intervals per homology dimension, deaths capped at alpha_max."""

    i0: np.ndarray  # (k, 2) birth/death
    i1: np.ndarray  # (m, 2)
    alpha_max: float

    def betti(self, dim: int, alphas: np.ndarray) -> np.ndarray:
        """Number of closed intervals of dimension dim containing each alpha."""
        iv = self.i0 if dim == 0 else self.i1
        alphas = np.asarray(alphas, dtype=float)
        if len(iv) == 0:
            return np.zeros(alphas.shape, dtype=int)
        lo = iv[:, 0][None, :] <= alphas[..., None]
        hi = alphas[..., None] <= iv[:, 1][None, :]
        return (lo & hi).sum(axis=-1)


def _snap_up(values: np.ndarray, alpha_max: float, alpha_steps: int) -> np.ndarray:
    step = alpha_max / alpha_steps
    return np.ceil(values / step - 1e-9) * step


def build_witness_filtration(
    cloud: np.ndarray,
    landmarks: np.ndarray,
    alpha_max: float,
    alpha_steps: int = 1000,
) -> Filtration:
    """Lazy witness complex over the landmark subset, witnesses = whole cloud."""
    cloud = np.asarray(cloud, dtype=float)
    landmarks = np.asarray(landmarks, dtype=int)
    L = len(landmarks)
    if L < 3:
        raise FiltrationError(f"need at least 3 landmarks, got {L}")
    if alpha_max <= 0:
        raise FiltrationError(f"alpha_max must be positive, got {alpha_max}")
    D = cdist(cloud, cloud[landmarks])
    nu = D.min(axis=1)

    edges = []
    edge_value = {}
    for i, j in combinations(range(L), 2):
        v = np.min(np.maximum(D[:, i], D[:, j]) - nu)
        v = max(0.0, float(v))
        if v <= alpha_max:
            edges.append((v, (i, j)))
            edge_value[(i, j)] = v
    return _assemble(edges, edge_value, L, alpha_max, alpha_steps)


def build_rips_filtration(
    cloud: np.ndarray,
    landmarks: np.ndarray,
    alpha_max: float,
    alpha_steps: int = 1000,
) -> Filtration:
    """Vietoris-Rips on the landmark points only (fallback complex)."""
    cloud = np.asarray(cloud, dtype=float)
    landmarks = np.asarray(landmarks, dtype=int)
    L = len(landmarks)
    if L < 3:
        raise FiltrationError(f"need at least 3 landmarks, got {L}")
    if alpha_max <= 0:
        raise FiltrationError(f"alpha_max must be positive, got {alpha_max}")
    P = cloud[landmarks]
    D = cdist(P, P)
    edges = []
    edge_value = {}
    for i, j in combinations(range(L), 2):
        v = float(D[i, j])
        if v <= alpha_max:
            edges.append((v, (i, j)))
            edge_value[(i, j)] = v
    return _assemble(edges, edge_value, L, alpha_max, alpha_steps)


def _assemble(edges, edge_value, L, alpha_max, alpha_steps) -> Filtration:
    """Snap values, add triangles where all edges exist, sort faces-first."""
    simplices: list[tuple[float, int, tuple[int, ...]]] = [
        (0.0, 0, (i,)) for i in range(L)
    ]
    if edges:
        vals = _snap_up(np.array([v for v, _ in edges]), alpha_max, alpha_steps)
        for v, (_, e) in zip(vals, edges):
            simplices.append((float(v), 1, e))
        snapped = {e: float(v) for v, (_, e) in zip(vals, edges)}
        for i, j, k in combinations(range(L), 3):
            try:
                v = max(snapped[(i, j)], snapped[(i, k)], snapped[(j, k)])
            except KeyError:
                continue
            simplices.append((v, 2, (i, j, k)))
    simplices.sort(key=lambda s: (s[0], s[1], s[2]))
    return Filtration(simplices, alpha_max, L)


def reduce_filtration(filt: Filtration) -> PersistenceDiagram:
    """Standard boundary-matrix reduction with columns as integer bitsets."""
    simplices = filt.simplices
    index_of = {verts: pos for pos, (_, _, verts) in enumerate(simplices)}
    columns = []
    for _, dim, verts in simplices:
        col = 0
        if dim >= 1:
            for face in combinations(verts, dim):
                col ^= 1 << index_of[face]
        columns.append(col)

    reduced = [0] * len(columns)
    owner_of_low: dict[int, int] = {}
    pairs = []  # (birth position, death position)
    for j, col in enumerate(columns):
        while col:
            low = col.bit_length() - 1
            k = owner_of_low.get(low)
            if k is None:
                break
            col ^= reduced[k]
        reduced[j] = col
        if col:
            low = col.bit_length() - 1
            owner_of_low[low] = j
            pairs.append((low, j))

    paired_births = {b for b, _ in pairs}
    paired_deaths = {d for _, d in pairs}
    out = {0: [], 1: []}
    for b, d in pairs:
        dim = simplices[b][1]
        if dim in out:
            birth, death = simplices[b][0], simplices[d][0]
            if death > birth:
                out[dim].append((birth, death))
    for pos, (value, dim, _) in enumerate(simplices):
        # essential class: the column reduced to zero and nothing ever killed it
        if dim in out and reduced[pos] == 0 and pos not in paired_births:
            if pos not in paired_deaths and filt.alpha_max > value:
                out[dim].append((value, filt.alpha_max))
    i0 = np.array(sorted(out[0]), dtype=float).reshape(-1, 2)
    i1 = np.array(sorted(out[1]), dtype=float).reshape(-1, 2)
    return PersistenceDiagram(i0, i1, filt.alpha_max)
