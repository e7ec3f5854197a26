"""Adaptive dyadic quadtrees/octrees over ``[0, N]^d`` with unit-width leaves.

Only non-empty boxes are stored.  Boxes at each level are kept as sorted
integer coordinate arrays, so a level sweep touches exactly the non-empty
boxes and parent/child lookups are ``searchsorted`` calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "BoxId",
    "AdaptiveTree",
    "build_tree",
    "boxes_at_level",
    "children",
    "parent",
    "log2_exact",
]


def log2_exact(n) -> int:
    """Return ``log2(n)`` for a positive power of two, else raise ``ValueError``."""
    n_int = int(n)
    if n_int != n or n_int < 1 or n_int & (n_int - 1):
        raise ValueError(f"N must be a positive power of two, got {n!r}")
    return n_int.bit_length() - 1


class BoxId(NamedTuple):
    level: int
    coords: tuple[int, ...]

    def width(self, N: int) -> int:
        return N >> self.level

    def corner(self, N: int) -> tuple[int, ...]:
        w = self.width(N)
        return tuple(c * w for c in self.coords)


def parent(b: BoxId) -> BoxId:
    if b.level == 0:
        raise ValueError("the root box has no parent")
    return BoxId(b.level - 1, tuple(c >> 1 for c in b.coords))


def _row_major_keys(coords: np.ndarray, level: int) -> np.ndarray:
    # lexicographic order of coordinate tuples == order of these keys
    side = np.int64(1) << level
    keys = np.zeros(coords.shape[0], dtype=np.int64)
    for a in range(coords.shape[1]):
        keys = keys * side + coords[:, a]
    return keys


def _morton_keys(leaf: np.ndarray, L: int) -> np.ndarray:
    n, d = leaf.shape
    keys = np.zeros(n, dtype=np.int64)
    for bit in range(L - 1, -1, -1):
        for a in range(d):
            keys = (keys << 1) | ((leaf[:, a] >> bit) & 1)
    return keys


@dataclass(frozen=True)
class _Level:
    coords: np.ndarray  # (n_boxes, d) int64, lexicographically sorted
    keys: np.ndarray  # row-major keys matching ``coords``
    start: np.ndarray  # point range [start, stop) into ``AdaptiveTree.order``
    stop: np.ndarray


@dataclass(frozen=True)
class AdaptiveTree:
    """Immutable tree over one point set.

    ``order`` lists point indices in Morton order of their leaf, so every box
    at every level owns one contiguous slice ``order[start:stop]``.
    """

    N: int
    dim: int
    L: int
    order: np.ndarray
    levels: tuple[_Level, ...]
    leaf_of_point: np.ndarray  # (n_points, d) leaf coordinates

    @property
    def n_points(self) -> int:
        return int(self.order.size)

    def count(self, level: int) -> int:
        return int(self.levels[level].coords.shape[0])

    def index_of(self, level: int, coords: np.ndarray) -> np.ndarray:
        """Positions of ``coords`` in the level list, ``-1`` where absent."""
        lev = self.levels[level]
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.dim)
        keys = _row_major_keys(coords, level)
        pos = np.searchsorted(lev.keys, keys)
        pos_c = np.minimum(pos, max(lev.keys.size - 1, 0))
        hit = (lev.keys.size > 0) & (lev.keys[pos_c] == keys)
        return np.where(hit, pos_c, -1)

    def contains(self, b: BoxId) -> bool:
        if not 0 <= b.level <= self.L or len(b.coords) != self.dim:
            return False
        return bool(self.index_of(b.level, np.array(b.coords))[0] >= 0)

    def points_in(self, b: BoxId) -> np.ndarray:
        """Indices of the input points that fall in box ``b``."""
        i = int(self.index_of(b.level, np.array(b.coords))[0])
        if i < 0:
            raise KeyError(f"box {b} is not present in the tree")
        lev = self.levels[b.level]
        return self.order[lev.start[i] : lev.stop[i]]

    def point_range(self, b: BoxId) -> tuple[int, int]:
        i = int(self.index_of(b.level, np.array(b.coords))[0])
        if i < 0:
            raise KeyError(f"box {b} is not present in the tree")
        lev = self.levels[b.level]
        return int(lev.start[i]), int(lev.stop[i])

    def parent_index(self, level: int) -> np.ndarray:
        """For each box at ``level`` (>0), the index of its parent at ``level-1``."""
        return self.index_of(level - 1, self.levels[level].coords >> 1)

    def dump(self) -> str:
        """Debug listing, one ``level c0 c1 [c2] count`` line per box."""
        lines = []
        for t, lev in enumerate(self.levels):
            for c, s, e in zip(lev.coords, lev.start, lev.stop):
                lines.append(" ".join([str(t), *map(str, c), str(e - s)]))
        return "\n".join(lines) + ("\n" if lines else "")


def leaf_coordinates(points: np.ndarray, N: int) -> np.ndarray:
    """Unit-cell index of each point; cells are half-open except at ``N``."""
    leaf = np.floor(points).astype(np.int64)
    return np.minimum(leaf, N - 1)


def build_tree(points, N: int) -> AdaptiveTree:
    """Build the adaptive tree of the points (array ``(n, d)`` or a PointSet)."""
    if hasattr(points, "points"):
        points = points.points
    L = log2_exact(N)
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    n, d = pts.shape
    if n and (not np.all(np.isfinite(pts)) or pts.min() < 0 or pts.max() > N):
        raise ValueError(f"points must lie in [0, {N}]^{d}")

    leaf = leaf_coordinates(pts, N)
    morton = _morton_keys(leaf, L)
    order = np.argsort(morton, kind="stable")
    morton_sorted = morton[order]

    levels = []
    for t in range(L + 1):
        box_morton = morton_sorted >> (d * (L - t))
        uniq, start = np.unique(box_morton, return_index=True)
        stop = np.append(start[1:], n).astype(np.int64)
        coords = leaf[order[start]] >> (L - t)
        keys = _row_major_keys(coords, t)
        lex = np.argsort(keys, kind="stable")
        levels.append(
            _Level(coords=coords[lex], keys=keys[lex], start=start[lex].astype(np.int64), stop=stop[lex])
        )
    return AdaptiveTree(N=int(N), dim=d, L=L, order=order, levels=tuple(levels), leaf_of_point=leaf)


def boxes_at_level(tree: AdaptiveTree, level: int) -> list[BoxId]:
    if not 0 <= level <= tree.L:
        raise ValueError(f"level {level} outside [0, {tree.L}]")
    return [BoxId(level, tuple(int(c) for c in row)) for row in tree.levels[level].coords]


def children(tree: AdaptiveTree, b: BoxId) -> list[BoxId]:
    """Non-empty children of a present box, in lexicographic order."""
    if not tree.contains(b):
        raise KeyError(f"box {b} is not present in the tree")
    if b.level == tree.L:
        return []
    offsets = np.array(np.meshgrid(*[[0, 1]] * tree.dim, indexing="ij")).reshape(tree.dim, -1).T
    cand = 2 * np.array(b.coords, dtype=np.int64) + offsets
    idx = tree.index_of(b.level + 1, cand)
    return [BoxId(b.level + 1, tuple(int(c) for c in row)) for row, i in zip(cand, idx) if i >= 0]
