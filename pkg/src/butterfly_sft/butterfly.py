"""Butterfly evaluation of ``u_i = sum_j exp(2 pi i x_i . k_j / N) f_j``.

Equivalent charges are built for the leaves of the source tree against the
root of the target tree, carried up the source tree one level at a time
(each level pairing source boxes of width ``w`` with target boxes of width
``N / w``), and finally evaluated at the targets from the source root.

All pairs of one level are processed as one dense ``(nA, nB, p, .., p)``
block.  Only the previous and the current level are alive at any time.
"""

from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass, field

import numpy as np

from .geometry import PointSet
from .lowrank_core import GridOperators, assemble_operators, fit_solve_batch, frac_product, transfer_batch
from .spatial_tree import AdaptiveTree, BoxId, build_tree

__all__ = [
    "TransformPlan",
    "LevelState",
    "StorageMonitor",
    "plan",
    "leaf_init",
    "sweep_level",
    "upward_sweep",
    "final_eval",
    "transform",
]

# complex entries per work chunk; bounds the temporaries of one level
CHUNK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class TransformPlan:
    tree_x: AdaptiveTree
    tree_k: AdaptiveTree
    p: int
    N: int
    dim: int
    L: int
    ops: GridOperators
    targets: np.ndarray
    sources: np.ndarray

    @property
    def n_sources(self) -> int:
        return self.sources.shape[0]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[0]


@dataclass
class LevelState:
    """Equivalent charges of every pair (A at level ``L - t``, B at level ``t``)."""

    level: int
    a_level: int
    a_coords: np.ndarray
    b_coords: np.ndarray
    charges: np.ndarray  # (nA, nB) + (p,) * d

    @property
    def n_pairs(self) -> int:
        return self.a_coords.shape[0] * self.b_coords.shape[0]

    def get(self, A: BoxId, B: BoxId) -> np.ndarray:
        if A.level != self.a_level or B.level != self.level:
            raise KeyError(f"pair ({A}, {B}) does not belong to level {self.level}")
        i = np.flatnonzero((self.a_coords == A.coords).all(axis=1))
        j = np.flatnonzero((self.b_coords == B.coords).all(axis=1))
        if not i.size or not j.size:
            raise KeyError(f"pair ({A}, {B}) is not present")
        return self.charges[i[0], j[0]]

    def keys(self):
        for a in self.a_coords:
            for b in self.b_coords:
                yield BoxId(self.a_level, tuple(int(c) for c in a)), BoxId(self.level, tuple(int(c) for c in b))


@dataclass
class StorageMonitor:
    """Counts live charge arrays while a transform runs."""

    live: int = 0
    peak: int = 0
    pairs_per_level: dict = field(default_factory=dict)
    # (t, live arrays while building level t, pairs(t) + pairs(t + 1))
    transitions: list = field(default_factory=list)

    def allocate(self, state: LevelState, previous: LevelState | None = None):
        self.live += state.n_pairs
        self.peak = max(self.peak, self.live)
        self.pairs_per_level[state.level] = state.n_pairs
        bound = state.n_pairs + (previous.n_pairs if previous is not None else 0)
        self.transitions.append((state.level, self.live, bound))

    def release(self, state: LevelState):
        self.live -= state.n_pairs


def _coords(ps):
    if isinstance(ps, PointSet):
        return ps.points, ps.n_scale, ps.dim
    return np.asarray(ps, float), None, np.asarray(ps).shape[-1]


def plan(sources, targets, p: int, N: int | None = None) -> TransformPlan:
    """Build both trees and the grid operators; reusable across charge vectors."""
    ks, n_k, d_k = _coords(sources)
    xs, n_x, d_x = _coords(targets)
    if n_k is not None and n_x is not None and n_k != n_x:
        raise ValueError(f"sources use N={n_k} but targets use N={n_x}")
    N = N or n_k or n_x
    if N is None:
        raise ValueError("N must be given for raw coordinate arrays")
    if d_k != d_x:
        raise ValueError("sources and targets differ in dimension")
    if ks.shape[0] == 0 or xs.shape[0] == 0:
        raise ValueError("source and target sets must be non-empty")
    ops = assemble_operators(p)
    tree_k = build_tree(ks, N)
    tree_x = build_tree(xs, N)
    return TransformPlan(tree_x=tree_x, tree_k=tree_k, p=p, N=int(N), dim=d_k, L=tree_k.L, ops=ops, targets=xs, sources=ks)


def _axis_phases(coords: np.ndarray, p: int) -> np.ndarray:
    """``exp(2 pi i c l / (p - 1))`` per point and axis: shape ``(n, d, p)``."""
    return np.exp(2j * np.pi * frac_product(coords[:, :, None], np.arange(p), float(p - 1)))


def _outer_axes(phases: np.ndarray) -> np.ndarray:
    """Per-row tensor product of the ``d`` axis vectors: ``(n,) + (p,) * d``."""
    n, d, p = phases.shape
    out = phases[:, 0]
    for a in range(1, d):
        out = out[..., None] * phases[:, a].reshape((n,) + (1,) * a + (p,))
    return out


def _check_charges(plan_: TransformPlan, charges) -> np.ndarray:
    if isinstance(charges, PointSet):
        charges = charges.charges
    f = np.asarray(charges, dtype=complex).ravel()
    if f.size != plan_.n_sources:
        raise ValueError(f"got {f.size} charges for {plan_.n_sources} sources")
    return f


def leaf_init(plan_: TransformPlan, charges) -> LevelState:
    """Fit leaf equivalent charges against the root of the target tree."""
    f = _check_charges(plan_, charges)
    tree, p, d, L = plan_.tree_k, plan_.p, plan_.dim, plan_.L
    lev = tree.levels[L]
    n_leaves = lev.coords.shape[0]
    u = np.zeros((1, n_leaves) + (p,) * d, dtype=complex)

    # the check grid of the root spans [0, N] with spacing N/(p-1), so
    # exp(2 pi i x_l k / N) = exp(2 pi i l k / (p-1))
    by_start = np.argsort(lev.start)
    starts = lev.start[by_start]
    step = max(1, CHUNK_ENTRIES // p**d)
    lo = 0
    while lo < n_leaves:
        hi = int(np.searchsorted(starts, starts[lo] + step, side="left"))
        hi = max(hi, lo + 1)
        s0 = int(starts[lo])
        s1 = int(starts[hi]) if hi < n_leaves else tree.n_points
        idx = tree.order[s0:s1]
        terms = _outer_axes(_axis_phases(plan_.sources[idx], p)) * f[idx].reshape((-1,) + (1,) * d)
        u[0, by_start[lo:hi]] = np.add.reduceat(terms, starts[lo:hi] - s0, axis=0)
        lo = hi

    a_coords = np.zeros((1, d), dtype=np.int64)
    charges_leaf = fit_solve_batch(u, a_coords, lev.coords, plan_.ops)
    return LevelState(level=L, a_level=0, a_coords=a_coords, b_coords=lev.coords, charges=charges_leaf)


def _child_groups(tree: AdaptiveTree, level: int):
    """For boxes at ``level`` grouped by their offset inside the parent."""
    coords = tree.levels[level].coords
    parent_idx = tree.parent_index(level)
    d = coords.shape[1]
    offset = np.zeros(coords.shape[0], dtype=np.int64)
    for a in range(d):
        offset = offset * 2 + (coords[:, a] & 1)
    groups = []
    for c in range(2**d):
        sel = np.flatnonzero(offset == c)
        if sel.size:
            groups.append((sel, parent_idx[sel]))
    return groups


def _level_rows(prev: LevelState, a_coords, a_parent, b_count, groups, ops, lo, hi):
    d = a_coords.shape[1]
    p = ops.p
    rows = a_coords[lo:hi]
    u = np.zeros((hi - lo, b_count) + (p,) * d, dtype=complex)
    src = prev.charges[a_parent[lo:hi]]
    for sel, par in groups:
        u[:, par] += transfer_batch(src[:, sel], rows, prev.b_coords[sel], ops)
    return u


def sweep_level(plan_: TransformPlan, prev: LevelState, threads: int = 1) -> LevelState:
    """One upward step: level ``t + 1`` of ``T_K`` to level ``t``."""
    t = prev.level - 1
    L, d, p = plan_.L, plan_.dim, plan_.p
    a_level = L - t
    # complementary widths, exact in integers
    assert (plan_.N >> a_level) * (plan_.N >> t) == plan_.N
    a_coords = plan_.tree_x.levels[a_level].coords
    a_parent = plan_.tree_x.parent_index(a_level)
    b_coords = plan_.tree_k.levels[t].coords
    groups = _child_groups(plan_.tree_k, t + 1)
    nA, nB = a_coords.shape[0], b_coords.shape[0]

    out = np.empty((nA, nB) + (p,) * d, dtype=complex)
    rows_per_chunk = max(1, CHUNK_ENTRIES // max(1, prev.b_coords.shape[0] * p**d))
    bounds = [(lo, min(nA, lo + rows_per_chunk)) for lo in range(0, nA, rows_per_chunk)]

    def work(lo_hi):
        lo, hi = lo_hi
        u = _level_rows(prev, a_coords, a_parent, nB, groups, plan_.ops, lo, hi)
        out[lo:hi] = fit_solve_batch(u, a_coords[lo:hi], b_coords, plan_.ops)

    if threads > 1 and len(bounds) > 1:
        with cf.ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, bounds))
    else:
        for b in bounds:
            work(b)
    return LevelState(level=t, a_level=a_level, a_coords=a_coords, b_coords=b_coords, charges=out)


def upward_sweep(plan_: TransformPlan, state: LevelState, *, threads: int = 1, monitor: StorageMonitor | None = None) -> LevelState:
    """Carry equivalent charges from the leaves of ``T_K`` to its root."""
    if monitor is not None and not monitor.transitions:
        monitor.allocate(state)
    while state.level > 0:
        new = sweep_level(plan_, state, threads)
        if monitor is not None:
            monitor.allocate(new, state)
            monitor.release(state)
        state = new
    return state


def final_eval(plan_: TransformPlan, state: LevelState) -> np.ndarray:
    """Potentials at every target from the root equivalent charges."""
    if state.level != 0:
        raise ValueError("final_eval needs the level-0 state")
    tree, p, d = plan_.tree_x, plan_.p, plan_.dim
    leaf_idx = tree.index_of(plan_.L, tree.leaf_of_point)
    out = np.zeros(plan_.n_targets, dtype=complex)
    # source root check grid: nodes l N/(p-1), kernel exp(2 pi i x l / (p-1))
    step = max(1, CHUNK_ENTRIES // p**d)
    for lo in range(0, plan_.n_targets, step):
        hi = min(plan_.n_targets, lo + step)
        phases = _outer_axes(_axis_phases(plan_.targets[lo:hi], p))
        f = state.charges[leaf_idx[lo:hi], 0]
        out[lo:hi] = (phases * f).reshape(hi - lo, -1).sum(axis=1)
    return out


def transform(plan_: TransformPlan, charges, *, threads: int = 1, monitor: StorageMonitor | None = None) -> np.ndarray:
    """Approximate ``sum_j exp(2 pi i x_i . k_j / N) f_j`` for all targets."""
    f = _check_charges(plan_, charges)
    if not np.any(f):
        return np.zeros(plan_.n_targets, dtype=complex)
    state = leaf_init(plan_, f)
    if monitor is not None:
        monitor.allocate(state)
    state = upward_sweep(plan_, state, threads=threads, monitor=monitor)
    return final_eval(plan_, state)
