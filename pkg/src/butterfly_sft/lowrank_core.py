"""Per-box-pair numerics for the Fourier butterfly.

Equivalent charges live on a ``p``-per-axis Cartesian grid of a frequency
box ``B``; they are fitted to check potentials on the matching grid of a
spatial box ``A`` with ``w_A * w_B = N``.  Per axis the fitting matrix is
``diag(m11) @ G @ diag(m12)`` and the child-to-parent transfer matrix is
``diag(e11) @ H @ diag(e12)``, with ``G`` and ``H`` fixed per ``p``.  All
operators act axis-by-axis on ``(..., p, p[, p])`` arrays.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .spatial_tree import BoxId

__all__ = [
    "Grid",
    "GridOperators",
    "RankBound",
    "kernel_eval",
    "frac_product",
    "cartesian_grid",
    "assemble_operators",
    "fit_diagonals",
    "transfer_diagonals",
    "apply_along_axis",
    "vandermonde_solve",
    "solve_equivalent_charges",
    "apply_fit_operator",
    "apply_child_to_parent",
    "evaluate_from_charges",
    "taylor_rank_bound",
    "fit_solve_batch",
    "transfer_batch",
]

P_MIN, P_MAX = 3, 15


_SPLIT = 134217729.0  # 2**27 + 1


def _two_product(a, b):
    """``a * b == hi + lo`` exactly (Dekker)."""
    hi = a * b
    ca = _SPLIT * a
    a_hi = ca - (ca - a)
    a_lo = a - a_hi
    cb = _SPLIT * b
    b_hi = cb - (cb - b)
    b_lo = b - b_hi
    lo = ((a_hi * b_hi - hi) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
    return hi, lo


def frac_product(a, b, den):
    """Fractional part of ``a * b / den`` with absolute error ~ machine epsilon.

    The naive form loses ``eps * |a b / den|`` to rounding, which matters
    once phases reach thousands of turns.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    hi, lo = _two_product(a, b)
    return ((np.fmod(hi, den) + lo) / den) % 1.0


def kernel_eval(x, k, N):
    """``exp(2 pi i x.k / N)``; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    turns = np.sum(frac_product(x, k, float(N)), axis=-1) % 1.0
    return np.exp(2j * np.pi * turns)


@dataclass(frozen=True)
class Grid:
    corner: tuple[float, ...]
    width: float
    p: int

    @property
    def dim(self) -> int:
        return len(self.corner)

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.corner[axis] + np.arange(self.p) * (self.width / (self.p - 1))

    @property
    def nodes(self) -> np.ndarray:
        """All ``p**d`` nodes, row-major in the grid multi-index."""
        axes = np.meshgrid(*[self.axis_nodes(a) for a in range(self.dim)], indexing="ij")
        return np.stack([ax.ravel() for ax in axes], axis=-1)


def _check_p(p: int) -> None:
    if not P_MIN <= p <= P_MAX:
        raise ValueError(f"p must be in [{P_MIN}, {P_MAX}], got {p} (p=2 makes G singular)")


def cartesian_grid(corner, width, p: int, dim: int | None = None) -> Grid:
    _check_p(p)
    corner = tuple(float(c) for c in np.atleast_1d(corner))
    if dim is not None and len(corner) != dim:
        raise ValueError(f"corner has {len(corner)} coordinates, expected {dim}")
    if not width > 0:
        raise ValueError("grid width must be positive")
    return Grid(corner=corner, width=float(width), p=p)


def vandermonde_solve(nodes: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve ``sum_j z_j nodes_i**j = y_i`` along axis 0 (Bjorck-Pereyra).

    Forward accurate for these node sets where pivoted LU loses digits in
    proportion to the condition number.
    """
    n = nodes.size
    a = np.array(y, dtype=complex, copy=True)
    for k in range(n - 1):
        # Newton divided differences, highest index first
        a[k + 1 :] = (a[k + 1 :] - a[k:-1]) / (nodes[k + 1 :] - nodes[: n - k - 1]).reshape((-1,) + (1,) * (a.ndim - 1))
    for k in range(n - 2, -1, -1):
        for i in range(k, n - 1):
            a[i] -= nodes[k] * a[i + 1]
    return a


@dataclass(frozen=True)
class GridOperators:
    """``G``, ``H`` and the solver for ``G`` for one ``p``."""

    p: int
    G: np.ndarray
    H: np.ndarray
    nodes: np.ndarray  # G[l, m] = nodes[l] ** m
    condition: float
    roots: np.ndarray  # exp(i pi k / (p-1)), k = 0 .. 2(p-1)-1

    def solve_G(self, y: np.ndarray) -> np.ndarray:
        """Solve ``G z = y`` for one vector or the columns of a matrix."""
        return vandermonde_solve(self.nodes, y)


@functools.lru_cache(maxsize=None)
def assemble_operators(p: int) -> GridOperators:
    _check_p(p)
    ll = np.outer(np.arange(p), np.arange(p))
    q = (p - 1) ** 2
    # exact reduction of the integer phases before the exponential
    G = np.exp(2j * np.pi * (ll % q) / q)
    H = np.exp(1j * np.pi * (ll % (2 * q)) / q)
    nodes = G[:, 1].copy()
    cond = float(np.linalg.cond(G))
    ops = GridOperators(p=p, G=G, H=H, nodes=nodes, condition=cond, roots=np.exp(1j * np.pi * np.arange(2 * (p - 1)) / (p - 1)))
    # normwise backward error of the solver; the forward error is bounded by cond
    eye = np.eye(p, dtype=complex)
    inv = ops.solve_G(eye)
    backward = np.linalg.norm(G @ inv - eye, 1) / (np.linalg.norm(G, 1) * np.linalg.norm(inv, 1))
    if not np.isfinite(backward) or backward > 1e-10:
        raise np.linalg.LinAlgError(f"G solve failed for p={p} (backward error {backward:.2e}, cond ~ {cond:.3e})")
    if cond * np.finfo(float).eps > 1.0:
        warnings.warn(f"fit matrix for p={p} has condition ~ {cond:.1e}; equivalent charges lose all digits to rounding", RuntimeWarning, stacklevel=2)
    for arr in (G, H, nodes, ops.roots):
        arr.setflags(write=False)
    return ops


def _corner_width(box, N):
    if isinstance(box, BoxId):
        return np.array(box.corner(N), dtype=float), float(box.width(N))
    corner, width = box
    return np.atleast_1d(np.asarray(corner, dtype=float)), float(width)


def fit_diagonals(A, B, p: int, N):
    """Per-axis diagonals ``(m11, m12)`` of the fitting matrix, each ``(d, p)``.

    ``A`` and ``B`` are ``BoxId`` or ``(corner, width)`` pairs.
    """
    cA, wA = _corner_width(A, N)
    cB, wB = _corner_width(B, N)
    l = np.arange(p)
    den = float((p - 1) * N)
    # (c_A + l w_A / (p-1)) c_B / N  and  c_A l w_B / ((p-1) N)
    m11 = np.exp(2j * np.pi * frac_product(cA[:, None] * (p - 1) + l * wA, cB[:, None], den))
    m12 = np.exp(2j * np.pi * frac_product(cA[:, None], l * wB, den))
    return m11, m12


def transfer_diagonals(A, Bc, p: int, N):
    """Per-axis diagonals ``(e11, e12)`` of the child-to-parent matrix."""
    return fit_diagonals(A, Bc, p, N)


def _width_product(A, B, N):
    _, wA = _corner_width(A, N)
    _, wB = _corner_width(B, N)
    return wA * wB


def apply_along_axis(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``mat`` (``p x p``) with axis ``axis`` of ``arr``."""
    moved = np.moveaxis(arr, axis, -1)
    return np.moveaxis(moved @ mat.T, -1, axis)


def _solve_along_axis(ops: GridOperators, arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(ops.solve_G(np.moveaxis(arr, axis, 0)), 0, axis)


def _as_grid_array(values, p: int, dim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.size != p**dim:
        raise ValueError(f"charge array must have {p ** dim} entries, got {arr.size}")
    return arr.reshape((p,) * dim)


def solve_equivalent_charges(A, B, u, ops: GridOperators, N):
    """Equivalent charges on ``B``'s grid reproducing ``u`` on ``A``'s grid.

    Requires ``w_A * w_B == N`` exactly.  Returns an array of ``u``'s shape.
    """
    if _width_product(A, B, N) != N:
        raise ValueError("box pair is not complementary: w_A * w_B != N")
    p = ops.p
    cA, _ = _corner_width(A, N)
    d = cA.size
    u_arr = np.asarray(u, dtype=complex)
    f = _as_grid_array(u_arr, p, d)
    m11, m12 = fit_diagonals(A, B, p, N)
    for a in range(d):
        shape = [1] * d
        shape[a] = p
        f = f * np.conj(m11[a]).reshape(shape)
        f = _solve_along_axis(ops, f, a)
        f = f * np.conj(m12[a]).reshape(shape)
    return f.reshape(u_arr.shape)


def apply_fit_operator(A, B, f, ops: GridOperators, N):
    """Forward fitting operator: potentials on ``A``'s grid from charges on ``B``'s."""
    if _width_product(A, B, N) != N:
        raise ValueError("box pair is not complementary: w_A * w_B != N")
    p = ops.p
    cA, _ = _corner_width(A, N)
    d = cA.size
    f_arr = np.asarray(f, dtype=complex)
    u = _as_grid_array(f_arr, p, d)
    m11, m12 = fit_diagonals(A, B, p, N)
    for a in range(d):
        shape = [1] * d
        shape[a] = p
        u = u * m12[a].reshape(shape)
        u = apply_along_axis(ops.G, u, a)
        u = u * m11[a].reshape(shape)
    return u.reshape(f_arr.shape)


def apply_child_to_parent(A, Bc, f_child, ops: GridOperators, N):
    """Check potentials on ``A``'s grid generated by charges on ``Bc``'s grid.

    Requires ``w_A * w_Bc == N / 2`` exactly.
    """
    if 2 * _width_product(A, Bc, N) != N:
        raise ValueError("transfer needs w_A * w_Bc == N / 2")
    p = ops.p
    cA, _ = _corner_width(A, N)
    d = cA.size
    f_arr = np.asarray(f_child, dtype=complex)
    u = _as_grid_array(f_arr, p, d)
    e11, e12 = transfer_diagonals(A, Bc, p, N)
    for a in range(d):
        shape = [1] * d
        shape[a] = p
        u = u * e12[a].reshape(shape)
        u = apply_along_axis(ops.H, u, a)
        u = u * e11[a].reshape(shape)
    return u.reshape(f_arr.shape)


def evaluate_from_charges(x, B, f, N):
    """Field of the grid charges ``f`` on ``B`` at point(s) ``x``.

    Uses per-axis phase vectors so each point costs ``O(d p + p^d)``.
    """
    cB, wB = _corner_width(B, N)
    d = cB.size
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    f_arr = np.asarray(f, dtype=complex)
    p = round(f_arr.size ** (1.0 / d))
    f_arr = _as_grid_array(f_arr, p, d)
    out = np.broadcast_to(f_arr, (xs.shape[0],) + f_arr.shape)
    l = np.arange(p)
    den = float((p - 1) * N)
    for a in reversed(range(d)):
        # node * (p-1) is an integer for integer corners and widths
        nodes_scaled = cB[a] * (p - 1) + l * wB
        phase = np.exp(2j * np.pi * frac_product(xs[:, a, None], nodes_scaled[None, :], den))
        out = np.einsum("n...l,nl->n...", out, phase)
    return out[0] if single else out


@dataclass(frozen=True)
class RankBound:
    Z: float
    epsilon: float
    S: int


def taylor_rank_bound(Z, epsilon) -> RankBound:
    """Number of Taylor terms of ``exp(2 pi i x)`` sufficient on ``|x| <= Z``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if Z < 0:
        raise ValueError("Z must be non-negative")
    S = math.ceil(max(4 * math.e * math.pi * Z, math.log2(1 / epsilon)))
    return RankBound(Z=float(Z), epsilon=float(epsilon), S=max(S, 1))


# Batched forms used by the level sweep.  For box coordinates ``a`` (in T_X)
# and ``b`` (in T_K) the diagonal phases reduce to roots of unity:
#   fit:      m11_l = w^(2 l b),  m12_l = w^(2 a l)
#   transfer: e11_l = (-1)^(a b) w^(l b),  e12_l = w^(a l)
# with w = exp(i pi / (p - 1)).


def _root_phases(ops: GridOperators, coords: np.ndarray, scale: int) -> np.ndarray:
    """``roots[(scale * l * c) mod 2(p-1)]`` with shape ``coords.shape + (p,)``."""
    p = ops.p
    m = 2 * (p - 1)
    idx = (scale * (coords[..., None] % m) * np.arange(p)) % m
    return ops.roots[idx]


def _axis_shape(d: int, a: int) -> tuple:
    shape = [1] * d
    shape[a] = -1
    return tuple(shape)


def fit_solve_batch(u: np.ndarray, a_coords: np.ndarray, b_coords: np.ndarray, ops: GridOperators) -> np.ndarray:
    """Solve the fitting systems for every pair in an ``(nA, nB, p..)`` block."""
    nA, nB = u.shape[:2]
    d = a_coords.shape[1]
    f = u
    for a in range(d):
        ax = 2 + a
        m11 = np.conj(_root_phases(ops, b_coords[:, a], 2))  # (nB, p)
        m12 = np.conj(_root_phases(ops, a_coords[:, a], 2))  # (nA, p)
        f = f * m11.reshape((1, nB) + _axis_shape(d, a))
        f = _solve_along_axis(ops, f, ax)
        f = f * m12.reshape((nA, 1) + _axis_shape(d, a))
    return f


def transfer_batch(f: np.ndarray, a_coords: np.ndarray, bc_coords: np.ndarray, ops: GridOperators) -> np.ndarray:
    """Apply the transfer operator to every ``(A, B_c)`` pair of a block.

    ``f[i, j]`` holds the charges of ``(parent(A_i), B_c_j)``; the result
    holds the check potentials of that child on ``A_i``'s grid.
    """
    nA, nJ = f.shape[:2]
    d = a_coords.shape[1]
    u = f
    for a in range(d):
        ax = 2 + a
        e12 = _root_phases(ops, a_coords[:, a], 1)
        e11 = _root_phases(ops, bc_coords[:, a], 1)
        u = u * e12.reshape((nA, 1) + _axis_shape(d, a))
        u = apply_along_axis(ops.H, u, ax)
        u = u * e11.reshape((1, nJ) + _axis_shape(d, a))
    parity = (a_coords[:, None, :] * bc_coords[None, :, :]).sum(axis=-1) & 1
    sign = 1 - 2 * parity
    return u * sign.reshape((nA, nJ) + (1,) * d)
