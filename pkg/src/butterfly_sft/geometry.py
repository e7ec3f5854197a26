"""Point sets on curves and surfaces, scaled into ``[0, N]^d``.

Shapes are described in the unit box and sampled at a fixed number of
points per unit length (curves) or area (surfaces) of the scaled shape
``N * X``.  Also holds the point-set text format, OBJ ingestion and the
far-field change of variables.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .spatial_tree import log2_exact

__all__ = [
    "GeometrySpec",
    "PointSet",
    "FarFieldProblem",
    "TriangleMesh",
    "CURVE_PRESETS",
    "PRESETS",
    "parse_geometry",
    "sample_curve_2d",
    "sample_surface_3d",
    "sample_geometry",
    "load_obj_surface",
    "triangle_areas",
    "attach_random_charges",
    "farfield_adapter",
    "farfield_direct",
    "write_pointset",
    "read_pointset",
]

GOLDEN = (1 + 5**0.5) / 2
KINDS_2D = ("ellipse2d", "parametric2d")
KINDS_3D = ("sphere3d", "torus3d", "mesh3d")


@dataclass(frozen=True)
class GeometrySpec:
    """A shape inside the unit box.

    ``params`` depends on ``kind``:

    * ``ellipse2d``: ``center`` (2,), ``axes`` (2,) semi-axes
    * ``parametric2d``: ``preset`` name from :data:`CURVE_PRESETS`
    * ``sphere3d``: ``center`` (3,), ``radius``
    * ``torus3d``: ``center`` (3,), ``radii`` (major, minor); axis along z
    * ``mesh3d``: ``path`` to an OBJ file
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS_2D + KINDS_3D:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        p = self.params
        if self.kind == "ellipse2d":
            c, ax = np.asarray(p["center"], float), np.asarray(p["axes"], float)
            if c.shape != (2,) or ax.shape != (2,) or np.any(ax <= 0):
                raise ValueError("ellipse2d needs a 2D center and positive semi-axes")
            _require_inside(c - ax, c + ax)
        elif self.kind == "parametric2d":
            if p.get("preset") not in CURVE_PRESETS:
                raise ValueError(f"unknown curve preset {p.get('preset')!r}; have {sorted(CURVE_PRESETS)}")
        elif self.kind == "sphere3d":
            c, r = np.asarray(p["center"], float), float(p["radius"])
            if c.shape != (3,) or r <= 0:
                raise ValueError("sphere3d needs a 3D center and positive radius")
            _require_inside(c - r, c + r)
        elif self.kind == "torus3d":
            c = np.asarray(p["center"], float)
            R, r = (float(v) for v in p["radii"])
            if c.shape != (3,) or not 0 < r < R:
                raise ValueError("torus3d needs a 3D center and radii 0 < minor < major")
            ext = np.array([R + r, R + r, r])
            _require_inside(c - ext, c + ext)
        elif self.kind == "mesh3d":
            if "path" not in p:
                raise ValueError("mesh3d needs a path")

    @property
    def dim(self) -> int:
        return 2 if self.kind in KINDS_2D else 3


def _require_inside(lo, hi):
    if np.any(np.asarray(lo) <= 0) or np.any(np.asarray(hi) >= 1):
        raise ValueError("shape must lie strictly inside the unit box")


def _star(t):
    r = 0.3 + 0.1 * np.cos(5 * t)
    return np.stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)], axis=-1)


def _spiral(t):
    # two turns, radius 0.05 -> 0.45
    s = t / (2 * np.pi)
    r = 0.05 + 0.2 * s
    ang = 2 * t
    return np.stack([0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)], axis=-1)


def _kidney(t):
    r = 0.28 + 0.06 * np.cos(t) + 0.04 * np.sin(3 * t)
    return np.stack([0.5 + r * np.cos(t), 0.5 + 1.1 * r * np.sin(t)], axis=-1)


# closed flag, parametrization on [0, 2 pi]
CURVE_PRESETS = {
    "star": (True, _star),
    "spiral": (False, _spiral),
    "kidney": (True, _kidney),
}

PRESETS = {
    # near-circular ellipse: ~1.6e4 points at N=1024, 5 points per unit length
    "ellipse": GeometrySpec("ellipse2d", {"center": (0.5, 0.5), "axes": (0.49, 0.48)}),
    "ellipse-small": GeometrySpec("ellipse2d", {"center": (0.5, 0.5), "axes": (0.4, 0.25)}),
    "circle": GeometrySpec("ellipse2d", {"center": (0.5, 0.5), "axes": (0.25, 0.25)}),
    "star": GeometrySpec("parametric2d", {"preset": "star"}),
    "spiral": GeometrySpec("parametric2d", {"preset": "spiral"}),
    "kidney": GeometrySpec("parametric2d", {"preset": "kidney"}),
    "sphere": GeometrySpec("sphere3d", {"center": (0.5, 0.5, 0.5), "radius": 0.45}),
    "sphere-small": GeometrySpec("sphere3d", {"center": (0.5, 0.5, 0.5), "radius": 0.25}),
    "torus": GeometrySpec("torus3d", {"center": (0.5, 0.5, 0.5), "radii": (0.3, 0.12)}),
}


def parse_geometry(text: str) -> GeometrySpec:
    """Parse a command-line geometry spec.

    Accepts a preset name (``ellipse``, ``star``, ``torus`` ...),
    ``mesh:<path>`` or ``<kind>:<k>=<v>,...`` such as
    ``ellipse2d:cx=0.5,cy=0.5,a=0.3,b=0.2``.
    """
    text = text.strip()
    if text in PRESETS:
        return PRESETS[text]
    kind, _, rest = text.partition(":")
    if kind in ("mesh", "mesh3d"):
        return GeometrySpec("mesh3d", {"path": rest})
    kv = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        kv[key.strip()] = val.strip()
    try:
        if kind == "ellipse2d":
            return GeometrySpec(kind, {"center": (float(kv["cx"]), float(kv["cy"])), "axes": (float(kv["a"]), float(kv["b"]))})
        if kind == "parametric2d":
            return GeometrySpec(kind, {"preset": kv["preset"]})
        if kind == "sphere3d":
            c = (float(kv["cx"]), float(kv["cy"]), float(kv["cz"]))
            return GeometrySpec(kind, {"center": c, "radius": float(kv["r"])})
        if kind == "torus3d":
            c = (float(kv["cx"]), float(kv["cy"]), float(kv["cz"]))
            return GeometrySpec(kind, {"center": c, "radii": (float(kv["R"]), float(kv["r"]))})
    except KeyError as exc:
        raise ValueError(f"geometry {text!r} is missing parameter {exc}") from None
    raise ValueError(f"cannot parse geometry spec {text!r}")


@dataclass
class PointSet:
    """Points in ``[0, N]^d`` with optional complex charges."""

    dim: int
    n_scale: int
    points: np.ndarray
    charges: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, self.dim)
        if self.points.size and (self.points.min() < 0 or self.points.max() > self.n_scale):
            raise ValueError(f"coordinates must lie in [0, {self.n_scale}]")
        if self.charges is not None:
            self.charges = np.asarray(self.charges, dtype=complex).ravel()
            if self.charges.size != self.points.shape[0]:
                raise ValueError("need exactly one charge per point")

    def __len__(self):
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.n_scale

    def with_charges(self, charges) -> "PointSet":
        return replace(self, charges=np.asarray(charges, dtype=complex))


def _clip_box(pts, N):
    # shapes sit strictly inside the box; this only absorbs round-off
    return np.clip(pts, 0.0, float(N))


def _arclength_resample(curve, closed: bool, n_fine: int, count_fn):
    t = np.linspace(0.0, 2 * np.pi, n_fine + 1)
    xy = curve(t)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    count = count_fn(total)
    if closed:
        targets = np.arange(count) * (total / count)
    else:
        targets = np.linspace(0.0, total, count) if count > 1 else np.zeros(1)
    tt = np.interp(targets, s, t)
    return curve(tt), total


def sample_curve_2d(spec: GeometrySpec, N: int, density: float) -> PointSet:
    """Equispaced samples in arc length along the scaled curve ``N * X``.

    The count is ``round(density * arclength)``, and at least one point.
    """
    log2_exact(N)
    if N < 2:
        raise ValueError("N must be at least 2")
    if spec.dim != 2:
        raise ValueError(f"{spec.kind} is not a 2D geometry")
    if not density > 0:
        raise ValueError("density must be positive")
    if spec.kind == "ellipse2d":
        c = np.asarray(spec.params["center"], float)
        ax = np.asarray(spec.params["axes"], float)

        def curve(t):
            return np.stack([c[0] + ax[0] * np.cos(t), c[1] + ax[1] * np.sin(t)], axis=-1)

        closed = True
    else:
        closed, curve = CURVE_PRESETS[spec.params["preset"]]

    def scaled(t):
        return N * curve(t)

    def count_fn(length):
        return max(1, int(round(density * length)))

    n_fine = 200_000
    pts, _ = _arclength_resample(scaled, closed, n_fine, count_fn)
    return PointSet(2, N, _clip_box(pts, N))


def _r2_sequence(n: int, seed_offset: float = 0.5) -> np.ndarray:
    """Low-discrepancy points in the unit square (additive recurrence)."""
    g = 1.32471795724474602596  # plastic number
    alpha = np.array([1 / g, 1 / g**2])
    i = np.arange(1, n + 1)[:, None]
    return (seed_offset + i * alpha) % 1.0


def _sphere_points(center, radius, n):
    # Fibonacci lattice: one point per equal-area latitude band
    i = np.arange(n)
    z = 1 - (2 * i + 1) / n
    r = np.sqrt(np.maximum(0.0, 1 - z * z))
    phi = 2 * np.pi * ((i / GOLDEN) % 1.0)
    return np.asarray(center) + radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _torus_points(center, R, r, n):
    uv = _r2_sequence(n)
    u = 2 * np.pi * uv[:, 0]
    # invert the CDF of the minor angle, weight (R + r cos v)
    grid = np.linspace(0, 2 * np.pi, 4097)
    cdf = (R * grid + r * np.sin(grid)) / (2 * np.pi * R)
    v = np.interp(uv[:, 1], cdf, grid)
    rho = R + r * np.cos(v)
    return np.asarray(center) + np.stack([rho * np.cos(u), rho * np.sin(u), r * np.sin(v)], axis=-1)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (nv, 3)
    faces: np.ndarray  # (nf, 3) zero-based

    @property
    def area(self) -> float:
        return float(triangle_areas(self.vertices, self.faces).sum())


def triangle_areas(vertices, faces) -> np.ndarray:
    v = np.asarray(vertices, float)
    f = np.asarray(faces, int)
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    return 0.5 * np.linalg.norm(cross, axis=1)


def _mesh_points(mesh: TriangleMesh, scale: float, density: float):
    areas = triangle_areas(mesh.vertices, mesh.faces) * scale**2
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has zero surface area")
    count = max(1, int(round(density * total)))
    # cumulative rounding keeps the total exact
    cum = np.floor(np.cumsum(areas) / total * count + 0.5).astype(int)
    per_tri = np.diff(np.concatenate([[0], cum]))
    tri_idx = np.repeat(np.arange(len(areas)), per_tri)
    offsets = np.concatenate([[0], np.cumsum(per_tri)[:-1]])
    local = np.arange(count) - np.repeat(offsets, per_tri)
    uv = np.empty((count, 2))
    for n_i in np.unique(per_tri[per_tri > 0]):
        seq = _r2_sequence(int(n_i))
        sel = per_tri[tri_idx] == n_i
        uv[sel] = seq[local[sel]]
    u, v = uv[:, 0], uv[:, 1]
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    f = mesh.faces[tri_idx]
    a, b, c = (mesh.vertices[f[:, k]] for k in range(3))
    return scale * (a + u[:, None] * (b - a) + v[:, None] * (c - a))


def sample_surface_3d(spec, N: int, density: float) -> PointSet:
    """Quasi-uniform samples on ``N * K`` at ``density`` points per unit area.

    ``spec`` is a 3D :class:`GeometrySpec` or a :class:`TriangleMesh`.
    """
    log2_exact(N)
    if not density > 0:
        raise ValueError("density must be positive")
    if isinstance(spec, TriangleMesh):
        return PointSet(3, N, _clip_box(_mesh_points(spec, N, density), N))
    if spec.dim != 3:
        raise ValueError(f"{spec.kind} is not a 3D geometry")
    p = spec.params
    if spec.kind == "sphere3d":
        r = float(p["radius"]) * N
        n = max(1, int(round(density * 4 * np.pi * r * r)))
        pts = _sphere_points(N * np.asarray(p["center"], float), r, n)
    elif spec.kind == "torus3d":
        R, r = (float(v) * N for v in p["radii"])
        n = max(1, int(round(density * 4 * np.pi**2 * R * r)))
        pts = _torus_points(N * np.asarray(p["center"], float), R, r, n)
    else:
        mesh = load_obj_surface(p["path"])
        pts = _mesh_points(mesh, N, density)
    return PointSet(3, N, _clip_box(pts, N))


def sample_geometry(spec: GeometrySpec, N: int, density: float) -> PointSet:
    if spec.dim == 2:
        return sample_curve_2d(spec, N, density)
    return sample_surface_3d(spec, N, density)


def load_obj_surface(path, rescale: bool = True) -> TriangleMesh:
    """Read ``v``/``f`` records of an OBJ file; polygons are fan-triangulated.

    With ``rescale`` the mesh is centred in the unit cube and scaled
    uniformly so its longest side spans 0.9.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                try:
                    verts.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed vertex") from None
                if len(verts[-1]) != 3:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: face needs at least 3 vertices")
                try:
                    idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed face") from None
                nv = len(verts)
                resolved = []
                for i in idx:
                    j = i - 1 if i > 0 else nv + i
                    if i == 0 or not 0 <= j < nv:
                        raise ValueError(f"{path}:{lineno}: face index {i} out of range")
                    resolved.append(j)
                for k in range(1, len(resolved) - 1):
                    faces.append([resolved[0], resolved[k], resolved[k + 1]])
    if not verts or not faces:
        raise ValueError(f"{path}: no vertices or faces")
    v = np.array(verts, float)
    f = np.array(faces, int)
    if rescale:
        lo, hi = v.min(axis=0), v.max(axis=0)
        extent = (hi - lo).max()
        if extent <= 0:
            raise ValueError(f"{path}: degenerate mesh")
        v = 0.5 + (v - (lo + hi) / 2) * (0.9 / extent)
    return TriangleMesh(v, f)


def attach_random_charges(ps: PointSet, seed=None) -> PointSet:
    """Charges with real and imaginary parts uniform on ``[-1, 1]``."""
    if ps.charges is not None:
        raise ValueError("point set already has charges")
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1.0, 1.0, size=(len(ps), 2))
    return ps.with_charges(z[:, 0] + 1j * z[:, 1])


@dataclass
class FarFieldProblem:
    """``u(xhat) = sum_y exp(-i N xhat . y) f(y)`` over directions ``xhat``."""

    directions: np.ndarray
    surface_points: np.ndarray
    density: np.ndarray
    wave_number: int

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, float))
        self.surface_points = np.atleast_2d(np.asarray(self.surface_points, float))
        self.density = np.asarray(self.density, complex).ravel()
        if np.any(np.abs(np.linalg.norm(self.directions, axis=1) - 1) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if self.density.size != self.surface_points.shape[0]:
            raise ValueError("need one density value per surface point")


def farfield_adapter(fp: FarFieldProblem):
    """Recast a far-field sum as the transform ``sum_j exp(2 pi i x.k/N) f_j``.

    Targets are ``x = N (xhat + 1) / 2`` and sources ``k = N (1 - y / pi)``,
    both inside ``[0, N]^d``.  The source-only phase is folded into the
    returned charges; the returned per-target phase multiplies the transform
    output to give the far-field values.
    """
    N = fp.wave_number
    log2_exact(N)
    d = fp.directions.shape[1]
    x = 0.5 * N * (fp.directions + 1.0)
    k = N * (1.0 - fp.surface_points / np.pi)
    if np.any(k < 0) or np.any(k > N):
        raise ValueError("surface points must lie in [0, 1]^d")
    charges = fp.density * np.exp(-1j * np.pi * (k.sum(axis=1) % 2.0))
    target_phase = np.exp(-1j * np.pi * ((N * fp.directions.sum(axis=1)) % 2.0))
    targets = PointSet(d, N, np.clip(x, 0.0, N))
    sources = PointSet(d, N, k, charges)
    return targets, sources, target_phase


def farfield_direct(fp: FarFieldProblem) -> np.ndarray:
    """Direct summation of the far-field pattern."""
    phase = fp.directions @ fp.surface_points.T
    return np.exp(-1j * fp.wave_number * phase) @ fp.density


def write_pointset(ps: PointSet, path) -> None:
    has = ps.charges is not None
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{ps.dim} {ps.n_scale} {len(ps)} {int(has)}\n")
        for i in range(len(ps)):
            cols = [f"{v:.17g}" for v in ps.points[i]]
            if has:
                cols += [f"{ps.charges[i].real:.17g}", f"{ps.charges[i].imag:.17g}"]
            fh.write(" ".join(cols) + "\n")


def read_pointset(path) -> PointSet:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise ValueError(f"{path}: bad header")
        dim, N, count, has = (int(h) for h in header)
        data = np.loadtxt(fh, ndmin=2) if count else np.zeros((0, dim + 2 * has))
    if data.shape != (count, dim + 2 * has):
        raise ValueError(f"{path}: expected {count} rows of {dim + 2 * has} columns")
    charges = data[:, dim] + 1j * data[:, dim + 1] if has else None
    return PointSet(dim, N, data[:, :dim], charges)
