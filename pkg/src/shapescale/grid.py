"""Voxel-grid scalar fields and the differential-geometry queries everything
else computes on: trilinear sampling, normals, mean curvature, zero-set
sampling and closest-point projection.

Conventions: fields are indexed ``values[i, j, k]`` for (x, y, z), spacing is
uniform, and level set functions are negative inside the shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Width of the smeared delta / Heaviside used for surface quadrature (voxels).
DELTA_WIDTH_VOXELS = 1.5
# Gradient magnitudes below GRAD_FLOOR_COEF / h are degenerate (signed-distance
# ridges have vanishing gradients); operations flag instead of dividing.
GRAD_FLOOR_COEF = 1e-6
# Closest-point projection: |phi| <= PROJ_TOL_COEF * h counts as on-surface.
PROJ_TOL_COEF = 1e-3
PROJ_MAX_ITER = 20
# The grid cannot represent curvature radii below h/2.
CURV_CLAMP_COEF = 2.0


class SurfaceMissingError(RuntimeError):
    """The operation needs a zero level set and the field has none."""


class DegenerateGradientError(RuntimeError):
    """The gradient magnitude fell below the degeneracy floor."""


@dataclass
class ScalarGrid:
    """Axis-aligned voxel grid of float64 samples.

    values : (nx, ny, nz) array, finite
    spacing : voxel edge length, identical along all axes
    origin : world position of sample [0, 0, 0]
    """

    values: np.ndarray
    spacing: float
    origin: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3).copy()
        self.spacing = float(self.spacing)
        if self.values.ndim != 3:
            raise ValueError(f"expected a 3D value array, got shape {self.values.shape}")
        if min(self.values.shape) < 4:
            raise ValueError(f"grid needs >= 4 samples per axis, got {self.values.shape}")
        if not self.spacing > 0.0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.isfinite(self.values).all():
            raise ValueError("grid contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def h(self) -> float:
        return self.spacing

    def like(self, values: np.ndarray) -> "ScalarGrid":
        """New grid with the same geometry and the given values."""
        return ScalarGrid(values, self.spacing, self.origin)

    def copy(self) -> "ScalarGrid":
        return ScalarGrid(self.values.copy(), self.spacing, self.origin)

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.dims[axis])

    def meshgrid(self):
        """World-coordinate arrays X, Y, Z, each shaped like values."""
        return np.meshgrid(*(self.axis_coords(a) for a in range(3)), indexing="ij")

    def voxel_centers(self, index_array: np.ndarray) -> np.ndarray:
        """World positions of integer voxel indices, shape (n, 3)."""
        return self.origin + self.spacing * np.asarray(index_array, dtype=np.float64)

    def same_geometry(self, other: "ScalarGrid") -> bool:
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.origin, other.origin)
        )

    def has_interface(self) -> bool:
        v = self.values
        return bool((v < 0).any() and (v >= 0).any())


@dataclass
class SurfaceSample:
    """Ordered point set on a zero level set with unit normals.

    ``alive`` marks points whose closest-point projection succeeded; dead
    points are retained positionally so indices stay stable across levels.
    """

    points: np.ndarray   # (n, 3)
    normals: np.ndarray  # (n, 3) unit vectors for alive points
    alive: np.ndarray    # (n,) bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.alive = np.asarray(self.alive, dtype=bool).reshape(-1)
        n = len(self.points)
        if len(self.normals) != n or len(self.alive) != n:
            raise ValueError("points, normals and alive must have equal length")

    def __len__(self):
        return len(self.points)


def smeared_heaviside(values: np.ndarray, width: float) -> np.ndarray:
    """C^1 Heaviside ramp of half-width ``width``; derivative is smeared_delta."""
    s = np.clip(values / width, -1.0, 1.0)
    return 0.5 * (1.0 + s + np.sin(np.pi * s) / np.pi)


def smeared_delta(values: np.ndarray, width: float) -> np.ndarray:
    """Cosine bump delta: (1 + cos(pi v / w)) / (2w) inside |v| < w, else 0."""
    out = np.zeros_like(values)
    m = np.abs(values) < width
    out[m] = (1.0 + np.cos(np.pi * values[m] / width)) / (2.0 * width)
    return out


def _as_points(p) -> np.ndarray:
    pts = np.asarray(p, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 3)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected points of shape (n, 3), got {pts.shape}")
    return pts


def _index_coords(grid: ScalarGrid, pts: np.ndarray) -> np.ndarray:
    return (pts - grid.origin) / grid.spacing


def in_safe_box(grid: ScalarGrid, pts: np.ndarray, margin_cells: int = 1) -> np.ndarray:
    """True where a point sits inside the bounding box shrunk by margin cells."""
    q = _index_coords(grid, pts)
    lo = float(margin_cells)
    hi = np.array(grid.dims, dtype=np.float64) - 1.0 - margin_cells
    return np.all((q >= lo) & (q <= hi), axis=1)


def _check_in_safe_box(grid: ScalarGrid, pts: np.ndarray, margin_cells: int = 1):
    q = _index_coords(grid, pts)
    hi = np.array(grid.dims, dtype=np.float64) - 1.0 - margin_cells
    bad = (q < margin_cells) | (q > hi)
    if bad.any():
        i, a = np.argwhere(bad)[0]
        raise ValueError(
            f"point {pts[i]} outside safe interpolation box: coordinate "
            f"{'xyz'[a]}={pts[i, a]:g} not within "
            f"[{grid.origin[a] + margin_cells * grid.spacing:g}, "
            f"{grid.origin[a] + hi[a] * grid.spacing:g}]"
        )


def _trilinear(grid: ScalarGrid, pts: np.ndarray) -> np.ndarray:
    q = _index_coords(grid, pts)
    lo = np.floor(q).astype(np.int64)
    # keep the 8-corner stencil in range when q sits exactly on the top face
    lo = np.minimum(lo, np.array(grid.dims) - 2)
    lo = np.maximum(lo, 0)
    f = q - lo
    i, j, k = lo[:, 0], lo[:, 1], lo[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    v = grid.values
    c00 = v[i, j, k] * (1 - fx) + v[i + 1, j, k] * fx
    c10 = v[i, j + 1, k] * (1 - fx) + v[i + 1, j + 1, k] * fx
    c01 = v[i, j, k + 1] * (1 - fx) + v[i + 1, j, k + 1] * fx
    c11 = v[i, j + 1, k + 1] * (1 - fx) + v[i + 1, j + 1, k + 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def interpolate_many(grid: ScalarGrid, pts) -> np.ndarray:
    """Trilinear interpolation at an (n, 3) batch of points.

    Every point must lie inside the grid bounding box shrunk by one cell.
    """
    pts = _as_points(pts)
    _check_in_safe_box(grid, pts, 1)
    return _trilinear(grid, pts)


def interpolate(grid: ScalarGrid, p) -> float:
    """Trilinear interpolation at one point; exact on fields linear in x,y,z."""
    return float(interpolate_many(grid, p)[0])


def gradient_many(grid: ScalarGrid, pts) -> np.ndarray:
    """Field gradient at points, by interpolated central differences.

    Points must keep a 2-cell margin so the +-h stencil stays in bounds.
    """
    pts = _as_points(pts)
    _check_in_safe_box(grid, pts, 2)
    h = grid.spacing
    g = np.empty_like(pts)
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        g[:, a] = (_trilinear(grid, pts + e) - _trilinear(grid, pts - e)) / (2.0 * h)
    return g


def normal_many(grid: ScalarGrid, pts) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals at points plus an ok-mask (False where degenerate)."""
    g = gradient_many(grid, pts)
    mag = np.sqrt((g * g).sum(axis=1))
    ok = mag >= GRAD_FLOOR_COEF / grid.spacing
    n = np.zeros_like(g)
    n[ok] = g[ok] / mag[ok, None]
    return n, ok


def normal_at(grid: ScalarGrid, p) -> np.ndarray:
    """Outward unit normal grad(phi)/|grad(phi)| at one point.

    Raises DegenerateGradientError below the gradient floor; callers tracking
    surface points mark such points not alive instead.
    """
    n, ok = normal_many(grid, p)
    if not ok[0]:
        raise DegenerateGradientError(
            f"gradient magnitude below {GRAD_FLOOR_COEF:g}/h at point {np.asarray(p)}"
        )
    return n[0]


def _pad_edge(v: np.ndarray) -> np.ndarray:
    return np.pad(v, 1, mode="edge")


def mean_curvature(grid: ScalarGrid) -> tuple[ScalarGrid, np.ndarray]:
    """Mean curvature field div(grad phi / |grad phi|) and a validity mask.

    The curvature is the sum of principal curvatures (2/R on a sphere of
    radius R). Values are clamped to +-2/h; the mask is False outside the
    3h band around the zero set, at degenerate-gradient cells and wherever
    the clamp fired.
    """
    h = grid.spacing
    v = grid.values
    p = _pad_edge(v)
    c = (slice(1, -1),)
    ax = {0: (slice(2, None), slice(1, -1), slice(1, -1)),
          1: (slice(1, -1), slice(2, None), slice(1, -1)),
          2: (slice(1, -1), slice(1, -1), slice(2, None))}
    bx = {0: (slice(None, -2), slice(1, -1), slice(1, -1)),
          1: (slice(1, -1), slice(None, -2), slice(1, -1)),
          2: (slice(1, -1), slice(1, -1), slice(None, -2))}
    d1 = [(p[ax[a]] - p[bx[a]]) / (2 * h) for a in range(3)]
    d2 = [(p[ax[a]] - 2 * v + p[bx[a]]) / (h * h) for a in range(3)]

    def mixed(a, b):
        sl_pp = [c[0]] * 3
        sl_pm = [c[0]] * 3
        sl_mp = [c[0]] * 3
        sl_mm = [c[0]] * 3
        sl_pp[a] = slice(2, None); sl_pp[b] = slice(2, None)
        sl_pm[a] = slice(2, None); sl_pm[b] = slice(None, -2)
        sl_mp[a] = slice(None, -2); sl_mp[b] = slice(2, None)
        sl_mm[a] = slice(None, -2); sl_mm[b] = slice(None, -2)
        return (p[tuple(sl_pp)] - p[tuple(sl_pm)] - p[tuple(sl_mp)] + p[tuple(sl_mm)]) / (4 * h * h)

    dxy, dxz, dyz = mixed(0, 1), mixed(0, 2), mixed(1, 2)
    gx, gy, gz = d1
    g2 = gx * gx + gy * gy + gz * gz
    gmag = np.sqrt(g2)
    floor = GRAD_FLOOR_COEF / h
    degenerate = gmag < floor

    num = (
        d2[0] * (gy * gy + gz * gz)
        + d2[1] * (gx * gx + gz * gz)
        + d2[2] * (gx * gx + gy * gy)
        - 2.0 * (gx * gy * dxy + gx * gz * dxz + gy * gz * dyz)
    )
    den = np.where(degenerate, 1.0, g2 * gmag)
    kappa = np.where(degenerate, 0.0, num / den)

    clamp = CURV_CLAMP_COEF / h
    clamped = np.abs(kappa) > clamp
    kappa = np.clip(kappa, -clamp, clamp)

    band = np.abs(v) <= 3.0 * h
    valid = band & ~degenerate & ~clamped
    return grid.like(kappa), valid


def average_mean_curvature(grid: ScalarGrid) -> float:
    """Area-weighted mean of the curvature over the zero level set.

    Discretized as sum(delta_h(phi) |grad phi| kappa) / sum(delta_h(phi)
    |grad phi|) over band voxels.
    """
    h = grid.spacing
    w = DELTA_WIDTH_VOXELS * h
    delta = smeared_delta(grid.values, w)
    if not (delta > 0).any():
        raise SurfaceMissingError("no surface: empty zero level set")
    gx, gy, gz = np.gradient(grid.values, h)
    gmag = np.sqrt(gx * gx + gy * gy + gz * gz)
    kappa, _ = mean_curvature(grid)
    weights = delta * gmag
    return float((weights * kappa.values).sum() / weights.sum())


def project_points(grid: ScalarGrid, pts) -> tuple[np.ndarray, np.ndarray]:
    """Project points onto the zero level set; returns (points, alive).

    Iterates p <- p - phi(p) * grad/|grad| until |phi| <= tol_proj or the
    iteration budget runs out. Points that leave the grid or hit a degenerate
    gradient come back with alive=False and are left wherever they stopped.
    """
    pts = _as_points(pts).copy()
    n = len(pts)
    alive = np.ones(n, dtype=bool)
    done = np.zeros(n, dtype=bool)
    tol = PROJ_TOL_COEF * grid.spacing
    floor = GRAD_FLOOR_COEF / grid.spacing
    h = grid.spacing

    for _ in range(PROJ_MAX_ITER):
        act = alive & ~done
        if not act.any():
            break
        idx = np.nonzero(act)[0]
        p = pts[idx]
        inb = in_safe_box(grid, p, 2)
        if not inb.all():
            alive[idx[~inb]] = False
            idx = idx[inb]
            p = p[inb]
            if len(idx) == 0:
                continue
        phi = _trilinear(grid, p)
        hit = np.abs(phi) <= tol
        done[idx[hit]] = True
        mov = ~hit
        if not mov.any():
            continue
        idx = idx[mov]
        p = p[mov]
        phi = phi[mov]
        g = np.empty_like(p)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            g[:, a] = (_trilinear(grid, p + e) - _trilinear(grid, p - e)) / (2 * h)
        mag = np.sqrt((g * g).sum(axis=1))
        dead = mag < floor
        alive[idx[dead]] = False
        ok = ~dead
        pts[idx[ok]] = p[ok] - (phi[ok] / mag[ok])[:, None] * g[ok]

    # success means the point actually landed on the surface
    alive &= done
    return pts, alive


def project_to_zero(grid: ScalarGrid, p) -> tuple[np.ndarray, bool]:
    """Single-point closest-point projection; returns (point, alive)."""
    pts, alive = project_points(grid, p)
    return pts[0], bool(alive[0])


def _mc_vertices(grid: ScalarGrid) -> np.ndarray:
    from skimage import measure

    if not grid.has_interface():
        raise SurfaceMissingError("no surface: field does not change sign")
    h = grid.spacing
    verts, _faces, _norms, _vals = measure.marching_cubes(
        grid.values, level=0.0, spacing=(h, h, h)
    )
    return verts + grid.origin


def _dedup_to_lattice(grid: ScalarGrid, verts: np.ndarray, pitch_cells: int) -> np.ndarray:
    """Keep one vertex per coarse lattice cell, the one nearest the cell node.

    The winner rule depends only on distances to lattice nodes, so the kept
    set is exactly equivariant under whole-voxel translations and
    90-degree grid rotations of the shape.
    """
    pitch = pitch_cells * grid.spacing
    q = (verts - grid.origin) / pitch
    key = np.rint(q).astype(np.int64)
    centers = grid.origin + key * pitch
    d2 = ((verts - centers) ** 2).sum(axis=1)
    order = np.lexsort(
        (verts[:, 2], verts[:, 1], verts[:, 0], d2, key[:, 2], key[:, 1], key[:, 0])
    )
    ks = key[order]
    first = np.empty(len(ks), dtype=bool)
    first[0] = True
    first[1:] = (np.diff(ks, axis=0) != 0).any(axis=1)
    return verts[order[first]]


def sample_surface(grid: ScalarGrid, target_spacing: float | None = None) -> SurfaceSample:
    """Sample the zero level set at roughly ``target_spacing`` point pitch.

    Marching-cubes vertices are deduplicated to one per target-spacing
    lattice cell, projected onto the zero set, and returned with outward
    normals. All returned points are alive.
    """
    h = grid.spacing
    if target_spacing is None:
        target_spacing = h
    if target_spacing <= 0:
        raise ValueError("target_spacing must be positive")
    pitch_cells = max(1, int(round(target_spacing / h)))
    verts = _mc_vertices(grid)
    cand = _dedup_to_lattice(grid, verts, pitch_cells)
    pts, alive = project_points(grid, cand)
    pts = pts[alive]
    if len(pts) == 0:
        raise SurfaceMissingError("no surface: all candidate points failed projection")
    normals, ok = normal_many(grid, pts)
    pts = pts[ok]
    normals = normals[ok]
    return SurfaceSample(pts, normals, np.ones(len(pts), dtype=bool))
