"""Analytic and procedural test shapes: primitives with exact signed
distances, and tubular vessel phantoms with optional chop / stenosis damage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ScalarGrid
from .redistance import redistance_field

# Shapes must keep this margin (in voxels) to the domain boundary so stencils
# and the zero-flux diffusion stay clean.
DOMAIN_MARGIN_VOXELS = 4


def _check_margin(grid: ScalarGrid, what: str):
    m = DOMAIN_MARGIN_VOXELS
    v = grid.values
    shell = np.ones(v.shape, dtype=bool)
    shell[m:-m, m:-m, m:-m] = False
    if (v[shell] < 0).any():
        raise ValueError(f"{what} exceeds the {m}-voxel domain margin")


def _grid_coords(dims, spacing, origin):
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    axes = [origin[a] + spacing * np.arange(dims[a]) for a in range(3)]
    return np.meshgrid(*axes, indexing="ij")


def make_sphere(dims, spacing, center, radius, origin=(0.0, 0.0, 0.0)) -> ScalarGrid:
    x, y, z = _grid_coords(dims, spacing, origin)
    c = np.asarray(center, dtype=np.float64)
    v = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2) - radius
    g = ScalarGrid(v, spacing, origin)
    _check_margin(g, "sphere")
    return g


def make_cube(dims, spacing, center, side, origin=(0.0, 0.0, 0.0)) -> ScalarGrid:
    """Exact SDF of an axis-aligned cube."""
    x, y, z = _grid_coords(dims, spacing, origin)
    c = np.asarray(center, dtype=np.float64)
    half = side / 2.0
    qx = np.abs(x - c[0]) - half
    qy = np.abs(y - c[1]) - half
    qz = np.abs(z - c[2]) - half
    outside = np.sqrt(
        np.maximum(qx, 0.0) ** 2 + np.maximum(qy, 0.0) ** 2 + np.maximum(qz, 0.0) ** 2
    )
    inside = np.minimum(np.maximum(qx, np.maximum(qy, qz)), 0.0)
    g = ScalarGrid(outside + inside, spacing, origin)
    _check_margin(g, "cube")
    return g


def make_torus(dims, spacing, center, ring_radius, tube_radius,
               origin=(0.0, 0.0, 0.0)) -> ScalarGrid:
    """Exact SDF of a torus around the z axis through ``center``."""
    x, y, z = _grid_coords(dims, spacing, origin)
    c = np.asarray(center, dtype=np.float64)
    q = np.sqrt((x - c[0]) ** 2 + (y - c[1]) ** 2) - ring_radius
    v = np.sqrt(q * q + (z - c[2]) ** 2) - tube_radius
    g = ScalarGrid(v, spacing, origin)
    _check_margin(g, "torus")
    return g


def make_bumpy_sphere(dims, spacing, center, radius, amp=0.12, freq=6,
                      origin=(0.0, 0.0, 0.0)) -> ScalarGrid:
    """Sphere with angular radius modulation R(1 + amp cos(k theta) sin(k az)).

    The implicit field is redistanced into an SDF; amp <= 0.2 keeps the
    surface star-shaped and resolvable.
    """
    if amp > 0.2:
        raise ValueError("bump amplitude must be <= 0.2")
    x, y, z = _grid_coords(dims, spacing, origin)
    c = np.asarray(center, dtype=np.float64)
    dx, dy, dz = x - c[0], y - c[1], z - c[2]
    rho = np.sqrt(dx * dx + dy * dy + dz * dz)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(np.clip(np.where(rho > 0, dz / np.where(rho > 0, rho, 1.0), 1.0), -1, 1))
    az = np.arctan2(dy, dx)
    rloc = radius * (1.0 + amp * np.cos(freq * theta) * np.sin(freq * az))
    g = ScalarGrid(rho - rloc, spacing, origin)
    _check_margin(g, "bumpy sphere")
    return redistance_field(g, band=None)


_PRIMITIVES = {"sphere", "cube", "torus", "bumpy_sphere"}


def make_primitive(kind: str, dims, spacing, origin=(0.0, 0.0, 0.0), **params) -> ScalarGrid:
    """Dispatch by name; see the make_* functions for parameters."""
    if kind == "sphere":
        return make_sphere(dims, spacing, origin=origin, **params)
    if kind == "cube":
        return make_cube(dims, spacing, origin=origin, **params)
    if kind == "torus":
        return make_torus(dims, spacing, origin=origin, **params)
    if kind == "bumpy_sphere":
        return make_bumpy_sphere(dims, spacing, origin=origin, **params)
    raise ValueError(f"unknown primitive {kind!r}, expected one of {sorted(_PRIMITIVES)}")


@dataclass
class VesselSpec:
    """Tube phantom: polyline centerline, per-vertex radii, optional damage.

    chop: (s0, s1) arclength interval whose inside voxels are removed.
    stenosis: (s0, s1, factor) interval narrowed to factor * radius,
    blended over 2h at the ends.
    """

    centerline: np.ndarray
    radius_profile: np.ndarray
    chop: tuple[float, float] | None = None
    stenosis: tuple[float, float, float] | None = None

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=np.float64).reshape(-1, 3)
        self.radius_profile = np.asarray(self.radius_profile, dtype=np.float64).reshape(-1)
        if len(self.centerline) < 2:
            raise ValueError("centerline needs at least 2 vertices")
        if len(self.radius_profile) != len(self.centerline):
            raise ValueError("radius profile length must match the centerline")
        if (self.radius_profile <= 0).any():
            raise ValueError("radii must be positive")
        if self.chop is not None and self.stenosis is not None:
            raise ValueError("choose one damage kind: chop or stenosis")
        if self.stenosis is not None and not 0.0 < self.stenosis[2] < 1.0:
            raise ValueError("stenosis narrowing factor must be in (0, 1)")

    def arclengths(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.centerline, axis=0), axis=1)
        return np.concatenate(([0.0], np.cumsum(seg)))

    def total_length(self) -> float:
        return float(self.arclengths()[-1])


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def centerline_field(spec: VesselSpec, grid_like: ScalarGrid):
    """Per-voxel distance to the centerline, nearest arclength and radius."""
    x, y, z = grid_like.meshgrid()
    pts = np.stack([x, y, z], axis=-1)
    arcs = spec.arclengths()
    best_d2 = np.full(grid_like.dims, np.inf)
    best_s = np.zeros(grid_like.dims)
    best_r = np.zeros(grid_like.dims)
    for p0, p1, r0, r1, s0 in zip(
        spec.centerline[:-1], spec.centerline[1:],
        spec.radius_profile[:-1], spec.radius_profile[1:], arcs[:-1]
    ):
        seg = p1 - p0
        L2 = float(seg @ seg)
        if L2 == 0.0:
            continue
        t = np.clip(((pts - p0) @ seg) / L2, 0.0, 1.0)
        q = p0 + t[..., None] * seg
        d2 = ((pts - q) ** 2).sum(axis=-1)
        better = d2 < best_d2
        best_d2[better] = d2[better]
        best_s[better] = (s0 + t * np.sqrt(L2))[better]
        best_r[better] = (r0 + t * (r1 - r0))[better]
    return np.sqrt(best_d2), best_s, best_r


def make_vessel(spec: VesselSpec, dims, spacing, origin=(0.0, 0.0, 0.0)) -> ScalarGrid:
    """Tube field distance-to-centerline minus radius, redistanced.

    Chop damage flips inside voxels whose nearest arclength lies in the chop
    interval to outside; stenosis damage scales the local radius.
    """
    h = float(spacing)
    if (spec.radius_profile < 2 * h).any():
        raise ValueError("vessel radii must be >= 2h for the grid to resolve the tube")
    total = spec.total_length()
    for iv in (spec.chop, spec.stenosis):
        if iv is not None and not (0.0 <= iv[0] <= iv[1] <= total):
            raise ValueError(f"damage interval {iv[:2]} outside [0, {total:g}]")

    shell = ScalarGrid(np.ones(tuple(dims)), spacing, origin)
    dist, arc, rad = centerline_field(spec, shell)

    if spec.stenosis is not None and spec.stenosis[1] > spec.stenosis[0]:
        s0, s1, f = spec.stenosis
        ramp_in = _smoothstep((arc - s0) / (2 * h))
        ramp_out = _smoothstep((s1 - arc) / (2 * h))
        w = np.minimum(ramp_in, ramp_out)
        rad = rad * (1.0 - (1.0 - f) * w)

    v = dist - rad
    if spec.chop is not None and spec.chop[1] > spec.chop[0]:
        s0, s1 = spec.chop
        cut = (v < 0) & (arc >= s0) & (arc <= s1)
        v = np.where(cut, 0.5 * h, v)

    g = ScalarGrid(v, spacing, origin)
    _check_margin(g, "vessel")
    return redistance_field(g)
