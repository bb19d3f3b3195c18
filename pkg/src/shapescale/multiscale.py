"""Multiscale shape transform: decompose a shape into per-scale surface
displacement details by tracking sampled points through a smoothing level set
flow, and reconstruct fine scales by advecting the level set function back
through the stored displacement fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .evolution import EvolutionSchedule, VelocityModel, advance_interval
from .grid import ScalarGrid, interpolate_many, normal_many, project_points, sample_surface
from .redistance import redistance_field

# Narrow band (in voxels) for displacement extension and advection.
BAND_VOXELS = 6.0
# Schedules producing per-level displacements beyond this bound are rejected;
# the band and the advection CFL budget assume it.
MAX_LEVEL_DISP_VOXELS = 3.0
# Advection CFL number for explicit upwind substeps.
CFL = 0.9


@dataclass
class DisplacementSet:
    """Per-scale displacement details W_i = X_i - X_{i-1} on the level-i surface.

    Arrays are indexed by the original sample index; entries of points that
    died before this level are zero and masked out by ``alive``. ``details``
    are signed magnitudes, positive where the displacement points outward.
    """

    base_points: np.ndarray  # (n, 3) X_i positions
    vectors: np.ndarray      # (n, 3) W_i
    details: np.ndarray      # (n,)
    alive: np.ndarray        # (n,) bool
    level: int
    t_start: float
    t_end: float

    def __post_init__(self):
        n = len(self.base_points)
        if not (len(self.vectors) == len(self.details) == len(self.alive) == n):
            raise ValueError("per-point arrays must have equal length")

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())


@dataclass
class MultiscaleRecord:
    """Discrete multiscale representation: per-level details plus the coarse field."""

    levels: list[DisplacementSet]
    coarse: ScalarGrid
    schedule: EvolutionSchedule
    model: VelocityModel

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def initial_points(self) -> tuple[np.ndarray, np.ndarray]:
        """(X_0 positions, level-1 alive mask) recovered from level 1."""
        l1 = self.levels[0]
        return l1.base_points - l1.vectors, l1.alive.copy()


def mst_decompose(phi0: ScalarGrid, model: VelocityModel, schedule: EvolutionSchedule,
                  target_spacing: float | None = None, vol_tol: float | None = None,
                  curvature_first: bool = True,
                  return_fields: bool = False):
    """Forward multiscale transform of a (redistanced) level set function.

    Samples X_0 from the zero set, then per level evolves the field one
    schedule node, projects the tracked points onto the new zero set, and
    records W_i = X_i - X_{i-1} with outward-positive detail scalars. Points
    whose projection fails are dropped from all later levels, never re-seeded,
    so the per-point telescoping identity stays exact.

    With ``return_fields`` the per-node fields [phi_0 .. phi_N] come back too.
    """
    h = phi0.spacing
    if model.uses_diffusion:
        schedule.check_mbo_floor(h, model.lam if model.lam > 0 else 1.0)
    max_disp = MAX_LEVEL_DISP_VOXELS * h

    sample = sample_surface(phi0, target_spacing)
    pts = sample.points.copy()
    alive = np.ones(len(pts), dtype=bool)

    levels: list[DisplacementSet] = []
    fields = [phi0]
    cur = phi0
    n = schedule.n_levels
    for i in range(1, n + 1):
        try:
            cur = advance_interval(cur, model, schedule, i, vol_tol, curvature_first)
        except Exception as exc:
            raise type(exc)(f"{exc} (decomposition level {i})") from None
        fields.append(cur)

        base = np.zeros_like(pts)
        vecs = np.zeros_like(pts)
        dets = np.zeros(len(pts))
        idx = np.nonzero(alive)[0]
        if len(idx) == 0:
            raise RuntimeError(f"all tracked points died before level {i}")
        proj, ok = project_points(cur, pts[idx])
        alive[idx[~ok]] = False
        idx = idx[ok]
        proj = proj[ok]

        w = proj - pts[idx]
        wmag = np.sqrt((w * w).sum(axis=1))
        far = wmag > max_disp
        if far.mean() > 0.2:
            raise ValueError(
                f"schedule rejected: level {i} moves {far.mean():.0%} of points "
                f"beyond {MAX_LEVEL_DISP_VOXELS:g} h = {max_disp:g}; use more/finer levels"
            )
        if far.any():
            # isolated jumps happen at topological events (merges); those
            # points die rather than aborting the decomposition
            alive[idx[far]] = False
            keep = ~far
            idx, proj, w = idx[keep], proj[keep], w[keep]
        normals, nok = normal_many(cur, proj)
        alive[idx[~nok]] = False
        idx = idx[nok]
        proj = proj[nok]
        w = w[nok]
        normals = normals[nok]

        pts[idx] = proj
        base[idx] = proj
        vecs[idx] = w
        mag = np.sqrt((w * w).sum(axis=1))
        dets[idx] = np.where((w * normals).sum(axis=1) >= 0.0, mag, -mag)

        t0, t1 = schedule.interval(i)
        levels.append(DisplacementSet(base, vecs, dets, alive.copy(), i, t0, t1))

    rec = MultiscaleRecord(levels, cur, schedule, model)
    if return_fields:
        return rec, fields
    return rec


def extend_displacements(d: DisplacementSet, phi: ScalarGrid,
                         band: float | None = None) -> np.ndarray:
    """Extend surface displacement vectors to a band around the zero set.

    Every voxel within ``band`` of the zero set takes the vector of its
    nearest alive base point (constant along normals up to sampling density);
    voxels outside the band get zero. Returns an (nx, ny, nz, 3) array.
    """
    if d.n_alive == 0:
        raise ValueError("empty displacement set: no alive base points")
    h = phi.spacing
    if band is None:
        band = BAND_VOXELS * h
    pts = d.base_points[d.alive]
    vecs = d.vectors[d.alive]
    out = np.zeros(phi.dims + (3,))
    mask = np.abs(phi.values) <= band
    if not mask.any():
        return out
    idx = np.argwhere(mask)
    coords = phi.voxel_centers(idx)
    tree = cKDTree(pts)
    _, nearest = tree.query(coords, k=1)
    out[mask] = vecs[nearest]
    return out


def _upwind_term(values: np.ndarray, w: np.ndarray, h: float) -> np.ndarray:
    """Sum over axes of W_a * D_a(psi) with one-sided differences picked by
    the sign of W_a. Face cells reuse the adjacent interior difference, which
    keeps the scheme exact on globally linear fields."""
    out = np.zeros_like(values)
    for a in range(3):
        sl_hi = [slice(None)] * 3
        sl_lo = [slice(None)] * 3
        sl_hi[a] = slice(1, None)
        sl_lo[a] = slice(None, -1)
        diff = (values[tuple(sl_hi)] - values[tuple(sl_lo)]) / h
        dm = np.empty_like(values)
        dp = np.empty_like(values)
        dm[tuple(sl_hi)] = diff
        edge = [slice(None)] * 3
        edge[a] = slice(0, 1)
        first = [slice(None)] * 3
        first[a] = slice(0, 1)
        dm[tuple(edge)] = diff[tuple(first)]
        dp[tuple(sl_lo)] = diff
        edge[a] = slice(-1, None)
        last = [slice(None)] * 3
        last[a] = slice(-1, None)
        dp[tuple(edge)] = diff[tuple(last)]
        wa = w[..., a]
        out += np.maximum(wa, 0.0) * dm + np.minimum(wa, 0.0) * dp
    return out


def imst_step(psi: ScalarGrid, wfield: np.ndarray, dtau: float) -> ScalarGrid:
    """One explicit upwind step of psi_tau + W . grad(psi) = 0.

    The zero set moves along +W. Requires the advective CFL
    dtau * max|W| / h <= 0.9; violations raise with a substepping hint.
    """
    wfield = np.asarray(wfield, dtype=np.float64)
    if wfield.shape != psi.dims + (3,):
        raise ValueError(f"velocity field shape {wfield.shape} does not match grid {psi.dims}")
    h = psi.spacing
    wmax = float(np.sqrt((wfield ** 2).sum(axis=-1)).max())
    if dtau * wmax / h > CFL * (1 + 1e-12):
        raise ValueError(
            f"CFL violated: dtau*max|W|/h = {dtau * wmax / h:g} > {CFL}; "
            "substep the advection"
        )
    return psi.like(psi.values - dtau * _upwind_term(psi.values, wfield, h))


def _lap_zero_flux(v: np.ndarray, h: float) -> np.ndarray:
    p = np.pad(v, 1, mode="edge")
    return (
        p[2:, 1:-1, 1:-1] + p[:-2, 1:-1, 1:-1]
        + p[1:-1, 2:, 1:-1] + p[1:-1, :-2, 1:-1]
        + p[1:-1, 1:-1, 2:] + p[1:-1, 1:-1, :-2]
        - 6.0 * v
    ) / (h * h)


def _advect_level(psi: ScalarGrid, wfield: np.ndarray, eps: float) -> ScalarGrid:
    """Advect for unit pseudo-time with velocity ``wfield`` plus eps * lap(psi).

    Substeps satisfy both the l1 upwind CFL and the explicit diffusion bound;
    with eps = 0 the arithmetic is identical to pure transport.
    """
    h = psi.spacing
    l1 = np.abs(wfield).sum(axis=-1).max() / h
    rate = float(l1 + 6.0 * eps / (h * h))
    n = max(1, int(np.ceil(rate / CFL - 1e-12)))
    dtau = 1.0 / n
    v = psi.values.copy()
    for _ in range(n):
        v = v - dtau * _upwind_term(v, wfield, h)
        if eps > 0.0:
            v += (dtau * eps) * _lap_zero_flux(v, h)
    return psi.like(v)


def _reconstruct(rec: MultiscaleRecord, down_to_level: int, eps: float) -> ScalarGrid:
    if not 0 <= down_to_level < rec.n_levels:
        raise ValueError(f"down_to_level must be in 0..{rec.n_levels - 1}")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    psi = rec.coarse
    for i in range(rec.n_levels, down_to_level, -1):
        d = rec.levels[i - 1]
        ext = extend_displacements(d, psi)
        # stored vectors point along the forward motion X_{i-1} -> X_i;
        # reconstruction transports the surface back, so advect along -W
        psi = _advect_level(psi, -ext, eps)
        psi = redistance_field(psi)
    return psi


def imst_reconstruct(rec: MultiscaleRecord, down_to_level: int = 0) -> ScalarGrid:
    """Inverse multiscale transform: rebuild the level ``down_to_level`` field.

    Starting from the coarse field, each stored level's displacements are
    extended to a band, advected for unit pseudo-time (the vectors encode the
    whole inter-level motion), and the field is redistanced.
    """
    return _reconstruct(rec, down_to_level, 0.0)


def imst_viscous(rec: MultiscaleRecord, down_to_level: int, eps: float) -> ScalarGrid:
    """Inverse transform with vanishing viscosity eps * lap(psi) per substep.

    eps = 0 reduces bitwise to imst_reconstruct; larger eps lets surrounding
    geometry flow into poorly constrained regions (used by inpainting).
    """
    return _reconstruct(rec, down_to_level, eps)
