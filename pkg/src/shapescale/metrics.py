"""Measurement kit: Hausdorff distance between implicit surfaces, enclosed
volume, surface area, connected components, detail histograms."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .grid import (
    DELTA_WIDTH_VOXELS,
    ScalarGrid,
    SurfaceMissingError,
    interpolate_many,
    sample_surface,
    smeared_delta,
    smeared_heaviside,
)


def volume(grid: ScalarGrid) -> float:
    """Enclosed volume h^3 * sum H(-phi) with the smeared Heaviside."""
    w = DELTA_WIDTH_VOXELS * grid.spacing
    return float(grid.spacing ** 3 * smeared_heaviside(-grid.values, w).sum())


def area(grid: ScalarGrid) -> float:
    """Surface area h^3 * sum delta(phi) |grad phi|."""
    h = grid.spacing
    w = DELTA_WIDTH_VOXELS * h
    gx, gy, gz = np.gradient(grid.values, h)
    gmag = np.sqrt(gx * gx + gy * gy + gz * gz)
    return float(h ** 3 * (smeared_delta(grid.values, w) * gmag).sum())


def isoperimetric_ratio(grid: ScalarGrid) -> float:
    """area^3 / volume^2; equals 36 pi for a ball."""
    return area(grid) ** 3 / volume(grid) ** 2


def voxel_volume(grid: ScalarGrid) -> float:
    """Binary voxel-count volume of {phi < 0} (what VP-MCM conserves)."""
    return float((grid.values < 0).sum()) * grid.spacing ** 3


def connected_components(grid: ScalarGrid) -> int:
    """Number of 6-connected components of the inside region."""
    _, n = ndimage.label(grid.values < 0)
    return int(n)


def _mask_at(points: np.ndarray, mask: np.ndarray, origin: np.ndarray, h: float) -> np.ndarray:
    idx = np.rint((points - origin) / h).astype(np.int64)
    idx = np.clip(idx, 0, np.array(mask.shape) - 1)
    return mask[idx[:, 0], idx[:, 1], idx[:, 2]]


def _directed(points: np.ndarray, other: ScalarGrid) -> float:
    return float(np.abs(interpolate_many(other, points)).max())


def hausdorff(a: ScalarGrid, b: ScalarGrid, sample_spacing: float | None = None,
              restrict: np.ndarray | None = None) -> float:
    """Symmetric Hausdorff distance between the zero level sets of a and b.

    Estimated by sampling each surface densely and evaluating the other
    field's signed distance at the samples (both fields should be
    redistanced). ``restrict`` optionally limits the comparison to surface
    samples whose nearest voxel is True in the given mask.
    """
    sa = sample_surface(a, sample_spacing)
    sb = sample_surface(b, sample_spacing)
    pa, pb = sa.points, sb.points
    if restrict is not None:
        pa = pa[_mask_at(pa, restrict, a.origin, a.spacing)]
        pb = pb[_mask_at(pb, restrict, b.origin, b.spacing)]
        if len(pa) == 0 and len(pb) == 0:
            return 0.0
    d_ab = _directed(pa, b) if len(pa) else 0.0
    d_ba = _directed(pb, a) if len(pb) else 0.0
    return max(d_ab, d_ba)


def detail_histogram(record, level: int, bins: int = 21) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of signed details w at one level over alive points.

    Symmetric range [-max|w|, +max|w|]; returns (bin_edges, counts).
    """
    if not 1 <= level <= len(record.levels):
        raise ValueError(f"level {level} out of range 1..{len(record.levels)}")
    ds = record.levels[level - 1]
    w = ds.details[ds.alive]
    if len(w) == 0:
        raise ValueError(f"level {level} has no alive points")
    m = float(np.abs(w).max())
    if m == 0.0:
        m = 1e-12
    counts, edges = np.histogram(w, bins=bins, range=(-m, m))
    return edges, counts


def center_bin_fraction(record, level: int, rel_cut: float = 0.1) -> float:
    """Fraction of alive details with |w| below rel_cut * max|w| at the level."""
    ds = record.levels[level - 1]
    w = np.abs(ds.details[ds.alive])
    if len(w) == 0:
        raise ValueError(f"level {level} has no alive points")
    m = w.max()
    if m == 0.0:
        return 1.0
    return float((w < rel_cut * m).mean())


def histogram_table(edges: np.ndarray, counts: np.ndarray) -> str:
    """Plain tabular text (bin_center, count per line) for external plotting."""
    centers = 0.5 * (edges[:-1] + edges[1:])
    return "\n".join(f"{c:.9g} {int(n)}" for c, n in zip(centers, counts))
