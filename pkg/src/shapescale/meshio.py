"""Triangle-mesh export of zero level sets for external inspection."""

from __future__ import annotations

import numpy as np

from .grid import ScalarGrid, SurfaceMissingError


def extract_mesh(grid: ScalarGrid) -> tuple[np.ndarray, np.ndarray]:
    """Marching-cubes triangulation of the zero set: (vertices, faces)."""
    from skimage import measure

    if not grid.has_interface():
        raise SurfaceMissingError("no surface to mesh: field does not change sign")
    h = grid.spacing
    verts, faces, _, _ = measure.marching_cubes(grid.values, level=0.0, spacing=(h, h, h))
    return verts + grid.origin, faces


def mesh_area(verts: np.ndarray, faces: np.ndarray) -> float:
    a = verts[faces[:, 1]] - verts[faces[:, 0]]
    b = verts[faces[:, 2]] - verts[faces[:, 0]]
    return float(0.5 * np.linalg.norm(np.cross(a, b), axis=1).sum())


def export_mesh(grid: ScalarGrid, path) -> tuple[int, int]:
    """Write the zero level set as a plain-text OBJ (vertex then face lines).

    Vertices come from edge interpolation, so they sit on the trilinear zero
    crossing; returns (vertex count, face count).
    """
    verts, faces = extract_mesh(grid)
    with open(path, "w", encoding="ascii") as f:
        for v in verts:
            f.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for tri in faces:
            f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")
    return len(verts), len(faces)


def load_obj(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back a v/f-only OBJ written by export_mesh."""
    verts, faces = [], []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x) - 1 for x in parts[1:4]])
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)
