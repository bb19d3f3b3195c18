"""Persistence: voxel field files (text header + raw little-endian payload)
and multiscale record files. Round trips are bit-exact."""

from __future__ import annotations

import json
import io

import numpy as np

from .evolution import EvolutionSchedule, VelocityKind, VelocityModel
from .grid import ScalarGrid
from .multiscale import DisplacementSet, MultiscaleRecord

GRID_MAGIC = "voxfield"
RECORD_MAGIC = "msrecord"
FORMAT_VERSION = 1

_DTYPES = {32: "<f4", 64: "<f8"}


class FormatError(ValueError):
    """Malformed or inconsistent on-disk data."""


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _encode_field(values: np.ndarray, spacing: float, origin: np.ndarray,
                  width: int = 64) -> bytes:
    """Header line of key=value pairs, then the raw payload.

    Payload scalars are little-endian, x-fastest; a 3-component field stores
    its components as consecutive x-fastest blocks.
    """
    if width not in _DTYPES:
        raise FormatError(f"scalar width must be 32 or 64, got {width}")
    if values.ndim == 3:
        components = 1
        payload = values.ravel(order="F")
    elif values.ndim == 4 and values.shape[3] == 3:
        components = 3
        payload = np.concatenate([values[..., c].ravel(order="F") for c in range(3)])
    else:
        raise FormatError(f"unsupported field shape {values.shape}")
    nx, ny, nz = values.shape[:3]
    header = (
        f"{GRID_MAGIC} version={FORMAT_VERSION} dims={nx},{ny},{nz} "
        f"spacing={_fmt_float(spacing)} "
        f"origin={_fmt_float(origin[0])},{_fmt_float(origin[1])},{_fmt_float(origin[2])} "
        f"components={components} width={width}\n"
    )
    return header.encode("ascii") + payload.astype(_DTYPES[width]).tobytes()


def _read_header_line(stream) -> str:
    raw = bytearray()
    while True:
        b = stream.read(1)
        if not b:
            raise FormatError("unexpected end of file while reading header")
        if b == b"\n":
            break
        raw.extend(b)
        if len(raw) > 4096:
            raise FormatError("header line too long; not a field file?")
    return raw.decode("ascii")


def _decode_field(stream) -> tuple[np.ndarray, float, np.ndarray]:
    header = _read_header_line(stream)
    parts = header.split()
    if not parts or parts[0] != GRID_MAGIC:
        raise FormatError(f"bad magic: expected {GRID_MAGIC!r}")
    kv = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise FormatError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    try:
        version = int(kv["version"])
        dims = tuple(int(x) for x in kv["dims"].split(","))
        spacing = float(kv["spacing"])
        origin = np.array([float(x) for x in kv["origin"].split(",")])
        components = int(kv["components"])
        width = int(kv["width"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed header: {exc}") from None
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown format version {version}")
    if len(dims) != 3 or components not in (1, 3) or width not in _DTYPES:
        raise FormatError(f"bad geometry header: dims={dims} components={components} width={width}")

    count = dims[0] * dims[1] * dims[2] * components
    expected = count * (width // 8)
    payload = stream.read(expected)
    if len(payload) != expected:
        raise FormatError(
            f"payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype=_DTYPES[width]).astype(np.float64)
    if not np.isfinite(flat).all():
        raise FormatError("payload contains non-finite values")
    if components == 1:
        values = flat.reshape(dims, order="F")
    else:
        per = dims[0] * dims[1] * dims[2]
        comps = [flat[c * per:(c + 1) * per].reshape(dims, order="F") for c in range(3)]
        values = np.stack(comps, axis=-1)
    return values, spacing, origin


def save_grid(path, grid: ScalarGrid, width: int = 64):
    """Write a scalar grid; bit-exact round trip at width 64."""
    with open(path, "wb") as f:
        f.write(_encode_field(grid.values, grid.spacing, grid.origin, width))


def load_grid(path) -> ScalarGrid:
    with open(path, "rb") as f:
        values, spacing, origin = _decode_field(f)
    if values.ndim != 3:
        raise FormatError("expected a 1-component field, found 3 components")
    return ScalarGrid(values, spacing, origin)


def save_vector_field(path, values: np.ndarray, spacing: float, origin,
                      width: int = 64):
    """Write an (nx, ny, nz, 3) field, e.g. an extended displacement field."""
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    with open(path, "wb") as f:
        f.write(_encode_field(np.asarray(values, dtype=np.float64), spacing, origin, width))


def load_vector_field(path) -> tuple[np.ndarray, float, np.ndarray]:
    with open(path, "rb") as f:
        values, spacing, origin = _decode_field(f)
    if values.ndim != 4:
        raise FormatError("expected a 3-component field, found 1 component")
    return values, spacing, origin


def _record_manifest(rec: MultiscaleRecord) -> dict:
    return {
        "version": FORMAT_VERSION,
        "model": {"kind": rec.model.kind.value, "c": rec.model.c, "lam": rec.model.lam},
        "schedule": {
            "t_nodes": [float(t) for t in rec.schedule.t_nodes],
            "dt": float(rec.schedule.dt),
            "viscosity_free": bool(rec.schedule.viscosity_free),
        },
        "levels": [
            {
                "level": ds.level,
                "t_start": ds.t_start,
                "t_end": ds.t_end,
                "count": int(len(ds.base_points)),
            }
            for ds in rec.levels
        ],
    }


def save_record(path, rec: MultiscaleRecord):
    """Write a multiscale record: manifest, per-level arrays, coarse field."""
    manifest = json.dumps(_record_manifest(rec), sort_keys=True).encode("ascii")
    with open(path, "wb") as f:
        f.write(f"{RECORD_MAGIC} version={FORMAT_VERSION} manifest={len(manifest)}\n".encode("ascii"))
        f.write(manifest)
        for ds in rec.levels:
            f.write(np.ascontiguousarray(ds.base_points, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(ds.vectors, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(ds.details, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(ds.alive, dtype=np.uint8).tobytes())
        f.write(_encode_field(rec.coarse.values, rec.coarse.spacing, rec.coarse.origin))


def load_record(path) -> MultiscaleRecord:
    with open(path, "rb") as f:
        header = _read_header_line(f)
        parts = header.split()
        if not parts or parts[0] != RECORD_MAGIC:
            raise FormatError(f"bad magic: expected {RECORD_MAGIC!r}")
        kv = dict(tok.split("=", 1) for tok in parts[1:] if "=" in tok)
        if int(kv.get("version", -1)) != FORMAT_VERSION:
            raise FormatError(f"unknown record version {kv.get('version')}")
        manifest = json.loads(f.read(int(kv["manifest"])).decode("ascii"))

        model = VelocityModel(
            VelocityKind(manifest["model"]["kind"]),
            c=float(manifest["model"]["c"]),
            lam=float(manifest["model"]["lam"]),
        )
        schedule = EvolutionSchedule(
            np.array(manifest["schedule"]["t_nodes"], dtype=np.float64),
            float(manifest["schedule"]["dt"]),
            bool(manifest["schedule"]["viscosity_free"]),
        )
        levels = []
        for entry in manifest["levels"]:
            n = int(entry["count"])

            def _arr(count, dtype, shape):
                nbytes = count * np.dtype(dtype).itemsize
                buf = f.read(nbytes)
                if len(buf) != nbytes:
                    raise FormatError("record truncated inside level arrays")
                return np.frombuffer(buf, dtype=dtype).reshape(shape).copy()

            base = _arr(3 * n, "<f8", (n, 3))
            vecs = _arr(3 * n, "<f8", (n, 3))
            dets = _arr(n, "<f8", (n,))
            alive = _arr(n, np.uint8, (n,)).astype(bool)
            levels.append(
                DisplacementSet(base, vecs, dets, alive, int(entry["level"]),
                                float(entry["t_start"]), float(entry["t_end"]))
            )
        values, spacing, origin = _decode_field(f)
        extra = f.read(1)
        if extra:
            raise FormatError("trailing bytes after record payload")
    coarse = ScalarGrid(values, spacing, origin)
    return MultiscaleRecord(levels, coarse, schedule, model)


def read_seed_points(path) -> np.ndarray:
    """Seed file: one `x y z` triple per line; blank lines and # comments ok."""
    pts = []
    with open(path, "r", encoding="ascii") as f:
        for ln, line in enumerate(f, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{ln}: expected 3 coordinates, got {len(parts)}")
            try:
                pts.append([float(x) for x in parts])
            except ValueError:
                raise FormatError(f"{path}:{ln}: non-numeric coordinate") from None
    if not pts:
        raise FormatError(f"{path}: no seed points found")
    return np.array(pts, dtype=np.float64)
