"""Result-bundle file formats: binary field dumps, CSV tables, JSON reports.

Everything written here is deterministic: no timestamps, sorted JSON keys,
shortest-round-trip float text. Re-running a scenario with the same seed must
reproduce every file byte for byte, which is what the manifest checksums
verify.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict

import numpy as np

from .core import DEFAULT_UNITS, Grid1D, Grid2D, Trajectory, UnitSystem, WaveField
from .errors import CorruptHeader, MissingArtifact, TruncatedPayload

FIELD_SUFFIX = ".field"
SIDECAR_SUFFIX = ".field.json"


def _fmt(x) -> str:
    """Shortest decimal text that round-trips the float64 exactly."""
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def read_json(path):
    if not os.path.exists(path):
        raise MissingArtifact(f"missing file {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_field(path_base: str, f: WaveField, units: UnitSystem = DEFAULT_UNITS) -> None:
    """Dump a field as `<base>.field` (payload) plus `<base>.field.json`.

    Payload: row-major little-endian float64 (re, im) pairs. The sidecar
    carries grid extent and time in SI so the dump is self-describing.
    """
    header = {
        "format": "pilotwave-field-v1",
        "dim": 1 if f.is_1d else 2,
        "nx": f.grid.n if f.is_1d else f.grid.x.n,
        "t_s": units.to_si(f.t, "time"),
        "length_unit_m": units.length_unit,
        "time_unit_s": units.time_unit,
    }
    if f.is_1d:
        header["x_min_m"] = units.to_si(f.grid.x_min, "length")
        header["x_max_m"] = units.to_si(f.grid.x_max, "length")
    else:
        header["ny"] = f.grid.y.n
        header["x_min_m"] = units.to_si(f.grid.x.x_min, "length")
        header["x_max_m"] = units.to_si(f.grid.x.x_max, "length")
        header["y_min_m"] = units.to_si(f.grid.y.x_min, "length")
        header["y_max_m"] = units.to_si(f.grid.y.x_max, "length")
    payload = np.ascontiguousarray(f.values, dtype="<c16").tobytes()
    header["payload_bytes"] = len(payload)
    with open(path_base + FIELD_SUFFIX, "wb") as fh:
        fh.write(payload)
    write_json(path_base + SIDECAR_SUFFIX, header)


def read_field(path_base: str, units: UnitSystem = DEFAULT_UNITS) -> WaveField:
    sidecar = path_base + SIDECAR_SUFFIX
    payload_path = path_base + FIELD_SUFFIX
    if not os.path.exists(sidecar):
        raise MissingArtifact(f"missing sidecar {sidecar}")
    if not os.path.exists(payload_path):
        raise MissingArtifact(f"missing payload {payload_path}")
    try:
        header = read_json(sidecar)
    except json.JSONDecodeError as exc:
        raise CorruptHeader(f"unparseable sidecar {sidecar}: {exc}") from None
    try:
        dim = int(header["dim"])
        nx = int(header["nx"])
        t = units.to_scaled(float(header["t_s"]), "time")
        x_min = units.to_scaled(float(header["x_min_m"]), "length")
        x_max = units.to_scaled(float(header["x_max_m"]), "length")
        if dim == 2:
            ny = int(header["ny"])
            y_min = units.to_scaled(float(header["y_min_m"]), "length")
            y_max = units.to_scaled(float(header["y_max_m"]), "length")
        declared = int(header["payload_bytes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeader(f"sidecar {sidecar} missing or mangles a field: {exc}") from None
    if dim not in (1, 2):
        raise CorruptHeader(f"sidecar {sidecar} declares dim={dim}")
    count = nx if dim == 1 else nx * ny
    expected = 16 * count
    if declared != expected:
        raise CorruptHeader(
            f"sidecar {sidecar} declares {declared} payload bytes, dims imply {expected}")
    with open(payload_path, "rb") as fh:
        data = fh.read()
    if len(data) < expected:
        raise TruncatedPayload(
            f"{payload_path} holds {len(data)} bytes, header promises {expected}")
    if len(data) > expected:
        raise CorruptHeader(f"{payload_path} has {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype="<c16").astype(np.complex128)
    if dim == 1:
        grid = Grid1D(nx, x_min, x_max)
        return WaveField(grid, values, t)
    grid = Grid2D(Grid1D(nx, x_min, x_max), Grid1D(ny, y_min, y_max))
    return WaveField(grid, values.reshape(nx, ny), t)


def write_trajectory(path: str, traj: Trajectory, units: UnitSystem = DEFAULT_UNITS) -> None:
    """Delimited trajectory table in SI, one row per step."""
    cols = ["step", "t_s", "x_m"] + (["y_m"] if traj.dim == 2 else [])
    lines = [",".join(cols)]
    for k, (t, p) in enumerate(zip(traj.times, traj.points)):
        row = [str(k), _fmt(units.to_si(t, "time"))]
        row += [_fmt(units.to_si(c, "length")) for c in p]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trajectory(path: str, units: UnitSystem = DEFAULT_UNITS) -> Trajectory:
    rows = _read_csv(path, minimum_cols=3)
    head = rows[0]
    if head[:3] != ["step", "t_s", "x_m"] or (len(head) == 4 and head[3] != "y_m"):
        raise CorruptHeader(f"{path}: unexpected trajectory columns {head}")
    dim = len(head) - 2
    times, pts = [], []
    for row in rows[1:]:
        times.append(units.to_scaled(float(row[1]), "time"))
        pts.append([units.to_scaled(float(c), "length") for c in row[2:2 + dim]])
    return Trajectory(np.array(times), np.array(pts))


def write_classical_trajectory(path: str, states) -> None:
    """Classical states in the same delimited layout; the toy model is
    dimensionless, so columns carry no unit suffix."""
    second = states[0].has_second_pointer
    cols = ["step", "t", "x", "p_x", "y", "p_y"] + (["z", "p_z"] if second else [])
    lines = [",".join(cols)]
    for k, s in enumerate(states):
        row = [str(k), _fmt(s.t), _fmt(s.x), _fmt(s.p_x), _fmt(s.y), _fmt(s.p_y)]
        if second:
            row += [_fmt(s.z), _fmt(s.p_z)]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_endpoints(path: str, positions: np.ndarray, units: UnitSystem = DEFAULT_UNITS) -> None:
    positions = np.asarray(positions, dtype=float)
    dim = positions.shape[1]
    cols = ["index", "x_m"] + (["y_m"] if dim == 2 else [])
    lines = [",".join(cols)]
    for k, p in enumerate(positions):
        lines.append(",".join([str(k)] + [_fmt(units.to_si(c, "length")) for c in p]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_endpoints(path: str, units: UnitSystem = DEFAULT_UNITS) -> np.ndarray:
    rows = _read_csv(path, minimum_cols=2)
    dim = len(rows[0]) - 1
    out = [[units.to_scaled(float(c), "length") for c in row[1:1 + dim]] for row in rows[1:]]
    return np.array(out)


def _read_csv(path: str, minimum_cols: int) -> list[list[str]]:
    if not os.path.exists(path):
        raise MissingArtifact(f"missing file {path}")
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) < 2 or any(len(r) < minimum_cols for r in rows):
        raise CorruptHeader(f"{path}: not a {minimum_cols}+ column table")
    return rows


def write_stat_reports(path: str, reports) -> None:
    write_json(path, [asdict(r) for r in reports])


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


MANIFEST_NAME = "manifest.json"


def write_manifest(bundle_dir: str, meta: dict) -> dict:
    """Checksum every file in the bundle and write the manifest last."""
    files = {}
    for root, _dirs, names in os.walk(bundle_dir):
        for name in sorted(names):
            if name == MANIFEST_NAME:
                continue
            full = os.path.join(root, name)
            rel = os.path.relpath(full, bundle_dir).replace(os.sep, "/")
            files[rel] = sha256_of(full)
    manifest = dict(meta)
    manifest["files"] = files
    write_json(os.path.join(bundle_dir, MANIFEST_NAME), manifest)
    return manifest


def read_manifest(bundle_dir: str) -> dict:
    return read_json(os.path.join(bundle_dir, MANIFEST_NAME))


def verify_manifest(bundle_dir: str) -> list[str]:
    """Names of files that are missing or whose checksum disagrees."""
    manifest = read_manifest(bundle_dir)
    bad = []
    for rel, digest in manifest.get("files", {}).items():
        full = os.path.join(bundle_dir, rel)
        if not os.path.exists(full) or sha256_of(full) != digest:
            bad.append(rel)
    return bad
