"""Readers for the bundle formats written by the simulator.

A bundle is a directory with `fields/step_NNNN.field` binary dumps (plus
`.field.json` sidecars), `trajectory.csv`, `endpoints/step_NNNN.csv`,
`channels.json` and `diagnostics.json`. Everything on disk is SI; this
module converts lengths to nanometres once, since every figure axis is
in nm.
"""

import json
import os
import re
from dataclasses import dataclass

import numpy as np

FIELD_FORMAT = "pilotwave-field-v1"
NM = 1e9  # metres -> nanometres


class MissingArtifact(FileNotFoundError):
    """A file the bundle should contain is absent."""


class BundleFormatError(ValueError):
    """A bundle file exists but does not parse as its format."""


@dataclass(frozen=True)
class Field:
    """One dumped wave function with its grid, lengths in nm."""

    t_s: float
    x_nm: np.ndarray
    y_nm: np.ndarray | None
    values: np.ndarray

    @property
    def is_2d(self) -> bool:
        return self.y_nm is not None

    def density(self) -> np.ndarray:
        """|psi|^2 normalized to unit mass per nm (per nm^2 in 2D)."""
        rho = np.abs(self.values) ** 2
        dx = self.x_nm[1] - self.x_nm[0]
        cell = dx * (self.y_nm[1] - self.y_nm[0]) if self.is_2d else dx
        return rho / (rho.sum() * cell)

    def marginal(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """(coordinates_nm, density per nm) along one axis."""
        if not self.is_2d:
            if axis != 0:
                raise BundleFormatError("1D field has only axis 0")
            return self.x_nm, self.density()
        coords = self.x_nm if axis == 0 else self.y_nm
        rho = self.density().sum(axis=1 - axis)
        d = coords[1] - coords[0]
        return coords, rho / (rho.sum() * d)


@dataclass(frozen=True)
class Channel:
    """A disjoint pointer band: [y_lo_nm, y_hi_nm], centroid, weight."""

    y_lo_nm: float
    y_hi_nm: float
    centroid_nm: float
    weight: float


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"missing {path}")
    return path


def _load_json(path: str):
    with open(_require(path), "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise BundleFormatError(f"{path}: not valid JSON: {exc}") from None


def read_field(path_base: str) -> Field:
    """Load `<base>.field` + `<base>.field.json` (little-endian c16 payload)."""
    header = _load_json(path_base + ".field.json")
    payload_path = _require(path_base + ".field")
    try:
        if header["format"] != FIELD_FORMAT:
            raise BundleFormatError(
                f"{path_base}: format {header['format']!r}, expected {FIELD_FORMAT!r}")
        dim = int(header["dim"])
        nx = int(header["nx"])
        t_s = float(header["t_s"])
        x_nm = np.linspace(float(header["x_min_m"]) * NM,
                           float(header["x_max_m"]) * NM, nx)
        if dim == 2:
            ny = int(header["ny"])
            y_nm = np.linspace(float(header["y_min_m"]) * NM,
                               float(header["y_max_m"]) * NM, ny)
        elif dim == 1:
            y_nm = None
        else:
            raise BundleFormatError(f"{path_base}: dim={dim}")
        declared = int(header["payload_bytes"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, BundleFormatError):
            raise
        raise BundleFormatError(f"{path_base}: bad sidecar: {exc}") from None
    count = nx if dim == 1 else nx * ny
    if declared != 16 * count:
        raise BundleFormatError(
            f"{path_base}: payload_bytes={declared}, dims imply {16 * count}")
    with open(payload_path, "rb") as fh:
        data = fh.read()
    if len(data) != declared:
        raise BundleFormatError(
            f"{payload_path}: {len(data)} bytes on disk, header says {declared}")
    values = np.frombuffer(data, dtype="<c16").astype(np.complex128)
    if dim == 2:
        values = values.reshape(nx, ny)
    return Field(t_s, x_nm, y_nm, values)


_STEP_RE = re.compile(r"^step_(\d+)\.field\.json$")


def field_steps(bundle: str) -> list[tuple[int, str]]:
    """Sorted (step, path_base) pairs for every dumped field in the bundle."""
    fields_dir = _require(os.path.join(bundle, "fields"))
    out = []
    for name in os.listdir(fields_dir):
        m = _STEP_RE.match(name)
        if m:
            base = os.path.join(fields_dir, name[: -len(".field.json")])
            out.append((int(m.group(1)), base))
    if not out:
        raise MissingArtifact(f"no field dumps under {fields_dir}")
    return sorted(out)


def resolve_snapshot(bundle: str, index: int) -> tuple[int, Field]:
    """Pick a dumped field by snapshot index (negatives count from the end)."""
    steps = field_steps(bundle)
    try:
        step, base = steps[index]
    except IndexError:
        raise MissingArtifact(
            f"snapshot index {index} out of range, bundle has {len(steps)} dumps") from None
    return step, read_field(base)


def _read_csv(path: str, expect_head: list[str]) -> list[list[str]]:
    with open(_require(path), "r", encoding="utf-8") as fh:
        rows = [line.split(",") for line in fh.read().splitlines() if line]
    if not rows or rows[0][: len(expect_head)] != expect_head:
        raise BundleFormatError(f"{path}: unexpected columns {rows[0] if rows else []}")
    return rows


def read_trajectory(path: str) -> tuple[np.ndarray, np.ndarray]:
    """(times_s, positions_nm) of the highlighted trajectory; (n,) and (n, dim)."""
    rows = _read_csv(path, ["step", "t_s", "x_m"])
    dim = len(rows[0]) - 2
    try:
        t = np.array([float(r[1]) for r in rows[1:]])
        pos = np.array([[float(c) * NM for c in r[2:2 + dim]] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise BundleFormatError(f"{path}: bad row: {exc}") from None
    return t, pos


def read_endpoints(path: str) -> np.ndarray:
    """Sampled ensemble positions in nm, shape (n, dim)."""
    rows = _read_csv(path, ["index", "x_m"])
    dim = len(rows[0]) - 1
    try:
        return np.array([[float(c) * NM for c in r[1:1 + dim]] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise BundleFormatError(f"{path}: bad row: {exc}") from None


def read_channels(bundle: str) -> list[Channel]:
    raw = _load_json(os.path.join(bundle, "channels.json"))
    try:
        return [Channel(c["y_lo_m"] * NM, c["y_hi_m"] * NM,
                        c["centroid_m"] * NM, c["weight"]) for c in raw]
    except (KeyError, TypeError) as exc:
        raise BundleFormatError(f"channels.json: bad entry: {exc}") from None
