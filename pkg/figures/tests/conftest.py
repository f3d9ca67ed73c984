"""Synthetic bundles written format-by-hand, so the readers are tested
against the documented byte layout rather than against themselves."""

import json
import os

import numpy as np
import pytest

NM = 1e-9


def write_field_raw(fields_dir, step, values, x_span_nm, y_span_nm=None, t_s=0.0):
    os.makedirs(fields_dir, exist_ok=True)
    values = np.asarray(values, dtype=np.complex128)
    header = {
        "format": "pilotwave-field-v1",
        "dim": 1 if values.ndim == 1 else 2,
        "nx": values.shape[0],
        "t_s": t_s,
        "length_unit_m": NM,
        "time_unit_s": 8.6379927423e-15,
        "x_min_m": x_span_nm[0] * NM,
        "x_max_m": x_span_nm[1] * NM,
    }
    if values.ndim == 2:
        header["ny"] = values.shape[1]
        header["y_min_m"] = y_span_nm[0] * NM
        header["y_max_m"] = y_span_nm[1] * NM
    payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    header["payload_bytes"] = len(payload)
    base = os.path.join(fields_dir, f"step_{step:04d}")
    with open(base + ".field", "wb") as fh:
        fh.write(payload)
    with open(base + ".field.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return base


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    lines = [",".join(header)] + [",".join(str(c) for c in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def gaussian_blob(nx, ny, x_span, y_span, cx, cy, sx, sy):
    x = np.linspace(x_span[0], x_span[1], nx)
    y = np.linspace(y_span[0], y_span[1], ny)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    amp = np.exp(-((xx - cx) ** 2) / (2 * sx**2) - ((yy - cy) ** 2) / (2 * sy**2))
    return amp.astype(np.complex128)


@pytest.fixture(scope="session")
def bundle2d(tmp_path_factory):
    """96x80 Gaussian blob, 2 dumps, trajectory ending at (3.5, 2.0) nm,
    endpoints for the second dump, two channel bands."""
    root = str(tmp_path_factory.mktemp("bundle2d"))
    x_span, y_span = (-12.0, 12.0), (-10.0, 10.0)
    blob = gaussian_blob(96, 80, x_span, y_span, cx=1.0, cy=-1.5, sx=3.0, sy=2.0)
    write_field_raw(os.path.join(root, "fields"), 0, blob, x_span, y_span, t_s=0.0)
    write_field_raw(os.path.join(root, "fields"), 10, blob * np.exp(0.4j),
                    x_span, y_span, t_s=1e-14)
    write_csv(os.path.join(root, "trajectory.csv"),
              ["step", "t_s", "x_m", "y_m"],
              [[0, 0.0, 2.0e-9, 1.0e-9],
               [1, 5e-15, 2.8e-9, 1.6e-9],
               [2, 1e-14, 3.5e-9, 2.0e-9]])
    rng = np.random.default_rng(42)
    pts = rng.normal([1.0, -1.5], [2.0, 1.4], size=(400, 2)) * NM
    write_csv(os.path.join(root, "endpoints", "step_0010.csv"),
              ["index", "x_m", "y_m"],
              [[k, p[0], p[1]] for k, p in enumerate(pts)])
    with open(os.path.join(root, "channels.json"), "w", encoding="utf-8") as fh:
        json.dump([
            {"y_lo_m": -6e-9, "y_hi_m": -2e-9, "centroid_m": -4e-9, "weight": 0.48},
            {"y_lo_m": 1e-9, "y_hi_m": 5e-9, "centroid_m": 3e-9, "weight": 0.52},
        ], fh)
    return root


@pytest.fixture(scope="session")
def bundle1d(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("bundle1d"))
    x = np.linspace(-20.0, 20.0, 128)
    vals = np.exp(-(x - 2.0) ** 2 / 8.0).astype(np.complex128)
    write_field_raw(os.path.join(root, "fields"), 0, vals, (-20.0, 20.0), t_s=0.0)
    write_field_raw(os.path.join(root, "fields"), 40, vals, (-20.0, 20.0), t_s=2e-14)
    write_csv(os.path.join(root, "trajectory.csv"),
              ["step", "t_s", "x_m"],
              [[k, k * 1e-15, (2.0 + 0.1 * k) * 1e-9] for k in range(21)])
    rng = np.random.default_rng(9)
    write_csv(os.path.join(root, "endpoints", "step_0040.csv"),
              ["index", "x_m"],
              [[k, v * NM] for k, v in enumerate(rng.normal(2.0, 2.0, 300))])
    return root
