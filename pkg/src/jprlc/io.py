"""Cloud file formats, pose files, CSV tables, and run manifests.

Supported cloud formats are whitespace-separated XYZ text (one point per
line, `#` comments allowed) and ASCII PLY with x/y/z vertex properties.
All numeric output uses locale-independent decimal formatting; coordinate
output carries nine decimal places so files round-trip well below a
nanometer.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import RigidTransform
from .validation import check_cloud

_COORD_FMT = "{:.9f}"


class CloudFormatError(ValueError):
    """A cloud file violated its format; the message carries file and line."""


def detect_format(path) -> str:
    """Infer 'ply' or 'xyz' from the file suffix."""
    return "ply" if Path(path).suffix.lower() == ".ply" else "xyz"


def read_cloud(path, fmt: str | None = None) -> np.ndarray:
    """Load a point cloud, keeping file order."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt == "xyz":
        return _read_xyz(path)
    if fmt == "ply":
        return _read_ply(path)
    raise ConfigurationError(f"unknown cloud format {fmt!r}; expected 'xyz' or 'ply'")


def write_cloud(points, path, fmt: str | None = None) -> None:
    """Write a point cloud with deterministic byte output."""
    pts = check_cloud(points)
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt == "xyz":
        lines = [_format_point(p) for p in pts]
    elif fmt == "ply":
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {pts.shape[0]}",
            "property double x",
            "property double y",
            "property double z",
            "end_header",
        ] + [_format_point(p) for p in pts]
    else:
        raise ConfigurationError(f"unknown cloud format {fmt!r}; expected 'xyz' or 'ply'")
    try:
        with open(path, "w", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write cloud to {path}: {exc}") from exc


def _format_point(p) -> str:
    return " ".join(_COORD_FMT.format(v) for v in p)


def _read_xyz(path: Path) -> np.ndarray:
    points = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read cloud from {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise CloudFormatError(
                f"{path}:{lineno}: expected 3 coordinate fields, got {len(fields)}"
            )
        try:
            points.append([float(v) for v in fields])
        except ValueError:
            raise CloudFormatError(
                f"{path}:{lineno}: non-numeric coordinate in {line!r}"
            ) from None
    if not points:
        raise CloudFormatError(f"{path}: file contains no points")
    return np.asarray(points, dtype=np.float64)


def _read_ply(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read cloud from {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError(f"{path}:1: missing 'ply' magic line")

    # header: ordered (element, count) pairs and per-element property names
    elements: list[tuple[str, int]] = []
    properties: dict[str, list[str]] = {}
    data_start = None
    ascii_format = False
    for lineno, raw in enumerate(lines[1:], start=2):
        tokens = raw.strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            ascii_format = len(tokens) >= 2 and tokens[1] == "ascii"
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise CloudFormatError(f"{path}:{lineno}: malformed element line")
            try:
                elements.append((tokens[1], int(tokens[2])))
            except ValueError:
                raise CloudFormatError(
                    f"{path}:{lineno}: non-integer element count"
                ) from None
            properties[tokens[1]] = []
        elif tokens[0] == "property":
            if not elements:
                raise CloudFormatError(f"{path}:{lineno}: property before any element")
            properties[elements[-1][0]].append(tokens[-1])
        elif tokens[0] == "end_header":
            data_start = lineno
            break
    if data_start is None:
        raise CloudFormatError(f"{path}: header is missing 'end_header'")
    if not ascii_format:
        raise CloudFormatError(f"{path}: only ASCII PLY is supported")
    vertex_counts = [count for name, count in elements if name == "vertex"]
    if not vertex_counts:
        raise CloudFormatError(f"{path}: header has no 'element vertex'")
    names = properties["vertex"]
    try:
        coord_cols = [names.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise CloudFormatError(
            f"{path}: vertex element must have x, y and z properties"
        ) from None

    points = []
    cursor = data_start  # zero-based index of the first data line
    for name, count in elements:
        if name != "vertex":
            cursor += count
            continue
        for row in range(count):
            lineno = cursor + row + 1
            if cursor + row >= len(lines):
                raise CloudFormatError(
                    f"{path}: expected {count} vertex lines, file ended early"
                )
            fields = lines[cursor + row].split()
            if len(fields) < len(names):
                raise CloudFormatError(
                    f"{path}:{lineno}: vertex line has {len(fields)} fields, "
                    f"expected {len(names)}"
                )
            try:
                points.append([float(fields[c]) for c in coord_cols])
            except ValueError:
                raise CloudFormatError(
                    f"{path}:{lineno}: non-numeric vertex coordinate"
                ) from None
        cursor += count
    if not points:
        raise CloudFormatError(f"{path}: file contains no points")
    return np.asarray(points, dtype=np.float64)


def write_poses(transforms, path) -> None:
    """Write poses as a JSON list of row-major rotation plus translation."""
    payload = [
        {
            "rotation": [[float(v) for v in row] for row in t.rotation],
            "translation": [float(v) for v in t.translation],
        }
        for t in transforms
    ]
    _write_json(payload, path)


def read_poses(path) -> list[RigidTransform]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read poses from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ConfigurationError(f"{path}: expected a JSON list of poses")
    transforms = []
    for idx, entry in enumerate(payload):
        try:
            transforms.append(
                RigidTransform(np.asarray(entry["rotation"]), np.asarray(entry["translation"]))
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(
                f"{path}: pose {idx} must have 'rotation' and 'translation'"
            ) from exc
    return transforms


def write_trace_csv(values, path) -> None:
    """Objective trace as iteration,objective rows."""
    lines = ["iteration,objective"]
    for idx, value in enumerate(values, start=1):
        lines.append(f"{idx},{float(value)!r}")
    _write_text("\n".join(lines) + "\n", path)


def write_sweep_csv(rows, path) -> None:
    """Sweep table, one aggregate row per level."""
    lines = ["level,trials,success_rate,mean_rmse_mm,std_rmse_mm"]
    for row in rows:
        lines.append(
            f"{row.level!r},{row.trials},{row.success_rate!r},"
            f"{row.mean_rmse_mm!r},{row.std_rmse_mm!r}"
        )
    _write_text("\n".join(lines) + "\n", path)


def file_digest(path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_manifest(command: str, config: dict, inputs, version: str, seed=None) -> dict:
    """Everything needed to rerun a CLI invocation bit for bit."""
    return {
        "tool": "jprlc",
        "version": version,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": seed,
        "config": config,
        "inputs": [
            {"path": str(p), "sha256": file_digest(p)} for p in inputs
        ],
    }


def _write_json(payload, path) -> None:
    _write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", path)


def write_manifest(manifest: dict, path) -> None:
    _write_json(manifest, path)


def _write_text(text: str, path) -> None:
    path = Path(path)
    try:
        with open(path, "w", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
