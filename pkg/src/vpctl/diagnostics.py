"""Scalar diagnostics, CSV / graymap output and controller checkpoints."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import PhaseGrid, inner, integrate_x
from .nn import MlpParams

SERIES_COLUMNS = ("t", "l2_perturbation", "electric_energy", "control_energy", "mass")


def l2_perturbation(grid: PhaseGrid, f: np.ndarray, fbar: np.ndarray) -> float:
    """``0.5 * ||f - fbar||^2`` over phase space."""
    d = np.asarray(f) - np.asarray(fbar)
    return 0.5 * inner(grid, d, d)


def field_energy(grid: PhaseGrid, field_: np.ndarray) -> float:
    """``0.5 * int |F|^2 dx``, summing components of a 2D vector field."""
    field_ = np.asarray(field_)
    return 0.5 * integrate_x(grid, field_**2)


electric_energy = field_energy
control_energy = field_energy


@dataclass
class DiagnosticSeries:
    t: list = field(default_factory=list)
    l2_perturbation: list = field(default_factory=list)
    electric_energy: list = field(default_factory=list)
    control_energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)

    def append(self, t, l2, ee, ce, mass):
        if self.t and t <= self.t[-1]:
            raise ValueError("diagnostic times must be strictly increasing")
        self.t.append(float(t))
        self.l2_perturbation.append(float(l2))
        self.electric_energy.append(float(ee))
        self.control_energy.append(float(ce))
        self.mass.append(float(mass))

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=np.float64)


def write_series_csv(series: DiagnosticSeries, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in zip(*(getattr(series, c) for c in SERIES_COLUMNS)):
                w.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write series to {path}: {exc}") from exc
    return path


def read_series_csv(path) -> DiagnosticSeries:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SERIES_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        series = DiagnosticSeries()
        for row in reader:
            series.append(*map(float, row))
    return series


def write_field_snapshot(values: np.ndarray, path) -> tuple[Path, Path, Path]:
    """Write a 2D array as CSV, an 8-bit PGM heatmap and a scaling sidecar.

    ``path`` is the stem; ``.csv``, ``.pgm`` and ``.txt`` are appended.
    Rows follow the first array index (``x``), columns the second.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"snapshots must be 1D or 2D arrays, got shape {arr.shape}")
    stem = Path(path)
    csv_path, pgm_path, txt_path = (stem.with_suffix(s) for s in (".csv", ".pgm", ".txt"))
    lo, hi = float(arr.min()), float(arr.max())
    scaled = np.zeros(arr.shape) if hi == lo else (arr - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    try:
        np.savetxt(csv_path, arr, delimiter=",", fmt="%.17g")
        with pgm_path.open("wb") as fh:
            fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
        txt_path.write_text(f"min {lo!r}\nmax {hi!r}\nrows {arr.shape[0]}\ncols {arr.shape[1]}\n")
    except OSError as exc:
        raise OSError(f"cannot write snapshot {stem}: {exc}") from exc
    return csv_path, pgm_path, txt_path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary graymap")
    cols, rows = map(int, dims.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(rows, cols)


# -- checkpoints ----------------------------------------------------------------
#
# Layout (little-endian): b"VPCTL", u8 version, u8 kind, u32 ndims,
# ndims x u32 shape header, then float64 payload.  Time-independent: header
# (31,), payload theta.  Low-rank: header = layer dims, payload
# W1, b1, W2, b2, ... with W of shape (fan_in, fan_out) in row-major order.

MAGIC = b"VPCTL"
FORMAT_VERSION = 1
_KIND_CODES = {"time_independent": 0, "low_rank_operator": 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


class CheckpointError(ValueError):
    pass


def checkpoint_write(params, path, kind: str | None = None) -> Path:
    """Write either an ``MlpParams`` (low-rank kernel) or a coefficient vector."""
    if isinstance(params, MlpParams):
        kind = kind or "low_rank_operator"
        header = params.layer_dims
        payload = params.to_vector()
    else:
        kind = kind or "time_independent"
        payload = np.asarray(params, dtype=np.float64).ravel()
        header = (payload.size,)
    if kind not in _KIND_CODES:
        raise CheckpointError(f"cannot checkpoint controller kind {kind!r}")
    blob = MAGIC + struct.pack("<BBI", FORMAT_VERSION, _KIND_CODES[kind], len(header))
    blob += struct.pack(f"<{len(header)}I", *header)
    blob += payload.astype("<f8").tobytes()
    path = Path(path)
    path.write_bytes(blob)
    return path


def checkpoint_read(path, kind: str | None = None):
    """Read a checkpoint; ``kind`` (if given) must match the stored kind."""
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    version, code, ndims = struct.unpack_from("<BBI", data, 5)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    if code not in _KIND_NAMES:
        raise CheckpointError(f"{path}: unknown controller kind code {code}")
    stored = _KIND_NAMES[code]
    if kind is not None and kind != stored:
        raise CheckpointError(f"{path}: shape mismatch, checkpoint holds {stored}, requested {kind}")
    off = 5 + struct.calcsize("<BBI")
    header = struct.unpack_from(f"<{ndims}I", data, off)
    payload = np.frombuffer(data, dtype="<f8", offset=off + 4 * ndims).astype(np.float64)
    if stored == "time_independent":
        if payload.size != header[0]:
            raise CheckpointError(f"{path}: expected {header[0]} coefficients, found {payload.size}")
        return payload
    try:
        return MlpParams.from_vector(payload, header)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
