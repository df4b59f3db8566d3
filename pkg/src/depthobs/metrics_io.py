"""Depth error metrics and the on-disk formats: FGRID float grids, 16-bit
PGM frames, error-curve CSV and motion logs."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import MotionSample, PixelGrid, solid_angle_weight

FGRID_MAGIC = b"FGRD1"
_FGRID_HEADER = struct.Struct("<5sII")
MAX_FGRID_PIXELS = 1 << 28


class FormatError(ValueError):
    pass


@dataclass
class ErrorReport:
    frame_index: int
    t: float
    global_error: float
    linf_error: float
    lp_errors: dict = field(default_factory=dict)
    clamp_count: int = 0


def _check_pair(dhat, truth, valid=None):
    dhat = np.asarray(dhat, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if dhat.shape != truth.shape:
        raise ValueError(f"estimate shape {dhat.shape} differs from truth shape {truth.shape}")
    mask = np.ones(truth.shape, bool) if valid is None else np.asarray(valid, bool)
    return dhat, truth, mask


def global_error(dhat, truth, grid: PixelGrid, valid=None, weights=None) -> float:
    """Solid-angle weighted mean of ``|dhat - truth| / truth`` over valid pixels."""
    dhat, truth, mask = _check_pair(dhat, truth, valid)
    if np.any(truth[mask] <= 0) or not np.all(np.isfinite(truth[mask])):
        raise ValueError("truth depth must be finite and positive on valid pixels")
    w = solid_angle_weight(*grid.mesh()) if weights is None else np.broadcast_to(weights, truth.shape)
    w = w[mask]
    rel = np.abs(dhat[mask] - truth[mask]) / truth[mask]
    return float(np.sum(w * rel) / np.sum(w))


def lp_error(dhat, truth, grid: PixelGrid, p: float, valid=None) -> float:
    """``(integral |dhat - truth|^p dsigma)^(1/p)`` by midpoint quadrature."""
    if p <= 0:
        raise ValueError("p must be positive")
    dhat, truth, mask = _check_pair(dhat, truth, valid)
    w = solid_angle_weight(*grid.mesh())[mask] * grid.cell_area
    return float(np.sum(w * np.abs(dhat[mask] - truth[mask]) ** p) ** (1 / p))


def linf_error(dhat, truth, valid=None) -> float:
    dhat, truth, mask = _check_pair(dhat, truth, valid)
    return float(np.max(np.abs(dhat[mask] - truth[mask])))


def error_report(frame_index, t, dhat, truth, grid, valid=None, clamp_count=0) -> ErrorReport:
    return ErrorReport(
        frame_index=frame_index,
        t=t,
        global_error=global_error(dhat, truth, grid, valid),
        linf_error=linf_error(dhat, truth, valid),
        lp_errors={1: lp_error(dhat, truth, grid, 1, valid), 2: lp_error(dhat, truth, grid, 2, valid)},
        clamp_count=clamp_count,
    )


def normalize_intensity(frame) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    if frame.size == 0:
        raise ValueError("empty frame")
    mean = frame.mean()
    if not mean > 0:
        raise ValueError("frame mean must be positive")
    return frame / mean


def write_fgrid(path, values) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("FGRID holds 2-D grids only")
    h, w = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(_FGRID_HEADER.pack(FGRID_MAGIC, w, h))
        f.write(payload)


def read_fgrid(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _FGRID_HEADER.size:
        raise FormatError(f"{path}: header needs {_FGRID_HEADER.size} bytes, file has {len(data)}")
    magic, w, h = _FGRID_HEADER.unpack_from(data)
    if magic != FGRID_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if w * h > MAX_FGRID_PIXELS:
        raise FormatError(f"{path}: dimensions {w}x{h} exceed the supported size")
    expected = _FGRID_HEADER.size + 4 * w * h
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=_FGRID_HEADER.size).reshape(h, w).astype(np.float32)


def write_pgm(path, field, scale: float = 256.0, offset: float = 0.0) -> None:
    """Binary 16-bit PGM of ``round((field + offset) * scale)``."""
    field = np.asarray(field, dtype=float)
    samples = np.rint((field + offset) * scale)
    if not np.all(np.isfinite(samples)) or samples.min() < 0 or samples.max() > 65535:
        raise ValueError(
            f"values outside the 16-bit range after scaling "
            f"(min {np.nanmin(samples)}, max {np.nanmax(samples)})"
        )
    h, w = field.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(samples.astype(">u2").tobytes())


def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1


def read_pgm(path, scale: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Read a binary PGM and return ``samples / scale - offset``."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    try:
        (w, h, maxval), start = _pgm_tokens(data, 3)
    except ValueError as e:
        raise FormatError(f"{path}: malformed header") from e
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - start < n:
        raise FormatError(f"{path}: expected {n} bytes of samples, got {len(data) - start}")
    samples = np.frombuffer(data, dtype=dtype, count=w * h, offset=start).reshape(h, w)
    return samples.astype(float) / scale - offset


CURVE_HEADER = ["frame", "t", "global_error", "linf", "l1", "l2", "clamps"]


def _g(x) -> str:
    return f"{x:.9g}"


def write_curve_csv(path, reports) -> None:
    if not reports:
        raise ValueError("no error reports to write")
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CURVE_HEADER)
    for r in reports:
        wr.writerow([
            r.frame_index, _g(r.t), _g(r.global_error), _g(r.linf_error),
            _g(r.lp_errors.get(1, float("nan"))), _g(r.lp_errors.get(2, float("nan"))), r.clamp_count,
        ])
    Path(path).write_text(buf.getvalue())


def read_curve_csv(path) -> list[ErrorReport]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        ErrorReport(int(r["frame"]), float(r["t"]), float(r["global_error"]), float(r["linf"]),
                    {1: float(r["l1"]), 2: float(r["l2"])}, int(r["clamps"]))
        for r in rows
    ]


MOTION_HEADER = ["t", "v1", "v2", "v3", "w1", "w2", "w3"]


def write_motion_csv(path, motions) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(MOTION_HEADER)
    for m in motions:
        wr.writerow([repr(float(x)) for x in (m.t, *m.v, *m.omega)])
    Path(path).write_text(buf.getvalue())


def read_motion_csv(path) -> list[MotionSample]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MOTION_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MOTION_HEADER)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 7:
                raise FormatError(f"{path}:{lineno}: expected 7 columns")
            t, v1, v2, v3, w1, w2, w3 = map(float, row)
            out.append(MotionSample((v1, v2, v3), (w1, w2, w3), t))
    return out
