"""File formats: event streams, dense maps, warp plans, fusion parameters.

All binary formats are little-endian; byte layouts are in docs/formats.md.
Readers either return a fully validated value or raise: ``FormatError``
for unreadable bytes, ``EventInvariantError`` for well-formed files whose
contents break an event invariant.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .dtw import WarpPlan
from .errors import ContractError, EventInvariantError, FormatError
from .events import EventStream, ViewAxis
from .fusion import AttentionHead, ToyBranch
from .tism import DenseMap

EVENT_MAGIC = b"EVS1"
MAP_MAGIC = b"DMP1"
HEAD_MAGIC = b"FUS1"
BRANCH_MAGIC = b"TBR1"
MAP_DTYPE_TAG = b"<f8\x00"

_EVENT_HEADER = struct.Struct("<4sHHQ")
_MAP_HEADER = struct.Struct("<4sIII4s")
_HEAD_HEADER = struct.Struct("<4sIIII")
_BRANCH_HEADER = struct.Struct("<4sIIII")

EVENT_HEADER_SIZE = _EVENT_HEADER.size  # 16
MAP_HEADER_SIZE = _MAP_HEADER.size  # 20

EVENT_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")]
)  # 16 bytes

_VIEW_CODES = {None: 0, ViewAxis.TH: 1, ViewAxis.TW: 2, ViewAxis.HW: 3}
_CODE_VIEWS = {v: k for k, v in _VIEW_CODES.items()}


# -- events -------------------------------------------------------------------

def read_events_csv(path, width: int | None = None, height: int | None = None) -> EventStream:
    """Read ``t,x,y,p`` lines; ``p`` may be -1/1 or 0/1 (0 means -1).

    Blank lines, ``#`` comments and a leading ``t,x,y,p`` header are
    skipped. Without an explicit sensor size it is inferred as max + 1.
    """
    ts, xs, ys, ps = [], [], [], []
    lines = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                    continue
                if not ts and [c.strip().lower() for c in row] == ["t", "x", "y", "p"]:
                    continue
                if len(row) != 4:
                    raise FormatError(f"expected 4 fields t,x,y,p, got {len(row)}", line=lineno)
                try:
                    t, x, y, p = (int(c) for c in row)
                except ValueError:
                    raise FormatError(f"non-integer field in {','.join(row)!r}", line=lineno) from None
                if p == 0:
                    p = -1
                if p not in (-1, 1):
                    raise EventInvariantError(f"polarity {p} not in {{-1, 0, 1}}", line=lineno)
                if t < 0:
                    raise EventInvariantError(f"negative timestamp {t}", line=lineno)
                if ts and t < ts[-1]:
                    raise EventInvariantError(f"timestamp {t} precedes {ts[-1]}", line=lineno)
                ts.append(t), xs.append(x), ys.append(y), ps.append(p), lines.append(lineno)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if width is None:
        width = max(xs, default=0) + 1
    if height is None:
        height = max(ys, default=0) + 1
    for k, (x, y) in enumerate(zip(xs, ys)):
        if not (0 <= x < width and 0 <= y < height):
            raise EventInvariantError(f"event ({x}, {y}) outside {width}x{height} sensor", line=lines[k])
    return EventStream(xs, ys, ts, ps, width, height)


def write_events_csv(stream: EventStream, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()))


def write_events_binary(stream: EventStream, path) -> None:
    if stream.width > 0xFFFF or stream.height > 0xFFFF:
        raise ContractError("sensor size does not fit the 16-bit header fields")
    records = np.zeros(len(stream), dtype=EVENT_RECORD)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(_EVENT_HEADER.pack(EVENT_MAGIC, stream.width, stream.height, len(stream)))
        fh.write(records.tobytes())


def read_events_binary(path) -> EventStream:
    raw = _read_bytes(path)
    if len(raw) < EVENT_HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, width, height, count = _EVENT_HEADER.unpack_from(raw)
    if magic != EVENT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EVENT_MAGIC!r}")
    expected = EVENT_HEADER_SIZE + count * EVENT_RECORD.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    records = np.frombuffer(raw, dtype=EVENT_RECORD, count=count, offset=EVENT_HEADER_SIZE)
    if np.any(records["t"] > np.iinfo(np.int64).max):
        raise EventInvariantError(f"{path}: timestamp exceeds the signed 64-bit range")
    return EventStream(records["x"], records["y"], records["t"].astype(np.int64), records["p"], width, height)


def read_events(path, width: int | None = None, height: int | None = None) -> EventStream:
    """Dispatch on suffix: ``.csv``/``.txt`` are text, anything else binary."""
    if Path(path).suffix.lower() in (".csv", ".txt"):
        return read_events_csv(path, width, height)
    return read_events_binary(path)


def write_events(stream: EventStream, path) -> None:
    if Path(path).suffix.lower() in (".csv", ".txt"):
        write_events_csv(stream, path)
    else:
        write_events_binary(stream, path)


# -- dense maps ---------------------------------------------------------------

def write_map(dense: DenseMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAP_HEADER.pack(MAP_MAGIC, dense.channels, dense.rows, dense.cols, MAP_DTYPE_TAG))
        fh.write(dense.data.astype("<f8", copy=False).tobytes())


def read_map(path) -> DenseMap:
    raw = _read_bytes(path)
    if len(raw) < MAP_HEADER_SIZE:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, channels, rows, cols, tag = _MAP_HEADER.unpack_from(raw)
    if magic != MAP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAP_MAGIC!r}")
    if tag != MAP_DTYPE_TAG:
        raise FormatError(f"{path}: unsupported dtype tag {tag!r}")
    if min(channels, rows, cols) < 1:
        raise FormatError(f"{path}: empty map shape {channels}x{rows}x{cols}")
    expected = MAP_HEADER_SIZE + channels * rows * cols * 8
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype="<f8", offset=MAP_HEADER_SIZE).reshape(channels, rows, cols)
    return DenseMap(data.astype(np.float64))


def resize_nearest(dense: DenseMap, rows: int, cols: int) -> DenseMap:
    """Nearest-neighbour resample of every channel to ``rows x cols``."""
    if rows < 1 or cols < 1:
        raise ContractError(f"target size must be positive, got {rows}x{cols}")
    r = (np.arange(rows) * dense.rows) // rows
    c = (np.arange(cols) * dense.cols) // cols
    return DenseMap(dense.data[:, r][:, :, c])


def export_map_image(dense: DenseMap, channel: int, path) -> None:
    """Write one channel as a binary 8-bit PGM, min-max scaled to 0..255.

    A constant channel becomes uniform mid-grey (128).
    """
    if not 0 <= channel < dense.channels:
        raise ContractError(f"channel {channel} out of range for {dense.channels} channels")
    plane = dense.data[channel]
    lo, hi = plane.min(), plane.max()
    if hi == lo:
        pixels = np.full(plane.shape, 128, dtype=np.uint8)
    else:
        pixels = np.rint((plane - lo) * (255.0 / (hi - lo))).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{dense.cols} {dense.rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Minimal P5 reader for files written by ``export_map_image``."""
    raw = _read_bytes(path)
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} pixels, got {pixels.size}")
    return pixels.reshape(rows, cols)


# -- warp plans ---------------------------------------------------------------

def write_plan(plan: WarpPlan, path) -> None:
    with open(path, "w") as fh:
        json.dump(plan.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_plan(path) -> WarpPlan:
    try:
        with open(path) as fh:
            return WarpPlan.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: cannot read warp plan: {exc}") from exc


# -- fusion parameters --------------------------------------------------------

def write_head(head: AttentionHead, path) -> None:
    flags = 1 if head.residual_norm else 0
    with open(path, "wb") as fh:
        fh.write(_HEAD_HEADER.pack(HEAD_MAGIC, head.model_dim, head.num_classes, head.num_heads, flags))
        for name in head.param_names():
            fh.write(head.params[name].astype("<f8").tobytes())


def _head_shapes(dim: int, num_classes: int, residual_norm: bool) -> dict[str, tuple]:
    shapes = {}
    for p in ("q", "k", "v", "o"):
        shapes[f"w_{p}"] = (dim, dim)
        shapes[f"b_{p}"] = (dim,)
    shapes["w_out"] = (2 * dim, 2 * num_classes)
    shapes["b_out"] = (2 * num_classes,)
    if residual_norm:
        shapes["ln_gain"] = (dim,)
        shapes["ln_bias"] = (dim,)
    return shapes


def read_head(path) -> AttentionHead:
    raw = _read_bytes(path)
    if len(raw) < _HEAD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, dim, num_classes, num_heads, flags = _HEAD_HEADER.unpack_from(raw)
    if magic != HEAD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {HEAD_MAGIC!r}")
    shapes = _head_shapes(dim, num_classes, bool(flags & 1))
    params = _unpack_arrays(raw, _HEAD_HEADER.size, shapes, path)
    return AttentionHead(params, num_heads, bool(flags & 1))


def write_branch(branch: ToyBranch, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_BRANCH_HEADER.pack(
            BRANCH_MAGIC, branch.in_channels, branch.dim, branch.num_classes, _VIEW_CODES[branch.view]
        ))
        for arr in (branch.w_hidden, branch.b_hidden, branch.w_logits, branch.b_logits):
            fh.write(arr.astype("<f8").tobytes())


def read_branch(path) -> ToyBranch:
    raw = _read_bytes(path)
    if len(raw) < _BRANCH_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, cin, dim, num_classes, view = _BRANCH_HEADER.unpack_from(raw)
    if magic != BRANCH_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {BRANCH_MAGIC!r}")
    if view not in _CODE_VIEWS:
        raise FormatError(f"{path}: unknown view code {view}")
    shapes = {"w_hidden": (cin, dim), "b_hidden": (dim,), "w_logits": (dim, num_classes), "b_logits": (num_classes,)}
    p = _unpack_arrays(raw, _BRANCH_HEADER.size, shapes, path)
    return ToyBranch(p["w_hidden"], p["b_hidden"], p["w_logits"], p["b_logits"], _CODE_VIEWS[view])


def _unpack_arrays(raw: bytes, offset: int, shapes: dict, path) -> dict[str, np.ndarray]:
    expected = offset + 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, header implies {expected}")
    out = {}
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        out[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
    return out


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
