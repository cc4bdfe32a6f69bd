"""MOT text files, key=value configs, and PPM frame directories."""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import BoundingBox, Detection, InputError, TrackerParams
from .scoring import HistogramSource
from .simulator import ScenarioSpec

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# MOT challenge format
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class MotRecord:
    frame: int
    id: int
    left: float
    top: float
    width: float
    height: float
    conf: float = -1.0
    x: float = -1.0
    y: float = -1.0
    z: float = -1.0

    def __post_init__(self):
        if self.frame < 1:
            raise InputError(f"frame must be >= 1, got {self.frame}")
        if not (self.width > 0 and self.height > 0):
            raise InputError(f"box size must be positive, got {self.width}x{self.height}")

    @property
    def box(self) -> BoundingBox:
        return BoundingBox.from_ltwh(self.left, self.top, self.width, self.height)


def _number(tok: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse {what} {tok!r}") from None


def _integer(tok: str, lineno: int, what: str) -> int:
    v = _number(tok, lineno, what)
    if v != int(v):
        raise InputError(f"line {lineno}: {what} must be an integer, got {tok!r}")
    return int(v)


def parse_mot(text: str) -> list[MotRecord]:
    """Parse ``frame,id,left,top,width,height[,conf[,x,y,z]]`` lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        toks = [t.strip() for t in line.split(",")]
        if len(toks) < 6:
            raise InputError(f"line {lineno}: expected at least 6 fields, got {len(toks)}")
        frame = _integer(toks[0], lineno, "frame")
        tid = _integer(toks[1], lineno, "id")
        left, top, w, h = (_number(t, lineno, n) for t, n in zip(toks[2:6], ("left", "top", "width", "height")))
        if not (w > 0 and h > 0):
            raise InputError(f"line {lineno}: nonpositive box size {w}x{h}")
        if frame < 1:
            raise InputError(f"line {lineno}: frame must be >= 1")
        rest = [_number(t, lineno, "field") for t in toks[6:10]]
        rest += [-1.0] * (4 - len(rest))
        if len(toks) < 7:
            rest[0] = 1.0
        out.append(MotRecord(frame, tid, left, top, w, h, *rest))
    return out


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def write_mot(records) -> str:
    lines = []
    for r in records:
        lines.append(",".join([str(r.frame), str(r.id)] + [_fmt(v) for v in
                     (r.left, r.top, r.width, r.height, r.conf, r.x, r.y, r.z)]))
    return "".join(line + "\n" for line in lines)


def read_mot(path) -> list[MotRecord]:
    try:
        return parse_mot(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def records_to_detections(records) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for r in records:
        out.setdefault(r.frame, []).append(Detection(r.frame, r.box, r.conf))
    return out


def records_to_sequence(records, skip_zero_conf: bool = False):
    """Group records into ``frame -> [(id, box)]``; optionally drop conf == 0 rows (ignored gt)."""
    out: dict[int, list] = {}
    for r in records:
        if skip_zero_conf and r.conf == 0:
            continue
        out.setdefault(r.frame, []).append((r.id, r.box))
    return out


def box_record(frame: int, tid: int, box: BoundingBox, conf: float = 1.0) -> MotRecord:
    left, top, w, h = box.to_ltwh()
    return MotRecord(frame, tid, left, top, w, h, conf)


def detections_to_records(detections) -> list[MotRecord]:
    return [box_record(f, -1, d.box, d.confidence) for f in sorted(detections) for d in detections[f]]


def sequence_to_records(seq) -> list[MotRecord]:
    return [box_record(f, tid, box) for f in sorted(seq) for tid, box in sorted(seq[f], key=lambda e: e[0])]


# --------------------------------------------------------------------------
# key=value configuration
# --------------------------------------------------------------------------
def parse_key_values(text: str) -> dict[str, tuple[str, int]]:
    """``key -> (raw value, line number)``; ``#`` starts a comment; duplicates: last wins."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"line {lineno}: empty key")
        if key in out:
            log.warning("line %d: duplicate key %r overrides line %d", lineno, key, out[key][1])
        out[key] = (value, lineno)
    return out


def _tuple(value: str, lineno: int, key: str) -> tuple:
    return tuple(_number(v.strip(), lineno, key) for v in value.split(",") if v.strip())


def _pairs(value: str, lineno: int, key: str) -> tuple:
    return tuple(_tuple(chunk, lineno, key) for chunk in value.split(";") if chunk.strip())


def _convert(kind, value: str, lineno: int, key: str):
    if kind is int:
        return _integer(value, lineno, key)
    if kind is float:
        return _number(value, lineno, key)
    return _tuple(value, lineno, key)


def _build(cls, text: str, converters=None):
    converters = converters or {}
    defaults = cls()
    known = {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}
    kwargs = {}
    for key, (value, lineno) in parse_key_values(text).items():
        if key not in known:
            raise InputError(f"line {lineno}: unknown key {key!r}")
        conv = converters.get(key)
        kwargs[key] = conv(value, lineno, key) if conv else _convert(known[key], value, lineno, key)
    try:
        return cls(**kwargs)
    except InputError as exc:
        raise InputError(f"invalid configuration: {exc}") from None


def parse_config(text: str) -> TrackerParams:
    return _build(TrackerParams, text)


def load_config(path) -> TrackerParams:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _occlusions(value, lineno, key):
    out = []
    for chunk in value.split(";"):
        if not chunk.strip():
            continue
        parts = chunk.replace(":", ",").split(",")
        if len(parts) != 3:
            raise InputError(f"line {lineno}: occlusion must be target:start:duration, got {chunk!r}")
        out.append(tuple(_integer(p.strip(), lineno, key) for p in parts))
    return tuple(out)


def parse_scenario(text: str) -> ScenarioSpec:
    """Scenario files use the config syntax; ``starts``/``velocities`` are ``x,y; x,y; ...``."""
    return _build(ScenarioSpec, text, {"occlusions": _occlusions, "starts": _pairs, "velocities": _pairs})


def load_scenario(path) -> ScenarioSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text)


# --------------------------------------------------------------------------
# PPM frames
# --------------------------------------------------------------------------
def decode_ppm(data: bytes, name: str = "<ppm>") -> np.ndarray:
    """Decode a binary (P6) PPM with maxval <= 255 into an ``(h, w, 3)`` uint8 array."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise InputError(f"{name}: truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise InputError(f"{name}: not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise InputError(f"{name}: malformed PPM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise InputError(f"{name}: unsupported PPM geometry {width}x{height} maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    size = width * height * 3
    if n - pos < size:
        raise InputError(f"{name}: pixel data truncated")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=pos).reshape(height, width, 3)


def encode_ppm(image: np.ndarray) -> bytes:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    h, w, _ = image.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


class PpmDirectory:
    """Lazily decoded, cached PPM frames named by frame number (e.g. ``000001.ppm``)."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise InputError(f"frame directory {directory} does not exist")
        self._paths = {}
        for p in self.directory.glob("*.ppm"):
            if p.stem.isdigit():
                self._paths[int(p.stem)] = p
        self._cache: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def frames(self) -> list[int]:
        return sorted(self._paths)

    def __call__(self, frame: int) -> np.ndarray:
        img = self._cache.get(frame)
        if img is not None:
            return img
        path = self._paths.get(frame)
        if path is None:
            raise InputError(f"missing frame {frame} in {self.directory}")
        img = decode_ppm(path.read_bytes(), str(path))
        with self._lock:
            return self._cache.setdefault(frame, img)


def load_frames(directory) -> HistogramSource:
    return HistogramSource(PpmDirectory(directory))
