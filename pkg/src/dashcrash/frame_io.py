"""On-disk formats and domain types: detection streams, graymap frames, lane
geometry, ground-truth intervals, and pipeline configuration.

All readers validate their invariants up front and raise FormatError with
file/line context; all writers produce byte-deterministic output for the
same inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError

VEHICLE_CLASSES = ("car", "bus", "truck")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in centroid form, pixel units."""

    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"box extent must be positive, got {self.width}x{self.height}")

    @property
    def left(self) -> float:
        return self.cx - self.width / 2.0

    @property
    def right(self) -> float:
        return self.cx + self.width / 2.0

    @property
    def top(self) -> float:
        return self.cy - self.height / 2.0

    @property
    def bottom(self) -> float:
        return self.cy + self.height / 2.0


@dataclass(frozen=True)
class Detection:
    """One detected vehicle box in one frame."""

    frame_index: int
    class_label: str
    score: float
    box: BoundingBox

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be in [0,1], got {self.score}")
        if self.class_label not in VEHICLE_CLASSES:
            raise ValueError(f"class_label must be one of {VEHICLE_CLASSES}")


@dataclass(frozen=True)
class GrayFrame:
    """8-bit luminance image; pixels are a (height, width) uint8 array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width):
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")


@dataclass(frozen=True)
class GroundTruthInterval:
    """Inclusive frame interval labelled as an accident."""

    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise ValueError(
                f"interval start {self.start_frame} exceeds end {self.end_frame}"
            )


Point = tuple[float, float]
Segment = tuple[Point, Point]


@dataclass(frozen=True)
class LaneModel:
    """Two lane demarcation lines splitting the road into three sections.

    Each line is stored as a segment but evaluated as the full line through
    its endpoints. Frame dimensions are optional; when present they anchor
    the left-of-right sanity check to the bottom image row.
    """

    left_line: Segment
    right_line: Segment
    frame_width: int | None = None
    frame_height: int | None = None

    def __post_init__(self):
        for name, seg in (("left", self.left_line), ("right", self.right_line)):
            (x1, y1), (x2, y2) = seg
            if y1 == y2:
                raise ValueError(f"{name} lane line is horizontal and cannot be evaluated by row")
        if self.left_line == self.right_line:
            raise ValueError("lane lines must be distinct")
        y_ref = float(self.frame_height - 1) if self.frame_height else self._max_y()
        if not self.left_x(y_ref) < self.right_x(y_ref):
            raise ValueError("left lane line must lie left of the right line at the bottom row")

    def _max_y(self) -> float:
        return max(p[1] for p in self.left_line + self.right_line)

    @staticmethod
    def _x_at(seg: Segment, y: float) -> float:
        (x1, y1), (x2, y2) = seg
        return x1 + (y - y1) * (x2 - x1) / (y2 - y1)

    def left_x(self, y: float) -> float:
        return self._x_at(self.left_line, y)

    def right_x(self, y: float) -> float:
        return self._x_at(self.right_line, y)


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable constants for the whole pipeline.

    max_match_distance_px of None means "derive from the frame diagonal when
    dimensions are known" (see pipeline.resolve_match_gate).
    """

    fps: float = 30.0
    interval_frames: int = 5
    accel_window_frames: int = 15
    score_threshold: float = 0.5
    min_detection_score: float = 0.7
    max_match_distance_px: float | None = None
    deregister_after_frames: int = 15
    trajectory_min_magnitude_px: float = 5.0
    theta_low_deg: float = 20.0
    theta_high_deg: float = 120.0
    alpha_ref_mps2: float = 20.0
    gamma_ref_deg: float = 90.0
    beta_parallel_scale: float = 0.5
    beta_distance_ref_px: float = 50.0
    w_alpha: float = 0.4
    w_beta: float = 0.35
    w_gamma: float = 0.25
    metres_per_pixel: float = 0.05

    def __post_init__(self):
        def require(cond: bool, message: str):
            if not cond:
                raise ValueError(message)

        require(self.fps > 0, f"fps must be positive, got {self.fps}")
        require(self.interval_frames >= 1, "interval_frames must be >= 1")
        require(self.accel_window_frames >= 1, "accel_window_frames must be >= 1")
        require(0 < self.score_threshold < 1, "score_threshold must be in (0,1)")
        require(0 <= self.min_detection_score <= 1, "min_detection_score must be in [0,1]")
        if self.max_match_distance_px is not None:
            require(self.max_match_distance_px > 0, "max_match_distance_px must be positive")
        require(self.deregister_after_frames >= 1, "deregister_after_frames must be >= 1")
        require(self.trajectory_min_magnitude_px > 0, "trajectory_min_magnitude_px must be positive")
        require(self.theta_low_deg < self.theta_high_deg, "theta_low_deg must be below theta_high_deg")
        require(self.theta_low_deg > 0, "theta_low_deg must be positive")
        require(self.alpha_ref_mps2 > 0, "alpha_ref_mps2 must be positive")
        require(self.gamma_ref_deg > 0, "gamma_ref_deg must be positive")
        require(0 <= self.beta_parallel_scale <= 1, "beta_parallel_scale must be in [0,1]")
        require(self.beta_distance_ref_px > 0, "beta_distance_ref_px must be positive")
        for name in ("w_alpha", "w_beta", "w_gamma"):
            require(getattr(self, name) >= 0, f"{name} must be non-negative")
        total = self.w_alpha + self.w_beta + self.w_gamma
        require(abs(total - 1.0) <= 1e-9, f"anomaly weights must sum to 1, got {total}")
        require(self.metres_per_pixel > 0, "metres_per_pixel must be positive")

    @property
    def tau(self) -> float:
        """Seconds per frame."""
        return 1.0 / self.fps

    def to_dict(self) -> dict:
        return asdict(self)


_INT_CONFIG_FIELDS = {
    "interval_frames",
    "accel_window_frames",
    "deregister_after_frames",
}


def read_config(path: str | Path) -> PipelineConfig:
    """Load a flat JSON config object; absent keys take documented defaults."""
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    values = {}
    for key, value in raw.items():
        if key not in known:
            raise FormatError(f"{path}: unknown config key '{key}'")
        if key in _INT_CONFIG_FIELDS:
            value = _as_int(value, f"{path}: config key '{key}'")
        elif key == "max_match_distance_px" and value is None:
            pass
        elif not isinstance(value, (int, float)) or isinstance(value, bool):
            raise FormatError(f"{path}: config key '{key}' must be a number")
        values[key] = value
    try:
        return PipelineConfig(**values)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_detections(path: str | Path, min_score: float = 0.7) -> list[list[Detection]]:
    """Read a line-delimited detection stream into per-frame detection lists.

    Frames absent from the file come back as empty lists; detections with a
    sub-threshold score or a non-vehicle class are dropped. Records must be
    ordered by non-decreasing frame index.
    """
    frames: list[list[Detection]] = []
    last_frame = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            frame = _parse_frame_record(record, frames, min_score, f"{path}:{lineno}")
            if frame < last_frame:
                raise FormatError(
                    f"{path}:{lineno}: frame index {frame} decreases from {last_frame}"
                )
            last_frame = frame
    return frames


def _parse_frame_record(
    record, frames: list[list[Detection]], min_score: float, where: str
) -> int:
    if not isinstance(record, dict):
        raise FormatError(f"{where}: record must be a JSON object")
    frame = _as_int(record.get("frame"), f"{where}: 'frame'")
    if frame < 0:
        raise FormatError(f"{where}: frame index must be non-negative")
    boxes = record.get("boxes")
    if not isinstance(boxes, list):
        raise FormatError(f"{where}: 'boxes' must be a list")
    while len(frames) <= frame:
        frames.append([])
    for i, entry in enumerate(boxes):
        detection = _parse_box_entry(entry, frame, f"{where}: boxes[{i}]")
        if detection is None:
            continue
        if detection.score < min_score:
            continue
        frames[frame].append(detection)
    return frame


def _parse_box_entry(entry, frame: int, where: str) -> Detection | None:
    if not isinstance(entry, dict):
        raise FormatError(f"{where}: box must be a JSON object")
    label = entry.get("class")
    if not isinstance(label, str):
        raise FormatError(f"{where}: 'class' must be a string")
    score = _as_float(entry.get("score"), f"{where}: 'score'")
    if not (0.0 <= score <= 1.0):
        raise FormatError(f"{where}: score {score} outside [0,1]")
    cx = _as_float(entry.get("cx"), f"{where}: 'cx'")
    cy = _as_float(entry.get("cy"), f"{where}: 'cy'")
    w = _as_float(entry.get("w"), f"{where}: 'w'")
    h = _as_float(entry.get("h"), f"{where}: 'h'")
    if w <= 0 or h <= 0:
        raise FormatError(f"{where}: box extent must be positive, got {w}x{h}")
    if label not in VEHICLE_CLASSES:
        return None
    return Detection(frame, label, score, BoundingBox(cx, cy, w, h))


def write_detections(stream: list[list[Detection]], path: str | Path) -> None:
    """Write one record per frame, including explicit empty frames."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame_index, detections in enumerate(stream):
            boxes = [
                {
                    "class": d.class_label,
                    "score": d.score,
                    "cx": d.box.cx,
                    "cy": d.box.cy,
                    "w": d.box.width,
                    "h": d.box.height,
                }
                for d in detections
            ]
            fh.write(json.dumps({"frame": frame_index, "boxes": boxes}) + "\n")


def read_frames(directory: str | Path) -> list[GrayFrame]:
    """Read all .pgm files in a directory, ordered by filename."""
    paths = sorted(Path(directory).glob("*.pgm"))
    frames = []
    dims: tuple[int, int] | None = None
    for path in paths:
        frame = read_pgm(path)
        if dims is None:
            dims = (frame.width, frame.height)
        elif dims != (frame.width, frame.height):
            raise FormatError(
                f"{path}: frame is {frame.width}x{frame.height}, "
                f"expected {dims[0]}x{dims[1]} as in earlier frames"
            )
        frames.append(frame)
    return frames


def read_pgm(path: str | Path) -> GrayFrame:
    """Decode a binary (P5) portable graymap with maxval 255."""
    data = Path(path).read_bytes()
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise FormatError(f"{path}: expected P5 magic, got {magic!r}")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric header field") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after the header
    payload = data[pos:]
    expected = width * height
    if len(payload) < expected:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise FormatError(
            f"{path}: payload has {len(payload) - expected} trailing bytes"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayFrame(width, height, pixels)


def write_pgm(frame: GrayFrame, path: str | Path) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.pixels.tobytes())


def write_frames(frames: list[GrayFrame], directory: str | Path) -> None:
    """Write frames as zero-padded NNNNNN.pgm files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(frame, directory / f"{i:06d}.pgm")


def read_lanes(path: str | Path) -> LaneModel:
    """Load a lane file: two segments, plus optional frame dimensions."""
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: lane file must be a JSON object")
    segments = {}
    for key in ("left", "right"):
        seg = raw.get(key)
        if (
            not isinstance(seg, list)
            or len(seg) != 2
            or any(not isinstance(p, list) or len(p) != 2 for p in seg)
        ):
            raise FormatError(f"{path}: '{key}' must be [[x1,y1],[x2,y2]]")
        segments[key] = (
            (_as_float(seg[0][0], f"{path}: {key}"), _as_float(seg[0][1], f"{path}: {key}")),
            (_as_float(seg[1][0], f"{path}: {key}"), _as_float(seg[1][1], f"{path}: {key}")),
        )
    width = raw.get("frame_width")
    height = raw.get("frame_height")
    if width is not None:
        width = _as_int(width, f"{path}: 'frame_width'")
    if height is not None:
        height = _as_int(height, f"{path}: 'frame_height'")
    try:
        return LaneModel(segments["left"], segments["right"], width, height)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_lanes(lanes: LaneModel, path: str | Path) -> None:
    payload: dict = {
        "left": [list(lanes.left_line[0]), list(lanes.left_line[1])],
        "right": [list(lanes.right_line[0]), list(lanes.right_line[1])],
    }
    if lanes.frame_width is not None:
        payload["frame_width"] = lanes.frame_width
    if lanes.frame_height is not None:
        payload["frame_height"] = lanes.frame_height
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def normalize_truth(intervals: list[GroundTruthInterval]) -> list[GroundTruthInterval]:
    """Merge overlapping or adjacent intervals into maximal disjoint runs."""
    ordered = sorted(intervals, key=lambda iv: (iv.start_frame, iv.end_frame))
    merged: list[GroundTruthInterval] = []
    for interval in ordered:
        if merged and interval.start_frame <= merged[-1].end_frame + 1:
            last = merged[-1]
            merged[-1] = GroundTruthInterval(
                last.start_frame, max(last.end_frame, interval.end_frame)
            )
        else:
            merged.append(interval)
    return merged


def read_ground_truth(path: str | Path) -> list[GroundTruthInterval]:
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise FormatError(f"{path}: ground truth must be a JSON list")
    intervals = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise FormatError(f"{path}: entry {i} must be an object")
        start = _as_int(entry.get("start_frame"), f"{path}: entry {i} 'start_frame'")
        end = _as_int(entry.get("end_frame"), f"{path}: entry {i} 'end_frame'")
        try:
            intervals.append(GroundTruthInterval(start, end))
        except ValueError as exc:
            raise FormatError(f"{path}: entry {i}: {exc}") from exc
    return normalize_truth(intervals)


def write_ground_truth(intervals: list[GroundTruthInterval], path: str | Path) -> None:
    payload = [
        {"start_frame": iv.start_frame, "end_frame": iv.end_frame} for iv in intervals
    ]
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def _load_json(path: str | Path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or value is None:
        raise FormatError(f"{where} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value == int(value):
        return int(value)
    raise FormatError(f"{where} must be an integer, got {value!r}")


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or value is None or not isinstance(value, (int, float)):
        raise FormatError(f"{where} must be a number")
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise FormatError(f"{where} must be finite")
    return value
