"""Persistent vehicle identities via greedy nearest-centroid matching.

Matching is greedy by ascending Euclidean distance between the last known
track centroid and each new detection centroid, gated by a maximum match
distance. Ties break on lower track id, then lower detection index, so a
given input stream always produces the same id assignments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import UsageError
from .frame_io import BoundingBox, Detection


@dataclass
class Track:
    """One tracked vehicle and its accumulated per-frame state."""

    id: int
    centroid_history: list[tuple[int, float, float]] = field(default_factory=list)
    box_history: list[tuple[int, BoundingBox]] = field(default_factory=list)
    missing_frames: int = 0
    scaled_speed_history: list[tuple[int, float]] = field(default_factory=list)
    direction_history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def direction(self) -> tuple[float, float] | None:
        """Most recently stored unit direction, if any."""
        if not self.direction_history:
            return None
        _, dx, dy = self.direction_history[-1]
        return (dx, dy)

    def direction_at(self, frame_index: int) -> tuple[float, float] | None:
        """Unit direction as of the given frame (latest stored at or before it)."""
        best = None
        for frame, dx, dy in self.direction_history:
            if frame > frame_index:
                break
            best = (dx, dy)
        return best

    def store_direction(self, frame_index: int, dx: float, dy: float) -> None:
        if abs(math.hypot(dx, dy) - 1.0) > 1e-9:
            raise ValueError(f"direction ({dx}, {dy}) is not a unit vector")
        self.direction_history.append((frame_index, dx, dy))

    def last_centroid(self) -> tuple[float, float]:
        _, x, y = self.centroid_history[-1]
        return (x, y)

    def box_at(self, frame_index: int) -> BoundingBox | None:
        """Latest box recorded at or before the given frame."""
        best = None
        for frame, box in self.box_history:
            if frame > frame_index:
                break
            best = box
        return best

    def box_in_frame(self, frame_index: int) -> BoundingBox | None:
        """Box recorded exactly at the given frame, if the track was matched."""
        if self.box_history and self.box_history[-1][0] == frame_index:
            return self.box_history[-1][1]
        return None


def centroid_at(
    track: Track, frame_index: int, lookback: int
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Centroid pair (c1, c2) spanning `lookback` frames ending at frame_index.

    c2 is the centroid at frame_index or, when the track was not seen then,
    the most recent earlier one. c1 is resolved the same way at
    frame_index - lookback, falling back to the oldest entry when the history
    does not reach that far.
    """
    history = track.centroid_history
    if not history or history[0][0] > frame_index:
        raise LookupError(
            f"track {track.id} has no centroid at or before frame {frame_index}"
        )
    c2 = _latest_at_or_before(history, frame_index)
    target = frame_index - lookback
    if history[0][0] > target:
        _, x, y = history[0]
        c1 = (x, y)
    else:
        c1 = _latest_at_or_before(history, target)
    return c1, c2


def _latest_at_or_before(
    history: list[tuple[int, float, float]], frame_index: int
) -> tuple[float, float]:
    best = None
    for frame, x, y in history:
        if frame > frame_index:
            break
        best = (x, y)
    assert best is not None
    return best


@dataclass(frozen=True)
class TrackerEvents:
    registered: list[int]
    deregistered: list[int]


class CentroidTracker:
    """Single-owner track table; call update() once per frame in order."""

    def __init__(self, max_match_distance_px: float, deregister_after_frames: int = 15):
        if max_match_distance_px <= 0:
            raise UsageError("max_match_distance_px must be positive")
        if deregister_after_frames < 1:
            raise UsageError("deregister_after_frames must be >= 1")
        self.max_match_distance_px = max_match_distance_px
        self.deregister_after_frames = deregister_after_frames
        self.live: dict[int, Track] = {}
        self.archive: dict[int, Track] = {}
        self._next_id = 0
        self._last_frame = -1

    def update(self, detections: list[Detection], frame_index: int) -> TrackerEvents:
        """Match detections to live tracks, register new ones, age out lost ones."""
        if frame_index <= self._last_frame:
            raise UsageError(
                f"frame index {frame_index} does not exceed last processed "
                f"index {self._last_frame}"
            )
        for det in detections:
            if det.frame_index != frame_index:
                raise UsageError(
                    f"detection for frame {det.frame_index} passed to update "
                    f"of frame {frame_index}"
                )
        self._last_frame = frame_index

        candidates = []
        for track_id, track in self.live.items():
            tx, ty = track.last_centroid()
            for det_index, det in enumerate(detections):
                dist = math.hypot(det.box.cx - tx, det.box.cy - ty)
                if dist <= self.max_match_distance_px:
                    candidates.append((dist, track_id, det_index))
        candidates.sort()

        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        for dist, track_id, det_index in candidates:
            if track_id in matched_tracks or det_index in matched_dets:
                continue
            matched_tracks.add(track_id)
            matched_dets.add(det_index)
            self._append_observation(self.live[track_id], detections[det_index], frame_index)

        deregistered = []
        for track_id in list(self.live):
            if track_id in matched_tracks:
                continue
            track = self.live[track_id]
            track.missing_frames += 1
            if track.missing_frames >= self.deregister_after_frames:
                del self.live[track_id]
                deregistered.append(track_id)

        registered = []
        for det_index, det in enumerate(detections):
            if det_index in matched_dets:
                continue
            track = Track(self._next_id)
            self._next_id += 1
            self._append_observation(track, det, frame_index)
            self.live[track.id] = track
            self.archive[track.id] = track
            registered.append(track.id)

        return TrackerEvents(registered, deregistered)

    @staticmethod
    def _append_observation(track: Track, det: Detection, frame_index: int) -> None:
        track.centroid_history.append((frame_index, det.box.cx, det.box.cy))
        track.box_history.append((frame_index, det.box))
        track.missing_frames = 0
