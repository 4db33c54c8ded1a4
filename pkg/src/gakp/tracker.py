"""Per-frame tracking loop: predict, associate, update, spawn, age, delete."""
import enum
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kalman
from .appearance import normalize
from .association import AssociationConfig, NEUTRAL_SIMILARITY, build_cost_matrix, hungarian
from .errors import InputError, NumericalError
from .geometry import box_to_measurement, measurement_to_box
from .grunet.features import box_center, pair_feature
from .grunet.model import SEQUENCE_LENGTH
from .motio.io import MotTable

log = logging.getLogger(__name__)


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class Track:
    id: int
    motion: kalman.MotionState
    last_frame: int
    last_center: np.ndarray
    last_similarity: float = NEUTRAL_SIMILARITY
    history: deque = field(default_factory=lambda: deque(maxlen=SEQUENCE_LENGTH))
    status: TrackStatus = TrackStatus.TENTATIVE
    frames_since_update: int = 0
    hit_count: int = 1
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_box: Optional[np.ndarray] = None

    def appearance(self):
        """Normalized mean embedding over the stored history."""
        return normalize(np.mean([f[:-6] for f in self.history], axis=0))

    def box(self):
        return np.array(measurement_to_box(self.motion.mean[:4]))

    @property
    def confirmed(self):
        return self.status is TrackStatus.CONFIRMED


def _observe(track, box, embedding, frame, image_size):
    """Record a matched detection in the track's feature history."""
    dt = max(frame - track.last_frame, 1)
    center = box_center(box)
    vel = (center - track.last_center) / dt
    track.history.append(pair_feature(box, embedding, vel, image_size))
    v_now = track.motion.mean[4:6].copy()
    track.acceleration = (v_now - track.last_velocity) / dt
    track.last_velocity = v_now
    track.last_center = center
    track.last_box = np.asarray(box, dtype=float).copy()
    track.last_frame = frame


def replay_track(boxes, frames, features, target_frame, motion_cfg, similarity=NEUTRAL_SIMILARITY):
    """Rebuild a track from its matched detections and predict it to
    ``target_frame``. Used to compute explicit cost terms for mined pairs."""
    boxes = np.asarray(boxes, dtype=float)
    track = Track(0, kalman.initiate(box_to_measurement(boxes[0]), motion_cfg), int(frames[0]),
                  box_center(boxes[0]), last_box=boxes[0].copy())
    track.history.append(np.asarray(features[0], dtype=float))
    for box, f, feat in zip(boxes[1:], frames[1:], features[1:]):
        for _ in range(int(f) - track.last_frame):
            track.motion = kalman.predict(track.motion, motion_cfg, similarity)
        track.motion = kalman.update(track.motion, box_to_measurement(box), motion_cfg, similarity)
        dt = max(int(f) - track.last_frame, 1)
        v_now = track.motion.mean[4:6].copy()
        track.acceleration = (v_now - track.last_velocity) / dt
        track.last_velocity = v_now
        track.last_center = box_center(box)
        track.last_box = box.copy()
        track.last_frame = int(f)
        track.history.append(np.asarray(feat, dtype=float))
    for _ in range(int(target_frame) - track.last_frame):
        track.motion = kalman.predict(track.motion, motion_cfg, similarity)
    return track


@dataclass
class TrackerConfig:
    association: AssociationConfig = field(default_factory=AssociationConfig)
    motion: kalman.MotionModelConfig = field(default_factory=kalman.MotionModelConfig)
    n_init: int = 3
    max_age: int = 30
    min_confidence: float = 0.0
    emit_coasting: bool = False

    def __post_init__(self):
        if self.n_init < 1 or self.max_age < 1:
            raise InputError("tracker: n_init and max_age must be >= 1")


class Tracker:
    """Online tracker; one instance per sequence."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.tracks = []
        self._next_id = 1
        self._last_frame = None

    def _spawn(self, box, embedding, frame):
        mcfg = self.cfg.motion
        emb = embedding if embedding is not None else np.zeros(0)
        track = Track(self._next_id, kalman.initiate(box_to_measurement(box), mcfg), frame, box_center(box),
                      last_box=np.asarray(box, dtype=float).copy())
        track.history.append(pair_feature(box, emb, np.zeros(2), self.cfg.association.image_size))
        if self.cfg.n_init <= 1:
            track.status = TrackStatus.CONFIRMED
        self._next_id += 1
        self.tracks.append(track)

    def step(self, frame, boxes, confidences=None, embeddings=None):
        """Process one frame. Returns output rows
        ``(frame, id, left, top, width, height)`` for confirmed tracks."""
        if self._last_frame is not None and frame <= self._last_frame:
            raise InputError(f"tracker: frame {frame} is not after frame {self._last_frame}")
        self._last_frame = frame
        cfg, mcfg = self.cfg, self.cfg.motion
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        conf = np.ones(len(boxes)) if confidences is None else np.asarray(confidences, dtype=float)
        if len(conf) != len(boxes) or (embeddings is not None and len(embeddings) != len(boxes)):
            raise InputError(f"tracker: frame {frame}: boxes, confidences and embeddings differ in length")
        if np.any(~np.isfinite(boxes)) or np.any(boxes[:, 2:] <= 0):
            raise InputError(f"tracker: frame {frame}: invalid detection box")
        keep = conf >= cfg.min_confidence
        # canonical order makes the result independent of input ordering
        idx = np.flatnonzero(keep)
        idx = idx[np.lexsort((conf[idx], boxes[idx, 3], boxes[idx, 2], boxes[idx, 1], boxes[idx, 0]))]
        boxes = boxes[idx]
        emb = None if embeddings is None else np.asarray(embeddings, dtype=float)[idx]

        for t in list(self.tracks):
            try:
                t.motion = kalman.predict(t.motion, mcfg, t.last_similarity, track_id=t.id)
            except NumericalError as exc:
                log.warning("frame %d: dropping track %d: %s", frame, t.id, exc)
                self.tracks.remove(t)

        cm = build_cost_matrix(self.tracks, boxes, emb, frame, mcfg, cfg.association)
        assignment = hungarian(cm)

        failed = []
        for i, j in assignment.matches:
            t = self.tracks[i]
            c = float(cm.similarity[i, j])
            try:
                t.motion = kalman.update(t.motion, box_to_measurement(boxes[j]), mcfg, c, track_id=t.id)
            except NumericalError as exc:
                log.warning("frame %d: dropping track %d: %s", frame, t.id, exc)
                failed.append(t)
                continue
            t.last_similarity = c
            _observe(t, boxes[j], emb[j] if emb is not None else np.zeros(0), frame, cfg.association.image_size)
            t.hit_count += 1
            t.frames_since_update = 0
            if t.status is TrackStatus.TENTATIVE and t.hit_count >= cfg.n_init:
                t.status = TrackStatus.CONFIRMED

        for j in assignment.unmatched_detections:
            self._spawn(boxes[j], emb[j] if emb is not None else None, frame)

        for i in assignment.unmatched_tracks:
            t = self.tracks[i]
            t.frames_since_update += 1
            if t.status is TrackStatus.TENTATIVE or t.frames_since_update > cfg.max_age:
                t.status = TrackStatus.DELETED
        for t in failed:
            t.status = TrackStatus.DELETED
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]

        rows = []
        for t in sorted(self.tracks, key=lambda t: t.id):
            if t.confirmed and (t.frames_since_update == 0 or cfg.emit_coasting):
                rows.append((frame, t.id, *t.box()))
        return rows


@dataclass
class SequenceResult:
    table: MotTable
    frames: int
    seconds: float

    @property
    def hz(self):
        return self.frames / self.seconds if self.seconds > 0 else float("inf")


def run_sequence(detections, cfg, num_frames=None):
    """Track a whole detection table frame by frame (frames without
    detections still advance the tracks)."""
    groups = detections.frame_groups()
    last = num_frames if num_frames is not None else (max(groups) if groups else 0)
    tracker = Tracker(cfg)
    rows = []
    start = time.perf_counter()
    for f in range(1, last + 1):
        idx = groups.get(f, np.zeros(0, dtype=int))
        emb = None if detections.embeddings is None else detections.embeddings[idx]
        try:
            rows.extend(tracker.step(f, detections.boxes[idx], detections.conf[idx], emb))
        except InputError as exc:
            raise InputError(f"tracker: frame {f}: {exc}") from exc
    seconds = time.perf_counter() - start
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    table = MotTable.from_rows(arr[:, 0], arr[:, 1], arr[:, 2:6]).sorted() if len(arr) else \
        MotTable(np.zeros((0, 10)))
    return SequenceResult(table, last, seconds)
