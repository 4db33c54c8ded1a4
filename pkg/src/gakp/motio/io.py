"""MOTChallenge text formats.

Each line is ``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``.
Detections use ``id = -1``; unused trailing columns are ``-1``.
"""
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..appearance import read_embeddings
from ..errors import FormatError, InputError

COLUMNS = ("frame", "id", "bb_left", "bb_top", "bb_width", "bb_height", "conf", "x", "y", "z")
_SPLIT = re.compile(r"[,\s]+")


@dataclass
class MotTable:
    """Rows of a MOTChallenge file, sorted by frame, with optional embeddings
    aligned row-for-row."""

    data: np.ndarray
    embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, 10)
        if self.embeddings is not None:
            self.embeddings = np.asarray(self.embeddings, dtype=float)
            if len(self.embeddings) != len(self.data):
                raise InputError("motio: embeddings do not align with table rows")

    def __len__(self):
        return len(self.data)

    @property
    def frames(self):
        return self.data[:, 0].astype(int)

    @property
    def ids(self):
        return self.data[:, 1].astype(int)

    @property
    def boxes(self):
        return self.data[:, 2:6]

    @property
    def conf(self):
        return self.data[:, 6]

    def frame_groups(self):
        """``{frame: row indices}`` in ascending frame order."""
        if not len(self):
            return {}
        frames = self.frames
        order = np.argsort(frames, kind="stable")
        uniq, starts = np.unique(frames[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        return {int(f): order[s:e] for f, s, e in zip(uniq, starts, bounds)}

    def subset(self, idx):
        emb = None if self.embeddings is None else self.embeddings[idx]
        return MotTable(self.data[idx], emb)

    @classmethod
    def from_rows(cls, frames, ids, boxes, conf=None, embeddings=None):
        n = len(frames)
        data = np.full((n, 10), -1.0)
        data[:, 0] = frames
        data[:, 1] = ids
        data[:, 2:6] = np.asarray(boxes, dtype=float).reshape(n, 4)
        data[:, 6] = 1.0 if conf is None else conf
        return cls(data, embeddings)

    def sorted(self):
        order = np.lexsort((self.ids, self.frames))
        return self.subset(order)


def _parse(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"motio: file not found: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = _SPLIT.split(line)
            if not 6 <= len(fields) <= 10:
                raise FormatError(f"motio: {path}:{lineno}: expected 6-10 fields, got {len(fields)}")
            try:
                values = [float(x) for x in fields]
            except ValueError as exc:
                raise FormatError(f"motio: {path}:{lineno}: {exc}") from exc
            values += [1.0] if len(values) == 6 else []
            values += [-1.0] * (10 - len(values))
            if not all(np.isfinite(values)):
                raise FormatError(f"motio: {path}:{lineno}: non-finite value")
            if values[0] < 1 or values[0] != int(values[0]):
                raise FormatError(f"motio: {path}:{lineno}: frame must be a positive integer")
            if values[4] <= 0 or values[5] <= 0:
                raise FormatError(f"motio: {path}:{lineno}: box width and height must be positive")
            rows.append(values)
    return np.array(rows, dtype=float).reshape(-1, 10)


def read_detections(path, embeddings=None):
    """Read a detection file. ``embeddings`` is a sidecar path or an array in
    file line order; it is reordered together with the rows."""
    data = _parse(path)
    emb = None
    if embeddings is not None:
        emb = read_embeddings(embeddings, expected_count=len(data)) if isinstance(embeddings, (str, Path)) \
            else np.asarray(embeddings, dtype=float)
        if len(emb) != len(data):
            raise InputError(f"motio: {len(emb)} embeddings for {len(data)} detections")
    order = np.argsort(data[:, 0], kind="stable")
    return MotTable(data[order], None if emb is None else emb[order])


def read_ground_truth(path, drop_ignored=True):
    """Read a ground-truth file; rows whose conf/consider flag is 0 are dropped
    by default, as in the MOTChallenge evaluation."""
    data = _parse(path)
    if drop_ignored:
        data = data[data[:, 6] != 0]
    order = np.lexsort((data[:, 1], data[:, 0]))
    return MotTable(data[order])


read_results = read_ground_truth


def _fmt_world(x):
    return "-1" if x == -1 else f"{x:.2f}"


def format_row(row):
    return (f"{int(row[0])},{int(row[1])},{row[2]:.2f},{row[3]:.2f},{row[4]:.2f},{row[5]:.2f},{row[6]:.6f},"
            f"{_fmt_world(row[7])},{_fmt_world(row[8])},{_fmt_world(row[9])}")


def write_table(table, path):
    """Write rows in table order with fixed float formatting."""
    with open(path, "w") as fh:
        for row in table.data:
            fh.write(format_row(row) + "\n")


def write_results(trajectories, path):
    """Write tracker output in submission format, frame-major then id order.

    ``trajectories`` is a MotTable or an iterable of
    ``(frame, id, left, top, width, height)``."""
    if isinstance(trajectories, MotTable):
        rows = trajectories.data[:, :6]
    else:
        rows = np.asarray(list(trajectories), dtype=float).reshape(-1, 6)
    order = np.lexsort((rows[:, 1], rows[:, 0]))
    with open(path, "w") as fh:
        for f, i, l, t, w, h in rows[order]:
            fh.write(f"{int(f)},{int(i)},{l:.2f},{t:.2f},{w:.2f},{h:.2f},1,-1,-1,-1\n")
