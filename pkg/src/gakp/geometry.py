"""Bounding-box arithmetic.

Boxes are ``(left, top, width, height)`` in continuous pixel coordinates.
Measurements are ``(u, v, gamma, h)``: box center, aspect ratio ``w / h`` and
height, the 4-dim observation used by the Kalman filter.
"""
from typing import NamedTuple

import numpy as np


class BoundingBox(NamedTuple):
    left: float
    top: float
    width: float
    height: float

    def validate(self):
        if not all(np.isfinite(self)):
            raise ValueError(f"non-finite box {tuple(self)}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {tuple(self)}")
        return self

    @property
    def center(self):
        return self.left + self.width / 2.0, self.top + self.height / 2.0


class Measurement(NamedTuple):
    u: float
    v: float
    gamma: float
    h: float


def iou(a, b):
    """Intersection over union of two ``(left, top, width, height)`` boxes."""
    ax2, ay2 = a[0] + a[2], a[1] + a[3]
    bx2, by2 = b[0] + b[2], b[1] + b[3]
    iw = min(ax2, bx2) - max(a[0], b[0])
    ih = min(ay2, by2) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    # rounding in the union can push the ratio a hair above one
    return float(min(inter / union, 1.0))


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU between two ``(N, 4)`` / ``(M, 4)`` box arrays."""
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)


def box_to_measurement(box):
    left, top, w, h = box
    return Measurement(left + w / 2.0, top + h / 2.0, w / h, h)


def measurement_to_box(m):
    u, v, gamma, h = m
    w = gamma * h
    return BoundingBox(u - w / 2.0, v - h / 2.0, w, h)


def boxes_to_measurements(boxes):
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    return np.column_stack([b[:, 0] + b[:, 2] / 2, b[:, 1] + b[:, 3] / 2, b[:, 2] / b[:, 3], b[:, 3]])


def measurements_to_boxes(ms):
    m = np.asarray(ms, dtype=float).reshape(-1, 4)
    w = m[:, 2] * m[:, 3]
    return np.column_stack([m[:, 0] - w / 2, m[:, 1] - m[:, 3] / 2, w, m[:, 3]])
