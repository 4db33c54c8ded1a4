"""Per-step GRU input: a 128-dim appearance embedding followed by six
spatial values ``[u/W, v/H, w/W, h/H, du/W, dv/H]``."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

SPATIAL_DIM = 6


def pair_feature(box, embedding, velocity, image_size):
    """``box`` is (left, top, width, height); ``velocity`` the center
    displacement per frame in pixels; ``image_size`` is (width, height)."""
    W, H = image_size
    left, top, w, h = box
    spatial = np.array([(left + w / 2) / W, (top + h / 2) / H, w / W, h / H, velocity[0] / W, velocity[1] / H])
    return np.concatenate([np.asarray(embedding, dtype=float), spatial])


def box_center(box):
    return np.array([box[0] + box[2] / 2.0, box[1] + box[3] / 2.0])


@dataclass
class AssociationSample:
    """Track history followed by one candidate (last row), oldest first."""

    sequence: np.ndarray
    label: int
    boxes: Optional[np.ndarray] = None
    frames: Optional[np.ndarray] = None

    def __post_init__(self):
        self.sequence = np.atleast_2d(np.asarray(self.sequence, dtype=float))
        if len(self.sequence) == 0:
            raise ValueError("association sample needs at least one step")
