"""Association cost matrices and optimal assignment.

Modes:

``iou``         ``1 - IoU`` between the track's last detected box and the
                detection (no motion prediction).
``iou+motion``  ``1 - IoU + D / gate_threshold`` with the IoU taken against
                the predicted box and ``D`` the squared Mahalanobis distance.
``explicit``    weighted sum of squared mismatch terms
                ``D^2 + l_I (1 - IoU)^2 + l_v |dv|^2 + l_a |da|^2 + l_f |df|^2``.
``implicit``    ``1 - y`` with ``y`` the GRU similarity of the track history
                followed by the candidate detection.

Every mode gates cells whose Mahalanobis distance exceeds the chi-square
threshold; an optional ``max_cost`` gates expensive cells too.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import hungarian as _km
from .appearance import distance_matrix
from .errors import InputError
from .geometry import boxes_to_measurements, iou_matrix, measurements_to_boxes
from .grunet.features import box_center, pair_feature
from .grunet.model import predict_similarity
from .kalman import mahalanobis

log = logging.getLogger(__name__)

MODES = ("iou", "iou+motion", "explicit", "implicit")
MODE_ALIASES = {"iou_only": "iou", "iou_motion": "iou+motion", "iou+motion": "iou+motion"}
NEUTRAL_SIMILARITY = 0.5


def canonical_mode(mode):
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise InputError(f"association: unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    return mode


@dataclass
class ExplicitWeights:
    lambda_iou: float = 1.0
    lambda_v: float = 1.0
    lambda_a: float = 1.0
    lambda_f: float = 1.0

    def __post_init__(self):
        for name in ("lambda_iou", "lambda_v", "lambda_a", "lambda_f"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise InputError(f"association: {name} must be finite and non-negative, got {value}")

    def vector(self):
        return np.array([1.0, self.lambda_iou, self.lambda_v, self.lambda_a, self.lambda_f])


@dataclass
class AssociationConfig:
    mode: str = "implicit"
    weights: ExplicitWeights = field(default_factory=ExplicitWeights)
    model: object = None
    max_cost: Optional[float] = None
    literal_iou_term: bool = False
    image_size: tuple = (1920, 1080)
    history_len: int = 6

    def __post_init__(self):
        self.mode = canonical_mode(self.mode)


@dataclass
class CostMatrix:
    costs: np.ndarray
    gated: np.ndarray
    similarity: np.ndarray
    mahalanobis: np.ndarray

    @property
    def shape(self):
        return self.costs.shape


@dataclass
class Assignment:
    matches: list
    unmatched_tracks: list
    unmatched_detections: list


def explicit_terms(track, boxes, embeddings, frame, motion_cfg, literal_iou_term=False, d=None):
    """Squared mismatch terms ``[D^2, iou_term, |dv|^2, |da|^2, |df|^2]`` of one
    track against ``N`` detections, shape ``(N, 5)``."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    z = boxes_to_measurements(boxes)
    if d is None:
        d = np.atleast_1d(mahalanobis(track.motion, z, motion_cfg))
    ious = iou_matrix(measurements_to_boxes(track.motion.mean[:4]), boxes)[0]
    iou_term = ious ** 2 if literal_iou_term else (1.0 - ious) ** 2
    dt = max(frame - track.last_frame, 1)
    centers = np.column_stack([boxes[:, 0] + boxes[:, 2] / 2, boxes[:, 1] + boxes[:, 3] / 2])
    v_track = track.motion.mean[4:6]
    v_det = (centers - track.last_center) / dt
    dv = v_track - v_det
    a_det = (v_det - v_track) / dt
    da = track.acceleration - a_det
    if embeddings is None:
        df2 = np.zeros(len(boxes))
    else:
        df2 = distance_matrix(track.appearance(), embeddings)[0] ** 2
    return np.column_stack([d ** 2, iou_term, (dv ** 2).sum(1), (da ** 2).sum(1), df2])


def explicit_cost(track, box, embedding, frame, weights, motion_cfg, literal_iou_term=False):
    if weights.lambda_f > 0 and embedding is None:
        raise InputError("association: explicit cost with lambda_f > 0 needs a detection embedding")
    emb = None if embedding is None else np.atleast_2d(embedding)
    terms = explicit_terms(track, [box], emb, frame, motion_cfg, literal_iou_term)[0]
    return float(terms @ weights.vector())


def candidate_sequence(track, box, embedding, frame, image_size, history_len=6):
    """GRU input for one (track, detection) pair: the track's last
    ``history_len`` features followed by the candidate's."""
    dt = max(frame - track.last_frame, 1)
    vel = (box_center(box) - track.last_center) / dt
    hist = list(track.history)[-history_len:]
    return np.vstack(hist + [pair_feature(box, embedding, vel, image_size)])


def implicit_cost(model, track, box, embedding, frame, image_size=(1920, 1080), history_len=6):
    seq = candidate_sequence(track, box, embedding, frame, image_size, history_len)
    return 1.0 - float(predict_similarity(model, [seq])[0])


def build_cost_matrix(tracks, boxes, embeddings, frame, motion_cfg, cfg):
    """Fill the ``|tracks| x |detections|`` cost matrix for ``cfg.mode`` and
    gate it."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    nt, nd = len(tracks), len(boxes)
    costs = np.zeros((nt, nd))
    sim = np.full((nt, nd), NEUTRAL_SIMILARITY)
    dist = np.zeros((nt, nd))
    if nt == 0 or nd == 0:
        return CostMatrix(costs, np.zeros((nt, nd), bool), sim, dist)
    z = boxes_to_measurements(boxes)
    for i, t in enumerate(tracks):
        dist[i] = mahalanobis(t.motion, z, motion_cfg)
    gated = dist > motion_cfg.gate_threshold

    mode = cfg.mode
    if mode == "iou":
        ref = np.array([t.last_box if t.last_box is not None else measurements_to_boxes(t.motion.mean[:4])
                        for t in tracks])
        costs = 1.0 - iou_matrix(ref, boxes)
    elif mode == "iou+motion":
        pred = measurements_to_boxes(np.array([t.motion.mean[:4] for t in tracks]))
        costs = 1.0 - iou_matrix(pred, boxes) + dist / motion_cfg.gate_threshold
    elif mode == "explicit":
        if cfg.weights.lambda_f > 0 and embeddings is None:
            raise InputError("association: explicit mode with lambda_f > 0 needs detection embeddings")
        w = cfg.weights.vector()
        for i, t in enumerate(tracks):
            costs[i] = explicit_terms(t, boxes, embeddings, frame, motion_cfg, cfg.literal_iou_term, dist[i]) @ w
    else:
        if cfg.model is None:
            raise InputError("association: implicit mode needs a GRU model")
        if embeddings is None:
            raise InputError("association: implicit mode needs detection embeddings")
        costs = np.ones((nt, nd))
        cells = np.argwhere(~gated)
        if len(cells):
            seqs = [candidate_sequence(tracks[i], boxes[j], embeddings[j], frame, cfg.image_size, cfg.history_len)
                    for i, j in cells]
            y = predict_similarity(cfg.model, seqs)
            sim[cells[:, 0], cells[:, 1]] = y
            costs[cells[:, 0], cells[:, 1]] = 1.0 - y
    if cfg.max_cost is not None:
        gated |= costs > cfg.max_cost
    return CostMatrix(costs, gated, sim, dist)


def hungarian(cm):
    """Minimum-cost assignment on the gated matrix.

    Gated cells get a sentinel cost larger than any sum of real costs and the
    matrix is padded to square; pairs landing on sentinel or padding cells
    are reported as unmatched. Ties resolve to the lexicographically smallest
    assignment."""
    costs = np.asarray(cm.costs if isinstance(cm, CostMatrix) else cm, dtype=float)
    gated = cm.gated if isinstance(cm, CostMatrix) else np.zeros(costs.shape, bool)
    nt, nd = costs.shape
    if nt == 0 or nd == 0:
        return Assignment([], list(range(nt)), list(range(nd)))
    real = costs[~gated]
    if real.size and not np.all(np.isfinite(real)):
        raise InputError("association: non-finite cost in an ungated cell")
    n = max(nt, nd)
    sentinel = 2.0 * (n * (np.abs(real).max() if real.size else 0.0) + 1.0)
    square = np.zeros((n, n))
    square[:nt, :nd] = np.where(gated, sentinel, costs)
    col_of = _km.solve_square(square.tolist())
    matches = [(i, col_of[i]) for i in range(nt) if col_of[i] < nd and not gated[i, col_of[i]]]
    matched_t = {i for i, _ in matches}
    matched_d = {j for _, j in matches}
    return Assignment(matches, [i for i in range(nt) if i not in matched_t],
                      [j for j in range(nd) if j not in matched_d])


def fit_explicit_weights(samples, motion_cfg, image_size=(1920, 1080), l2=1e-4):
    """Fit the explicit weights by logistic regression on labelled pairs.

    The link probability is modelled as ``sigmoid(b - sum_k w_k t_k)`` over the
    five squared terms with ``w >= 0``; the returned weights are ``w_k / w_0``
    (the Mahalanobis term keeps unit weight) and the returned cost threshold
    ``b / w_0`` is where the fitted probability crosses 1/2. Only pairs that
    pass the Mahalanobis gate are used, as those are the only ones the cost
    ever ranks."""
    from .tracker import replay_track

    rows, labels = [], []
    for s in samples:
        if s.boxes is None or s.frames is None or len(s.boxes) < 2:
            continue
        track = replay_track(s.boxes[:-1], s.frames[:-1], s.sequence[:-1], s.frames[-1], motion_cfg)
        emb = s.sequence[-1:, :-6]
        terms = explicit_terms(track, s.boxes[-1:], emb, int(s.frames[-1]), motion_cfg)[0]
        if terms[0] > motion_cfg.gate_threshold ** 2:
            continue
        rows.append(terms)
        labels.append(s.label)
    if not rows or len(set(labels)) < 2:
        raise InputError("association: need gated-in positive and negative pairs to fit explicit weights")
    Phi = np.array(rows)
    y = np.array(labels, dtype=float)
    scale = Phi.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    P = Phi / scale

    def objective(theta):
        b, w = theta[0], theta[1:]
        logit = b - P @ w
        p = 1.0 / (1.0 + np.exp(-logit))
        loss = np.mean(np.logaddexp(0.0, logit) - y * logit) + l2 * (w @ w)
        g_logit = (p - y) / len(y)
        grad = np.r_[g_logit.sum(), -(P.T @ g_logit) + 2 * l2 * w]
        return loss, grad

    theta0 = np.r_[0.0, np.ones(5)]
    bounds = [(None, None), (1e-6, None)] + [(0.0, None)] * 4
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds)
    b, w = res.x[0], res.x[1:] / scale
    lam = w / w[0]
    weights = ExplicitWeights(*[float(x) for x in lam[1:]])
    threshold = float(b / w[0])
    log.info("explicit weights %s, cost threshold %.4g (%d pairs)", weights, threshold, len(y))
    return weights, threshold
