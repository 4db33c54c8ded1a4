"""Online generation of labelled (track history, candidate) pairs from ground
truth and detections.

For each ground-truth box the positive is the highest-confidence detection
with IoU > 0.5; the negative is the detection with the largest overlap among
those with IoU < 0.5 (ties go to the nearest center). The history of a
sample is the ground-truth identity's previous positive detections, so it
looks like what a live track accumulates.
"""
import logging

import numpy as np

from ..appearance import normalize
from ..errors import InputError
from ..geometry import iou_matrix
from .features import AssociationSample, box_center, pair_feature

log = logging.getLogger(__name__)

POSITIVE_IOU = 0.5


def select_candidates(gt_box, det_boxes, det_conf):
    """Return ``(positive_index or None, negative_index or None)``."""
    if len(det_boxes) == 0:
        return None, None
    ious = iou_matrix([gt_box], det_boxes)[0]
    pos = None
    above = np.flatnonzero(ious > POSITIVE_IOU)
    if len(above):
        # highest confidence, then higher IoU, then lower index
        pos = int(min(above, key=lambda j: (-det_conf[j], -ious[j], j)))
    below = np.flatnonzero(ious < POSITIVE_IOU)
    neg = None
    if len(below):
        c = box_center(gt_box)
        dist = np.linalg.norm(np.column_stack([det_boxes[:, 0] + det_boxes[:, 2] / 2,
                                               det_boxes[:, 1] + det_boxes[:, 3] / 2]) - c, axis=1)
        neg = int(min(below, key=lambda j: (-ious[j], dist[j], j)))
    return pos, neg


def _positive_chains(gt, det, groups_det):
    """Per GT identity, the list of (frame, det_row) positives in frame order."""
    chains = {}
    for f, gidx in gt.frame_groups().items():
        didx = groups_det.get(f)
        for i in gidx:
            if didx is None:
                continue
            pos, neg = select_candidates(gt.boxes[i], det.boxes[didx], det.conf[didx])
            chains.setdefault(int(gt.ids[i]), [])
            if pos is not None:
                chains[int(gt.ids[i])].append((f, int(didx[pos])))
    return chains


def mine_training_pairs(gt, det, image_size, history_len=6, augment=2, rng_seed=0,
                        appearance_jitter=0.02, max_gap=30):
    """Labelled samples for GRU training.

    Each candidate is also emitted ``augment`` more times with its box scaled
    uniformly in [0.8, 1.2] about its center and its embedding perturbed by
    Gaussian noise of std ``appearance_jitter``."""
    if det.embeddings is None:
        raise InputError("grunet: training pairs need detection embeddings")
    groups_det = det.frame_groups()
    gt_groups = gt.frame_groups()
    if not set(gt_groups) & set(groups_det):
        raise InputError("grunet: ground truth and detections share no frames")
    rng = np.random.default_rng(rng_seed)

    chains = _positive_chains(gt, det, groups_det)
    # per-identity velocities along the positive chain
    chain_feats = {}
    for gid, chain in chains.items():
        feats, prev = [], None
        for f, j in chain:
            box = det.boxes[j]
            if prev is None or f - prev[0] > max_gap:
                vel = np.zeros(2)
            else:
                vel = (box_center(box) - box_center(det.boxes[prev[1]])) / (f - prev[0])
            feats.append((f, j, pair_feature(box, det.embeddings[j], vel, image_size)))
            prev = (f, j)
        chain_feats[gid] = feats

    samples = []
    for f, gidx in gt_groups.items():
        didx = groups_det.get(f)
        if didx is None:
            continue
        for i in gidx:
            gid = int(gt.ids[i])
            history = [e for e in chain_feats.get(gid, []) if e[0] < f][-history_len:]
            if not history or f - history[-1][0] > max_gap:
                continue
            # cut at a chain break so the history is one contiguous track
            start = 0
            for k in range(1, len(history)):
                if history[k][0] - history[k - 1][0] > max_gap:
                    start = k
            history = history[start:]
            last_f, last_j, _ = history[-1]
            last_c = box_center(det.boxes[last_j])
            hist_seq = np.array([h[2] for h in history])
            pos, neg = select_candidates(gt.boxes[i], det.boxes[didx], det.conf[didx])
            for cand, label in ((pos, 1), (neg, 0)):
                if cand is None:
                    continue
                j = int(didx[cand])
                for a in range(augment + 1):
                    box = det.boxes[j].copy()
                    emb = det.embeddings[j]
                    if a > 0:
                        s = rng.uniform(0.8, 1.2)
                        c = box_center(box)
                        box[2:] *= s
                        box[:2] = c - box[2:] / 2
                        if appearance_jitter > 0:
                            emb = normalize(emb + rng.normal(0.0, appearance_jitter, emb.shape))
                    vel = (box_center(box) - last_c) / (f - last_f)
                    cand_feat = pair_feature(box, emb, vel, image_size)
                    samples.append(AssociationSample(
                        np.vstack([hist_seq, cand_feat]), label,
                        boxes=np.vstack([det.boxes[[h[1] for h in history]], box]),
                        frames=np.array([h[0] for h in history] + [f])))
    n_pos, n_neg = label_balance(samples)
    log.info("mined %d samples (%d positive, %d negative)", len(samples), n_pos, n_neg)
    return samples


def label_balance(samples):
    n_pos = sum(1 for s in samples if s.label == 1)
    return n_pos, len(samples) - n_pos
