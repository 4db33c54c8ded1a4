"""Synthetic tracking scenes: walkers crossing a horizontal band, noisy
detections with misses and clutter, and per-detection embeddings."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..appearance import EMBEDDING_DIM, synth_embedding, write_embeddings
from ..config import to_kv
from ..errors import InputError
from .io import MotTable, write_table


@dataclass
class SyntheticSceneConfig:
    image_width: int = 1920
    image_height: int = 1080
    num_frames: int = 100
    num_identities: int = 20
    birth_frame_range: tuple[int, ...] = (1, 40)
    lifetime_range: tuple[int, ...] = (40, 100)
    speed_range: tuple[float, ...] = (3.0, 8.0)
    height_range: tuple[float, ...] = (80.0, 160.0)
    aspect_ratio: float = 0.41
    band: tuple[float, ...] = (0.35, 0.65)
    motion_noise_sigma: float = 0.4
    detection_noise_sigma: float = 2.0
    miss_probability: float = 0.1
    false_positive_rate: float = 3.0
    appearance_noise_sigma: float = 0.03
    occlusion_threshold: float = 0.5
    occlusion_miss_probability: float = 0.9
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_probability", "occlusion_miss_probability", "occlusion_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise InputError(f"synthetic: {name} must be in [0, 1]")
        for name in ("motion_noise_sigma", "detection_noise_sigma", "appearance_noise_sigma",
                     "false_positive_rate"):
            if getattr(self, name) < 0:
                raise InputError(f"synthetic: {name} must be non-negative")
        if self.num_frames < 0 or self.num_identities < 0:
            raise InputError("synthetic: counts must be non-negative")


def _trajectories(cfg, rng):
    W, H = cfg.image_width, cfg.image_height
    rows = []
    for k in range(cfg.num_identities):
        birth = int(rng.integers(cfg.birth_frame_range[0], cfg.birth_frame_range[1] + 1))
        life = int(rng.integers(cfg.lifetime_range[0], cfg.lifetime_range[1] + 1))
        direction = 1.0 if k % 2 == 0 else -1.0
        speed = rng.uniform(*cfg.speed_range)
        h = rng.uniform(*cfg.height_range)
        w = cfg.aspect_ratio * h
        u = W * (rng.uniform(0.05, 0.6) if direction > 0 else rng.uniform(0.4, 0.95))
        v = H * rng.uniform(*cfg.band)
        vel = np.array([direction * speed, rng.normal(0.0, 0.3)])
        for f in range(birth, min(birth + life, cfg.num_frames + 1)):
            if not (0 <= u < W and 0 <= v < H):
                break
            rows.append((f, k + 1, u - w / 2, v - h / 2, w, h))
            vel = vel + rng.normal(0.0, cfg.motion_noise_sigma, 2)
            u, v = u + vel[0], v + vel[1]
    return rows


def occluded(boxes, threshold):
    """Boxes covered by a closer box (lower bottom edge) over more than
    ``threshold`` of their area."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    out = np.zeros(len(boxes), dtype=bool)
    bottom = boxes[:, 1] + boxes[:, 3]
    for i, (l, t, w, h) in enumerate(boxes):
        iw = np.minimum(l + w, boxes[:, 0] + boxes[:, 2]) - np.maximum(l, boxes[:, 0])
        ih = np.minimum(t + h, bottom) - np.maximum(t, boxes[:, 1])
        cover = np.clip(iw, 0, None) * np.clip(ih, 0, None) / (w * h)
        closer = bottom > bottom[i]
        closer[i] = False
        out[i] = np.any(closer & (cover > threshold))
    return out


def generate_synthetic(cfg):
    """Return ``(ground_truth, detections)``; detections carry embeddings.

    Detections are GT boxes plus Gaussian noise, dropped with the miss
    probability (and with ``occlusion_miss_probability`` when mostly covered
    by a closer walker), plus a Poisson number of uniform false positives per
    frame.
    Everything is a deterministic function of ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    gt_rows = sorted(_trajectories(cfg, rng))
    gt = MotTable.from_rows([r[0] for r in gt_rows], [r[1] for r in gt_rows],
                            [r[2:] for r in gt_rows]) if gt_rows else MotTable(np.zeros((0, 10)))

    by_frame = gt.frame_groups()
    det_rows, det_ident = [], []
    sigma = cfg.detection_noise_sigma
    fp_ident = 0
    for f in range(1, cfg.num_frames + 1):
        idx = by_frame.get(f, np.zeros(0, dtype=int))
        hidden = occluded(gt.boxes[idx], cfg.occlusion_threshold)
        for i, occ in zip(idx, hidden):
            drop = rng.random() < cfg.miss_probability
            if occ and rng.random() < cfg.occlusion_miss_probability:
                drop = True
            if drop:
                continue
            box = gt.boxes[i] + rng.normal(0.0, sigma, 4) if sigma > 0 else gt.boxes[i].copy()
            box[2:] = np.maximum(box[2:], 1.0)
            det_rows.append((f, -1, *box, rng.uniform(0.5, 1.0)))
            det_ident.append(int(gt.ids[i]))
        for _ in range(rng.poisson(cfg.false_positive_rate) if cfg.false_positive_rate > 0 else 0):
            h = rng.uniform(*cfg.height_range)
            w = cfg.aspect_ratio * h
            left = rng.uniform(0, cfg.image_width - w)
            top = rng.uniform(0, cfg.image_height - h)
            fp_ident -= 1
            det_rows.append((f, -1, left, top, w, h, rng.uniform(0.3, 0.7)))
            det_ident.append(fp_ident)
    n = len(det_rows)
    emb = np.array([synth_embedding(ident, cfg.appearance_noise_sigma, cfg.seed, draw=j)
                    for j, ident in enumerate(det_ident)]).reshape(n, EMBEDDING_DIM)
    arr = np.array(det_rows, dtype=float).reshape(n, 7)
    det = MotTable.from_rows(arr[:, 0], arr[:, 1], arr[:, 2:6], arr[:, 6], emb)
    det.identities = np.array(det_ident, dtype=int)
    return gt, det


def write_scene(cfg, out_dir):
    """Write ``gt.txt``, ``det.txt``, ``det.emb`` and the scene config
    (keys prefixed ``scene.`` so it can be passed back as a run config)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt, det = generate_synthetic(cfg)
    write_table(gt, out / "gt.txt")
    write_table(det, out / "det.txt")
    write_embeddings(out / "det.emb", det.embeddings)
    (out / "scene.cfg").write_text(to_kv(cfg, prefix="scene."))
    return gt, det


def crossing_scene(seed=0, num_frames=60, speed=5.0, height=120.0, offset=4.0, detection_noise_sigma=2.0,
                   appearance_noise_sigma=0.03, image_size=(1920, 1080), embedding_dim=EMBEDDING_DIM):
    """Two walkers of equal size on nearly the same row, moving toward each
    other and passing midway through the sequence. Returns
    ``(ground_truth, detections)`` with one embedding per detection.

    The crossing point is jittered by up to one step per seed so the closest
    approach does not always land on a frame boundary."""
    rng = np.random.default_rng(seed)
    W, H = image_size
    w = 0.41 * height
    mid = W / 2 + rng.uniform(-speed, speed)
    half = speed * (num_frames - 1) / 2
    gt_rows, det_rows, ident = [], [], []
    for f in range(1, num_frames + 1):
        t = f - 1
        for k, (u0, direction, v) in enumerate(((mid - half, 1.0, H / 2), (mid + half, -1.0, H / 2 + offset))):
            u = u0 + direction * speed * t
            box = np.array([u - w / 2, v - height / 2, w, height])
            gt_rows.append((f, k + 1, *box))
            noisy = box + rng.normal(0.0, detection_noise_sigma, 4)
            noisy[2:] = np.maximum(noisy[2:], 1.0)
            det_rows.append((f, -1, *noisy, 1.0))
            ident.append(k + 1)
    g = np.array(gt_rows)
    d = np.array(det_rows)
    emb = np.array([synth_embedding(i, appearance_noise_sigma, seed, draw=j, dim=embedding_dim)
                    for j, i in enumerate(ident)])
    gt = MotTable.from_rows(g[:, 0], g[:, 1], g[:, 2:6])
    det = MotTable.from_rows(d[:, 0], d[:, 1], d[:, 2:6], d[:, 6], emb)
    det.identities = np.array(ident, dtype=int)
    return gt, det
