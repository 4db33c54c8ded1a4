"""End-to-end helpers shared by the CLI and the benchmark tests: mine pairs
from training scenes, fit both association models, track and evaluate."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .association import AssociationConfig, ExplicitWeights, MODES, canonical_mode, fit_explicit_weights
from .errors import InputError
from .grunet import AdamState, init_for_samples, mine_training_pairs, train
from .geometry import boxes_to_measurements, iou_matrix
from .kalman import MotionModelConfig
from .motio import SyntheticSceneConfig, combine_reports, evaluate, generate_synthetic
from .tracker import TrackerConfig, run_sequence

log = logging.getLogger(__name__)

# cost gates applied per mode when none is configured
DEFAULT_MAX_COST = {"iou": 0.7, "iou+motion": 1.2, "explicit": None, "implicit": 0.9}
# the benchmark pools this many consecutive seeds of the scene
BENCHMARK_SEQUENCES = 5
TRAINING_SCENES = 12


@dataclass
class TrainingConfig:
    """GRU training settings. Two epochs over twelve augmented scenes is
    where held-out AUC peaks on the synthetic benchmark; more epochs
    overfit the identity directions of the training scenes."""
    epochs: int = 2
    batch_size: int = 64
    learning_rate: float = 0.002
    decay_rate: float = 0.1
    decay_every_epochs: int = 20
    hidden_size: int = 134
    augment: int = 2
    seed: int = 0


@dataclass
class LearnedAssociation:
    model: object
    weights: ExplicitWeights
    explicit_threshold: float
    history: object = field(default=None, repr=False)
    samples: list = field(default_factory=list, repr=False)


def mine_scenes(scenes, image_size, augment=2, seed=0):
    samples = []
    for k, (gt, det) in enumerate(scenes):
        samples += mine_training_pairs(gt, det, image_size, augment=augment, rng_seed=seed + k)
    return samples


def train_gru(samples, tcfg, validation=None):
    model = init_for_samples(samples, tcfg.hidden_size, seed=tcfg.seed)
    opt = AdamState(learning_rate=tcfg.learning_rate, decay_rate=tcfg.decay_rate,
                    decay_every_epochs=tcfg.decay_every_epochs)
    return train(model, samples, opt, epochs=tcfg.epochs, batch_size=tcfg.batch_size, rng_seed=tcfg.seed,
                 validation=validation)


def fit_weights(scenes, image_size, motion_cfg, seed=0):
    """Explicit weights fitted on un-augmented pairs, or unit weights with no
    cost threshold when the scenes hold too few usable pairs."""
    plain = mine_scenes(scenes, image_size, 0, seed)
    try:
        return fit_explicit_weights(plain, motion_cfg, image_size)
    except InputError as exc:
        log.warning("keeping unit explicit weights: %s", exc)
        return ExplicitWeights(), None


def learn_association(scenes, image_size, tcfg, motion_cfg=None):
    motion_cfg = motion_cfg or MotionModelConfig()
    samples = mine_scenes(scenes, image_size, tcfg.augment, tcfg.seed)
    model, history = train_gru(samples, tcfg)
    weights, threshold = fit_weights(scenes, image_size, motion_cfg, tcfg.seed)
    return LearnedAssociation(model, weights, threshold, history, samples)


def tracker_config(mode, learned=None, motion_cfg=None, image_size=(1920, 1080), max_cost="default", **kw):
    acfg = AssociationConfig(mode=mode, image_size=tuple(image_size))
    if max_cost == "default":
        max_cost = learned.explicit_threshold if acfg.mode == "explicit" and learned else \
            DEFAULT_MAX_COST[acfg.mode]
    acfg.max_cost = max_cost
    if learned is not None:
        acfg.model = learned.model
        acfg.weights = learned.weights
    return TrackerConfig(association=acfg, motion=motion_cfg or MotionModelConfig(), **kw)


def ablate(scene_cfg, learned, modes=MODES, sequences=BENCHMARK_SEQUENCES, **tracker_kw):
    """Track synthetic scenes with every association mode.

    ``sequences`` scenes are generated with consecutive seeds starting at
    ``scene_cfg.seed``; their scores are pooled. Returns
    ``{mode: EvalReport}``."""
    image_size = (scene_cfg.image_width, scene_cfg.image_height)
    per_mode = {canonical_mode(m): [] for m in modes}
    for k in range(sequences):
        cfg = replace(scene_cfg, seed=scene_cfg.seed + k)
        gt, det = generate_synthetic(cfg)
        for mode in per_mode:
            res = run_sequence(det, tracker_config(mode, learned, image_size=image_size, **tracker_kw),
                               num_frames=cfg.num_frames)
            per_mode[mode].append(evaluate(gt, res.table, hz=res.hz))
    return {m: reps[0] if len(reps) == 1 else combine_reports(reps) for m, reps in per_mode.items()}


def training_scenes(scene_cfg, count=TRAINING_SCENES, seed_offset=1000):
    return [generate_synthetic(replace(scene_cfg, seed=scene_cfg.seed + seed_offset + k)) for k in range(count)]


def tuning_sequences(gt, det, min_length=10):
    """Per ground-truth identity, runs of consecutive frames with a matched
    detection (IoU > 0.5, best overlap). Returns ``(measurements, true_states)``
    pairs for :func:`gakp.kalman.tune_noise_weights`; true rates are the
    central differences of the ground-truth measurements."""
    det_groups = det.frame_groups()
    out = []
    for gid in np.unique(gt.ids):
        rows = np.flatnonzero(gt.ids == gid)
        rows = rows[np.argsort(gt.frames[rows])]
        frames = gt.frames[rows].astype(int)
        truth = boxes_to_measurements(gt.boxes[rows])
        rate = np.gradient(truth, axis=0) if len(truth) > 1 else np.zeros_like(truth)
        run_z, run_x, last = [], [], None
        for k, f in enumerate(frames):
            didx = det_groups.get(f)
            z = None
            if didx is not None:
                ious = iou_matrix(gt.boxes[rows[k]][None], det.boxes[didx])[0]
                if ious.max() > 0.5:
                    z = boxes_to_measurements(det.boxes[didx[int(np.argmax(ious))]][None])[0]
            if z is None or (last is not None and f != last + 1):
                if len(run_z) >= min_length:
                    out.append((np.array(run_z), np.array(run_x)))
                run_z, run_x = [], []
            if z is not None:
                run_z.append(z)
                run_x.append(np.r_[truth[k], rate[k]])
            last = f
        if len(run_z) >= min_length:
            out.append((np.array(run_z), np.array(run_x)))
    return out
