"""Command-line interface.

Every command reads an optional ``key = value`` run config (``--config``);
explicit flags override file values, which override the defaults. Keys
prefixed ``scene.`` configure the synthetic scene generator.

    gakp synth   --out DIR
    gakp train   --gt gt.txt --det det.txt --embeddings det.emb --out model.gru
    gakp track   --det det.txt --embeddings det.emb --model model.gru --mode implicit --out res.txt
    gakp eval    --gt gt.txt --results res.txt [--csv report.csv] [--overlay boxes.csv]
    gakp ablate  --out DIR
    gakp tune    --gt gt.txt --det det.txt
"""
import argparse
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .association import MODES, ExplicitWeights, canonical_mode
from .config import from_kv, read_kv_file, split_prefixed, to_kv
from .errors import GakpError
from .grunet import GruModel, load_model, save_model
from .grunet.model import HIDDEN_SIZE, SEQUENCE_LENGTH
from .grunet.training import auc
from .kalman import CHI2_95_4DOF, MotionModelConfig, tune_noise_weights
from .motio import (SyntheticSceneConfig, combine_reports, evaluate, format_csv, format_table, generate_synthetic, read_detections,
                    read_ground_truth, read_results, write_results, write_scene)
from .pipeline import (BENCHMARK_SEQUENCES, TRAINING_SCENES, LearnedAssociation, TrainingConfig,
                       fit_weights, learn_association, mine_scenes, train_gru, tracker_config, training_scenes,
                       tuning_sequences)
from .tracker import run_sequence

log = logging.getLogger("gakp")

EXIT_ERROR = 2
EXIT_DIVERGED = 3


@dataclass
class RunConfig:
    """Every tunable of the pipeline. Unset explicit weights are fitted by
    ``train`` / ``ablate`` or read from the weights file next to the model."""
    mode: str = "implicit"
    # motion model
    gate_threshold: float = CHI2_95_4DOF
    lambda_c: float = 0.5
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    scale_process_noise: bool = True
    # association
    lambda_iou: Optional[float] = None
    lambda_v: Optional[float] = None
    lambda_a: Optional[float] = None
    lambda_f: Optional[float] = None
    explicit_threshold: Optional[float] = None
    max_cost: Optional[float] = None
    literal_iou_term: bool = False
    # lifecycle
    n_init: int = 3
    max_age: int = 30
    min_confidence: float = 0.0
    emit_coasting: bool = False
    # GRU training
    epochs: int = 2
    batch_size: int = 64
    lr: float = 0.002
    decay_rate: float = 0.1
    decay_every_epochs: int = 20
    hidden_size: int = HIDDEN_SIZE
    sequence_length: int = SEQUENCE_LENGTH
    augment: int = 2
    validation_fraction: float = 0.2
    train_scenes: int = TRAINING_SCENES
    sequences: int = BENCHMARK_SEQUENCES
    # general
    seed: int = 0
    image_width: int = 1920
    image_height: int = 1080
    # paths
    gt: Optional[str] = None
    det: Optional[str] = None
    embeddings: Optional[str] = None
    model: Optional[str] = None
    results: Optional[str] = None
    out: Optional[str] = None

    def __post_init__(self):
        self.mode = canonical_mode(self.mode)
        if self.sequences < 1:
            raise GakpError("cli: sequences must be at least 1")

    @property
    def image_size(self):
        return (self.image_width, self.image_height)

    def motion(self):
        return MotionModelConfig(lambda_c=self.lambda_c, gate_threshold=self.gate_threshold,
                                 std_weight_position=self.std_weight_position,
                                 std_weight_velocity=self.std_weight_velocity,
                                 scale_process_noise=self.scale_process_noise)

    def training(self):
        return TrainingConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.lr,
                              decay_rate=self.decay_rate, decay_every_epochs=self.decay_every_epochs,
                              hidden_size=self.hidden_size, augment=self.augment, seed=self.seed)

    def weights(self):
        values = [getattr(self, k) for k in ("lambda_iou", "lambda_v", "lambda_a", "lambda_f")]
        if all(v is None for v in values):
            return None
        return ExplicitWeights(*[1.0 if v is None else v for v in values])


# flag name -> RunConfig field, for flags shared by several commands
FLAG_FIELDS = {"seed": "seed", "mode": "mode", "out": "out", "gate_threshold": "gate_threshold",
               "lambda_c": "lambda_c", "max_age": "max_age", "n_init": "n_init", "epochs": "epochs",
               "batch_size": "batch_size", "lr": "lr", "gt": "gt", "det": "det", "embeddings": "embeddings",
               "model": "model", "results": "results", "max_cost": "max_cost", "sequences": "sequences"}


def load_config(args):
    """Resolve ``(RunConfig, SyntheticSceneConfig)`` from defaults, the config
    file and the flags, in increasing precedence."""
    mapping = read_kv_file(args.config) if getattr(args, "config", None) else {}
    scene_kv, run_kv = split_prefixed(mapping, "scene.")
    run = from_kv(RunConfig, run_kv)
    scene = from_kv(SyntheticSceneConfig, scene_kv)
    overrides = {FLAG_FIELDS[k]: v for k, v in vars(args).items() if k in FLAG_FIELDS and v is not None}
    run = replace(run, **overrides)
    if "seed" in overrides or "seed" in run_kv:
        scene = replace(scene, seed=run.seed)
    return run, scene


def _require(run, *names):
    missing = [n for n in names if getattr(run, n) is None]
    if missing:
        raise GakpError(f"cli: missing required option(s): {', '.join('--' + n.replace('_', '-') for n in missing)}")


def _weights_path(model_path):
    return Path(str(model_path) + ".weights")


def _split_validation(samples, fraction, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_val = int(round(fraction * len(samples)))
    return [samples[i] for i in order[n_val:]], [samples[i] for i in order[:n_val]]


def _print_history(history):
    for k, loss in enumerate(history.train_loss):
        line = f"epoch {k + 1:3d}  lr {history.learning_rate[k]:.2e}  train_loss {loss:.5f}"
        if history.val_loss:
            line += f"  val_loss {history.val_loss[k]:.5f}  val_auc {history.val_auc[k]:.4f}"
        print(line)


def cmd_synth(args):
    run, scene = load_config(args)
    out = Path(run.out or "scene")
    gt, det = write_scene(scene, out)
    print(f"wrote {out / 'gt.txt'} ({len(gt)} rows), {out / 'det.txt'} ({len(det)} rows), "
          f"{out / 'det.emb'}, {out / 'scene.cfg'}")
    return 0


def cmd_train(args):
    run, _ = load_config(args)
    _require(run, "gt", "det", "embeddings", "out")
    gt = read_ground_truth(run.gt)
    det = read_detections(run.det, run.embeddings)
    tcfg = run.training()
    samples = mine_scenes([(gt, det)], run.image_size, tcfg.augment, tcfg.seed)
    train_set, val_set = _split_validation(samples, run.validation_fraction, run.seed)
    print(f"mined {len(samples)} samples: {len(train_set)} train, {len(val_set)} validation")
    model, history = train_gru(train_set, tcfg, validation=val_set or None)
    _print_history(history)
    save_model(model, run.out)
    weights, threshold = fit_weights([(gt, det)], run.image_size, run.motion(), tcfg.seed)
    wpath = _weights_path(run.out)
    wpath.write_text("".join(f"{k} = {v!r}\n" for k, v in asdict(weights).items())
                     + (f"explicit_threshold = {threshold!r}\n" if threshold is not None else ""))
    print(f"wrote {run.out} and {wpath}")
    if args.figure and history.train_loss:
        from .plots import plot_training
        print(f"wrote {plot_training(history, args.figure)}")
    return 0


def _learned_from_files(run):
    """Model and explicit weights for ``track``: the config wins, then the
    weights file written next to the model, then unit weights."""
    model = load_model(run.model) if run.model else None
    weights, threshold = run.weights(), run.explicit_threshold
    if weights is None and run.model and _weights_path(run.model).exists():
        kv = read_kv_file(_weights_path(run.model))
        weights = from_kv(ExplicitWeights, {k: v for k, v in kv.items() if k != "explicit_threshold"})
        if threshold is None and "explicit_threshold" in kv:
            threshold = float(kv["explicit_threshold"])
    return LearnedAssociation(model, weights or ExplicitWeights(), threshold)


def _tracker_config(run, learned):
    max_cost = run.max_cost if run.max_cost is not None else "default"
    if run.mode == "explicit" and run.max_cost is None and learned.explicit_threshold is None:
        max_cost = None
    cfg = tracker_config(run.mode, learned, run.motion(), run.image_size, max_cost=max_cost,
                         n_init=run.n_init, max_age=run.max_age, min_confidence=run.min_confidence,
                         emit_coasting=run.emit_coasting)
    cfg.association.literal_iou_term = run.literal_iou_term
    cfg.association.history_len = run.sequence_length - 1
    return cfg


def cmd_track(args):
    run, _ = load_config(args)
    _require(run, "det", "out")
    if run.mode == "implicit" and not run.model:
        raise GakpError("cli: implicit mode needs a trained model (--model)")
    if run.mode in ("explicit", "implicit") and not run.embeddings:
        raise GakpError(f"cli: {run.mode} mode needs detection embeddings (--embeddings)")
    det = read_detections(run.det, run.embeddings)
    learned = _learned_from_files(run)
    num_frames = int(det.frames.max()) if len(det) else 0
    res = run_sequence(det, _tracker_config(run, learned), num_frames=num_frames)
    write_results(res.table, run.out)
    print(f"tracked {res.frames} frames in {res.seconds:.3f} s ({res.hz:.1f} Hz), "
          f"{len(np.unique(res.table.ids))} tracks -> {run.out}")
    return 0


def cmd_eval(args):
    run, _ = load_config(args)
    _require(run, "gt", "results")
    gt = read_ground_truth(run.gt)
    res = read_results(run.results)
    report = evaluate(gt, res, hz=args.hz if args.hz is not None else float("nan"))
    names = [Path(run.results).stem]
    print(format_table([report], names))
    print()
    print(format_csv([report], names), end="")
    if args.csv:
        Path(args.csv).write_text(format_csv([report], names))
    if args.overlay:
        _write_overlay(gt, res, args.overlay)
        print(f"wrote {args.overlay}")
    if args.figure:
        from .plots import plot_trajectories
        print(f"wrote {plot_trajectories(gt, res, args.figure, run.image_size)}")
    return 0


def _write_overlay(gt, res, path):
    """Per-frame boxes of both tables in one CSV for external plotting."""
    with open(path, "w") as fh:
        fh.write("frame,source,id,left,top,width,height\n")
        for name, table in (("gt", gt), ("track", res)):
            for f, i, (x, y, w, h) in zip(table.frames, table.ids, table.boxes):
                fh.write(f"{int(f)},{name},{int(i)},{x:.2f},{y:.2f},{w:.2f},{h:.2f}\n")


def cmd_ablate(args):
    run, scene = load_config(args)
    image_size = (scene.image_width, scene.image_height)
    run = replace(run, image_width=scene.image_width, image_height=scene.image_height)
    tcfg = run.training()
    scenes = training_scenes(scene, run.train_scenes)
    if run.model:
        learned = _learned_from_files(run)
        if run.weights() is None and not _weights_path(run.model).exists():
            learned.weights, learned.explicit_threshold = fit_weights(scenes, image_size, run.motion(), tcfg.seed)
    else:
        print(f"training on {run.train_scenes} synthetic scenes for {tcfg.epochs} epochs")
        learned = learn_association(scenes, image_size, tcfg, run.motion())
        _print_history(learned.history)
    if run.weights() is not None:
        learned.weights = run.weights()
    if run.explicit_threshold is not None:
        learned.explicit_threshold = run.explicit_threshold
    per_mode = {mode: [] for mode in MODES}
    for k in range(run.sequences):
        gt, det = generate_synthetic(replace(scene, seed=scene.seed + k))
        for mode in MODES:
            res = run_sequence(det, _tracker_config(replace(run, mode=mode), learned), num_frames=scene.num_frames)
            per_mode[mode].append(evaluate(gt, res.table, hz=res.hz))
    reports = [combine_reports(per_mode[mode]) for mode in MODES]
    print(format_table(reports, list(MODES)))
    print()
    print(format_csv(reports, list(MODES)), end="")
    if run.out:
        from .plots import plot_ablation, plot_training
        out = Path(run.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(format_csv(reports, list(MODES)))
        (out / "run.cfg").write_text(to_kv(run) + to_kv(scene, prefix="scene."))
        written = [out / "ablation.csv", out / "run.cfg", plot_ablation(reports, list(MODES), out / "ablation.png")]
        if learned.history is not None and learned.history.train_loss:
            written.append(plot_training(learned.history, out / "training.png"))
        if learned.model is not None:
            save_model(learned.model, out / "model.gru")
            written.append(out / "model.gru")
        print("wrote " + ", ".join(str(p) for p in written))
    return 0


def cmd_tune(args):
    run, scene = load_config(args)
    if run.gt and run.det:
        seqs = tuning_sequences(read_ground_truth(run.gt), read_detections(run.det))
    else:
        seqs = tuning_sequences(*generate_synthetic(scene))
    if not seqs:
        raise GakpError("cli: no contiguous matched runs to tune on")
    wp, wv, table = tune_noise_weights(seqs, run.motion())
    print("std_weight_position,std_weight_velocity,mean_nees")
    for p, v, m in table:
        print(f"{p:.6g},{v:.6g},{m:.4f}")
    print(f"\nbest: std_weight_position = {wp:.6g}\n      std_weight_velocity = {wv:.6g}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run config file")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gakp", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def track_flags(sp):
        sp.add_argument("--gate-threshold", type=float)
        sp.add_argument("--lambda-c", type=float)
        sp.add_argument("--max-age", type=int)
        sp.add_argument("--n-init", type=int)
        sp.add_argument("--max-cost", type=float)

    def train_flags(sp):
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--lr", type=float)

    sp = sub.add_parser("synth", parents=[common], help="generate a synthetic scene")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", parents=[common], help="mine pairs and train the GRU")
    for name in ("--gt", "--det", "--embeddings"):
        sp.add_argument(name)
    sp.add_argument("--out", help="model file to write")
    sp.add_argument("--figure", help="write the loss curve to this image file")
    train_flags(sp)
    sp.add_argument("--lambda-c", type=float)
    sp.add_argument("--gate-threshold", type=float)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("track", parents=[common], help="run the tracker on a detection file")
    for name in ("--det", "--embeddings", "--model"):
        sp.add_argument(name)
    sp.add_argument("--mode", choices=list(MODES) + ["iou_only", "iou_motion"])
    sp.add_argument("--out", help="results file to write")
    track_flags(sp)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("eval", parents=[common], help="CLEAR-MOT and IDF1 scores")
    sp.add_argument("--gt")
    sp.add_argument("--results")
    sp.add_argument("--csv", help="also write the CSV report here")
    sp.add_argument("--overlay", help="write per-frame boxes of both tables as CSV")
    sp.add_argument("--figure", help="plot ground-truth and tracked centers to this image file")
    sp.add_argument("--hz", type=float, help="tracker speed to include in the report")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", parents=[common], help="compare the four association modes")
    sp.add_argument("--model", help="use this GRU instead of training one")
    sp.add_argument("--out", help="directory for CSV, figures and the resolved config")
    sp.add_argument("--sequences", type=int, help="scene seeds to pool (default %d)" % BENCHMARK_SEQUENCES)
    track_flags(sp)
    train_flags(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("tune", parents=[common], help="grid-search the motion noise weights by NEES")
    sp.add_argument("--gt")
    sp.add_argument("--det")
    sp.add_argument("--lambda-c", type=float)
    sp.set_defaults(func=cmd_tune)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FloatingPointError as exc:
        print(f"gakp: grunet: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (GakpError, ValueError, OSError) as exc:
        print(f"gakp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
