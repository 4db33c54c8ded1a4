from gakp.grunet.training import TrainHistory
from gakp.motio import SyntheticSceneConfig, evaluate, generate_synthetic
from gakp.plots import plot_ablation, plot_training, plot_trajectories

PNG = b"\x89PNG\r\n\x1a\n"


def is_png(path):
    return path.stat().st_size > 1000 and path.read_bytes()[:8] == PNG


def test_training_figure(tmp_path):
    h = TrainHistory(train_loss=[0.7, 0.4, 0.3], val_loss=[0.72, 0.5, 0.45], val_auc=[0.6, 0.8, 0.9])
    assert is_png(plot_training(h, tmp_path / "sub" / "loss.png"))
    # no validation split and no epochs at all still render
    assert is_png(plot_training(TrainHistory(train_loss=[0.5]), tmp_path / "a.png"))
    assert is_png(plot_training(TrainHistory(), tmp_path / "b.png"))


def test_ablation_and_trajectory_figures(tmp_path):
    gt, _ = generate_synthetic(SyntheticSceneConfig(num_frames=20, num_identities=5, seed=2))
    r = evaluate(gt, gt)
    assert is_png(plot_ablation([r, r], ["iou", "implicit"], tmp_path / "abl.png"))
    assert is_png(plot_trajectories(gt, gt, tmp_path / "traj.png"))
