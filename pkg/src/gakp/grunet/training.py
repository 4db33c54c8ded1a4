import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ..errors import InputError
from .model import bce_loss, forward_batch, loss_and_grads_packed, pack_sequences
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


def auc(scores, labels):
    """Area under the ROC curve (Mann-Whitney statistic, ties averaged)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_auc: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)


def input_statistics(samples):
    """Per-feature mean and standard deviation over every step of every
    sample."""
    steps = np.vstack([s.sequence for s in samples])
    std = steps.std(axis=0)
    return steps.mean(axis=0), np.where(std > 1e-8, std, 1.0)


def _reparametrize(model, shift, scale, inverse=False):
    """Rewrite input weights so the model reads ``(x - shift) / scale``
    (or undo that with ``inverse``); the network function is unchanged."""
    Hs = model.hidden_size
    for W, b in (("W_r", "b_r"), ("W_z", "b_z"), ("W_h", "b_h")):
        Wm, bm = getattr(model, W), getattr(model, b)
        if inverse:
            Wm[:, Hs:] /= scale
            bm -= Wm[:, Hs:] @ shift
        else:
            bm += Wm[:, Hs:] @ shift
            Wm[:, Hs:] *= scale


def init_for_samples(samples, hidden_size=None, seed=0):
    """Fresh model whose random initialization is drawn for standardized
    inputs and then folded back to raw feature units."""
    from .model import HIDDEN_SIZE, GruModel

    shift, scale = input_statistics(samples)
    model = GruModel.init(hidden_size or HIDDEN_SIZE, len(shift), seed=seed)
    _reparametrize(model, shift, scale, inverse=True)
    return model


def train(model, samples, opt=None, epochs=50, batch_size=64, rng_seed=0, validation=None, standardize=True):
    """Mini-batch training with a seeded shuffle per epoch.

    With ``standardize`` the optimizer works on standardized inputs (per
    feature mean/std of ``samples``) and the result is folded back into the
    weights, so the returned model reads raw features. Updates ``model`` in
    place and returns ``(model, history)``. Raises FloatingPointError if the
    loss becomes non-finite."""
    if not samples:
        raise InputError("grunet: no training samples")
    opt = opt or AdamState()
    if epochs <= 0:
        return model, TrainHistory()
    X, mask = pack_sequences([s.sequence for s in samples], model.input_size)
    y = np.array([s.label for s in samples], dtype=float)
    if validation:
        Xv, maskv = pack_sequences([s.sequence for s in validation], model.input_size)
        yv = np.array([s.label for s in validation], dtype=float)
    if standardize:
        shift, scale = input_statistics(samples)
        X = (X - shift) / scale * mask[:, :, None]
        if validation:
            Xv = (Xv - shift) / scale * maskv[:, :, None]
        _reparametrize(model, shift, scale)
    history = TrainHistory()
    try:
        _run_epochs(model, X, mask, y, opt, epochs, batch_size, rng_seed,
                    (Xv, maskv, yv) if validation else None, history)
    finally:
        if standardize:
            _reparametrize(model, shift, scale, inverse=True)
    return model, history


def _run_epochs(model, X, mask, y, opt, epochs, batch_size, rng_seed, validation, history):
    rng = np.random.default_rng(rng_seed)
    n = len(y)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            # drop fully padded leading steps of this batch
            lead = int(np.argmax(mask[idx].any(axis=0)))
            loss, grads = loss_and_grads_packed(model, X[idx, lead:], mask[idx, lead:], y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"grunet: non-finite training loss at epoch {epoch}")
            adam_step(model, grads, opt, epoch)
            total += loss * len(idx)
        history.train_loss.append(total / n)
        history.learning_rate.append(opt.effective_lr(epoch))
        if validation:
            Xv, maskv, yv = validation
            pv = forward_batch(model, Xv, maskv)[0]
            history.val_loss.append(bce_loss(pv, yv))
            history.val_auc.append(auc(pv, yv))
        log.info("epoch %d train_loss %.5f%s", epoch, history.train_loss[-1],
                 f" val_loss {history.val_loss[-1]:.5f} val_auc {history.val_auc[-1]:.4f}" if validation else "")
