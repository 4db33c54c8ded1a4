from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Adam accumulators plus a step-decay learning-rate schedule: the rate is
    multiplied by ``decay_rate`` every ``decay_every_epochs`` epochs."""

    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_rate: float = 0.1
    decay_every_epochs: int = 20
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def effective_lr(self, epoch):
        if self.decay_every_epochs <= 0:
            return self.learning_rate
        return self.learning_rate * self.decay_rate ** (epoch // self.decay_every_epochs)


def adam_step(params, grads, opt, epoch=0):
    """In-place Adam update of the arrays in ``params`` (a name -> array
    mapping, or a GruModel)."""
    if hasattr(params, "params"):
        params = params.params()
    opt.step += 1
    lr = opt.effective_lr(epoch)
    c1 = 1.0 - opt.beta1 ** opt.step
    c2 = 1.0 - opt.beta2 ** opt.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"adam: gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = opt.m.setdefault(name, np.zeros_like(p))
        v = opt.v.setdefault(name, np.zeros_like(p))
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + opt.epsilon)
    return opt
