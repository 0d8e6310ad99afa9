"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.01


def new_state():
    return {"m": {}, "v": {}, "t": {}}


def optimizer_step(params, grads, state, cfg, decay=None):
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Step counts are kept per parameter, so a parameter that starts training
    late still gets correct bias correction. ``decay`` is the set of names
    receiving weight decay (all of them when None).
    """
    b1, b2 = cfg.beta1, cfg.beta2
    for name, g in grads.items():
        p = params[name]
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter has {p.data.shape}")
        m = state["m"].get(name)
        if m is None:
            m = state["m"][name] = np.zeros_like(p.data)
            state["v"][name] = np.zeros_like(p.data)
            state["t"][name] = 0
        v = state["v"][name]
        t = state["t"][name] = state["t"][name] + 1
        if cfg.weight_decay and (decay is None or name in decay):
            p.data *= 1.0 - cfg.lr * cfg.weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def clip_grad_norm(grads, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


class AdamW:
    def __init__(self, cfg, decay=None):
        self.cfg = cfg
        self.decay = decay
        self.state = new_state()

    def step(self, params, grads):
        optimizer_step(params, grads, self.state, self.cfg, self.decay)
