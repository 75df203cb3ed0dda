"""Minimal Adam optimizer over raw ndarrays."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam state for a list of parameter arrays, updated in lockstep."""

    def __init__(self, shapes, cfg: AdamConfig | None = None):
        self.cfg = cfg or AdamConfig()
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        """Return updated copies of ``params`` given matching ``grads``."""
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g
            mhat = self.m[i] / bc1
            vhat = self.v[i] / bc2
            out.append(p - c.lr * mhat / (np.sqrt(vhat) + c.eps))
        return out
