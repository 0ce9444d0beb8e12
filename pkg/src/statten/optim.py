"""Optimizers and schedules for surrogate-gradient training."""

from __future__ import annotations

import numpy as np


class AdamW:
    """AdamW with decoupled weight decay and optional cosine decay."""

    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01, cosine_steps=None):
        self.params = list(params)
        self.base_lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.cosine_steps = cosine_steps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self):
        if not self.cosine_steps:
            return self.base_lr
        frac = min(self.t / self.cosine_steps, 1.0)
        return 0.5 * self.base_lr * (1.0 + np.cos(np.pi * frac))

    def step(self):
        self.t += 1
        lr = self.lr
        b1, b2 = self.betas
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.data -= lr * (mhat / (np.sqrt(vhat) + self.eps)
                            + self.weight_decay * p.data)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
