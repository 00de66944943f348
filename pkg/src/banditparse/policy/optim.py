"""Adadelta with accumulator state, the update rule used for all training."""

from __future__ import annotations

import numpy as np

from .params import zeros_like_params


class Adadelta:
    """Performs descent steps on whatever gradient it is given; callers
    maximising an objective pass the negated gradient."""

    def __init__(self, params: dict[str, np.ndarray], rho: float = 0.95, eps: float = 1e-6):
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must be in [0, 1)")
        self.rho = rho
        self.eps = eps
        self.sq_grad = zeros_like_params(params)
        self.sq_delta = zeros_like_params(params)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        rho, eps = self.rho, self.eps
        for k, g in grads.items():
            self.sq_grad[k] = rho * self.sq_grad[k] + (1.0 - rho) * g * g
            delta = -np.sqrt((self.sq_delta[k] + eps) / (self.sq_grad[k] + eps)) * g
            self.sq_delta[k] = rho * self.sq_delta[k] + (1.0 - rho) * delta * delta
            params[k] += delta
