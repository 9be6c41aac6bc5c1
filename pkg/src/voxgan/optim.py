"""Adam optimizer with bias correction.

One instance per network; the critic, generator and encoder step at
different cadences so they cannot share moment state.
"""

import numpy as np

from .errors import NonFiniteError


class Adam:
    def __init__(self, named_params, lr=1e-4, beta1=0.5, beta2=0.9, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._params = list(named_params)
        self.m = {name: np.zeros(p.shape) for name, p in self._params}
        self.v = {name: np.zeros(p.shape) for name, p in self._params}

    def step(self, grads):
        """Apply one update. grads maps parameter tensors to gradient tensors."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self._params:
            g = grads[p].data
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(name, self.t, "gradient")
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.assign_(p.data - update)

    def state(self):
        return {
            "t": self.t,
            "hyper": {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps},
        }

    def load_state(self, state, moments_m, moments_v):
        self.t = int(state["t"])
        h = state["hyper"]
        self.lr, self.beta1, self.beta2, self.eps = h["lr"], h["beta1"], h["beta2"], h["eps"]
        for name, p in self._params:
            self.m[name] = np.asarray(moments_m[name], dtype=np.float64).reshape(p.shape).copy()
            self.v[name] = np.asarray(moments_v[name], dtype=np.float64).reshape(p.shape).copy()
