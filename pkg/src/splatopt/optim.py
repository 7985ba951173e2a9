"""Adam with per-key state, row remapping for densify/prune, and exact
checkpoint round-trips.

Moment tensors are keyed by parameter-group name.  When the Gaussian set
changes shape, ``remap`` gathers surviving rows and zeroes the moments of
freshly split children (standard splatting practice).
"""

from __future__ import annotations

import numpy as np


class AdamOptimizer:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def step(self, key: str, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        """One Adam update; returns the new parameter array."""
        grad = np.asarray(grad, dtype=np.float64)
        if key not in self._m:
            self._m[key] = np.zeros_like(param, dtype=np.float64)
            self._v[key] = np.zeros_like(param, dtype=np.float64)
            self._t[key] = 0
        m, v = self._m[key], self._v[key]
        if m.shape != param.shape:
            raise ValueError(
                f"optimizer state for {key!r} has shape {m.shape}, param {param.shape}"
            )
        self._t[key] += 1
        t = self._t[key]
        m *= self.beta1
        m += (1 - self.beta1) * grad
        v *= self.beta2
        v += (1 - self.beta2) * grad * grad
        m_hat = m / (1 - self.beta1**t)
        v_hat = v / (1 - self.beta2**t)
        return param - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def remap(self, key: str, gather_index: np.ndarray, zero_rows: np.ndarray | None = None):
        """Reindex moment rows after a cloud resize.

        ``gather_index`` maps new row -> old row; rows flagged in
        ``zero_rows`` (new indexing) start with fresh moments.
        """
        if key not in self._m:
            return
        for store in (self._m, self._v):
            arr = store[key][gather_index].copy()
            if zero_rows is not None:
                arr[zero_rows] = 0.0
            store[key] = arr

    def state_dict(self) -> dict:
        return {
            "m": {k: v.copy() for k, v in self._m.items()},
            "v": {k: v.copy() for k, v in self._v.items()},
            "t": dict(self._t),
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    def load_state_dict(self, state: dict) -> None:
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self._m = {k: np.asarray(v, dtype=np.float64).copy() for k, v in state["m"].items()}
        self._v = {k: np.asarray(v, dtype=np.float64).copy() for k, v in state["v"].items()}
        self._t = dict(state["t"])
