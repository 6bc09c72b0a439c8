"""Synthetic regressions whose coefficients follow Gaussian random walks.

Draws come from ``numpy.random.default_rng(seed)`` (PCG64, ziggurat
normals) in a fixed order: predictors, then observation noise, then state
innovations.  The same seed therefore gives the same data on any platform
numpy supports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SimSpec:
    t_len: int = 500
    n: int = 6
    obs_var: float = 0.1
    state_var: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.t_len < 1:
            raise ConfigError(f"t_len must be >= 1, got {self.t_len}")
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.obs_var > 0:
            raise ConfigError(f"obs_var must be positive, got {self.obs_var}")
        sv = (0.01,) * self.n if self.state_var is None else tuple(float(v) for v in self.state_var)
        if len(sv) != self.n:
            raise ConfigError(f"state_var has {len(sv)} entries for n={self.n}")
        if any(v < 0 for v in sv):
            raise ConfigError("state variances must be nonnegative")
        object.__setattr__(self, "state_var", sv)


def simulate_dlm(spec: SimSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(y, F, theta)`` with shapes (T,), (T, n), (T, n).

    Column 0 of ``F`` is the constant 1; the other columns are iid standard
    normal.  ``theta`` starts from zero and takes one random-walk step
    before the first observation.
    """
    rng = np.random.default_rng(spec.seed)
    T, n = spec.t_len, spec.n
    F = np.ones((T, n))
    F[:, 1:] = rng.standard_normal((T, n - 1))
    eps = rng.standard_normal(T)
    eta = rng.standard_normal((T, n))
    theta = np.cumsum(eta * np.sqrt(np.asarray(spec.state_var))[None, :], axis=0)
    y = np.einsum("tj,tj->t", F, theta) + np.sqrt(spec.obs_var) * eps
    return y, F, theta
