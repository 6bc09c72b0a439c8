"""Single dynamic linear model with a discount factor on the state covariance.

The observational variance is learned conjugately (Gamma prior on its
inverse), so the one-step predictive density is Student-t.  The state
covariance ``C`` is kept on the scale of the data, i.e. it already includes
the current variance estimate ``s``.

The scalar functions below define the recursion for one model.  The
``*_batch`` kernels apply the same algebra to a stack of models sharing a
predictor count, which is what the averaging engine runs on.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, NumericError

Q_FLOOR = 1e-300


class PriorKind(str, Enum):
    DIFFUSE = "diffuse"
    ZELLNER = "zellner"


@dataclass(frozen=True)
class PriorSpec:
    kind: PriorKind = PriorKind.DIFFUSE
    g: float = 100.0
    n0: float = 1.0
    s0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if not self.g > 0:
            raise ConfigError(f"prior scale g must be positive, got {self.g}")
        if not self.n0 >= 1:
            raise ConfigError(f"prior degrees of freedom n0 must be >= 1, got {self.n0}")
        if not self.s0 > 0:
            raise ConfigError(f"prior variance s0 must be positive, got {self.s0}")

    def describe(self, p: int) -> str:
        if self.kind is PriorKind.DIFFUSE:
            return f"Gaussian, mean 0, covariance {self.g:g} x diag({p})"
        return f"Zellner g-prior, g = {self.g:g}"


@dataclass(frozen=True)
class DlmState:
    m: np.ndarray
    C: np.ndarray
    n: float
    s: float


@dataclass(frozen=True)
class PredictiveMoments:
    yhat: float
    q: float
    dof: float
    fRf: float = 0.0


def init_state(p: int, prior: PriorSpec, gram_inverse: np.ndarray | None = None) -> DlmState:
    if p < 1:
        raise ConfigError(f"predictor count must be >= 1, got {p}")
    if prior.kind is PriorKind.ZELLNER:
        if gram_inverse is None:
            raise ConfigError("Zellner prior requires the inverse Gram matrix of the design")
        gram_inverse = np.asarray(gram_inverse, dtype=float)
        if gram_inverse.shape != (p, p):
            raise ConfigError(f"inverse Gram matrix has shape {gram_inverse.shape}, expected {(p, p)}")
        if not np.all(np.isfinite(gram_inverse)):
            raise NumericError("inverse Gram matrix has non-finite entries")
        C = prior.g * prior.s0 * 0.5 * (gram_inverse + gram_inverse.T)
    else:
        C = prior.g * np.eye(p)
    return DlmState(m=np.zeros(p), C=C, n=float(prior.n0), s=float(prior.s0))


def predict_moments(state: DlmState, f: np.ndarray, delta: float) -> PredictiveMoments:
    f = np.asarray(f, dtype=float)
    if f.shape != state.m.shape:
        raise ConfigError(f"design vector has length {f.size}, state has {state.m.size}")
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must lie in (0, 1], got {delta}")
    fRf = float(f @ state.C @ f) / delta
    yhat = float(f @ state.m)
    q = fRf + state.s
    if not (np.isfinite(q) and np.isfinite(yhat)) or q < Q_FLOOR:
        raise NumericError(f"degenerate predictive moments (yhat={yhat}, q={q})")
    return PredictiveMoments(yhat=yhat, q=q, dof=state.n, fRf=fRf)


def log_pred_density(pm: PredictiveMoments, y: float) -> float:
    """Log Student-t density with ``pm.dof`` degrees of freedom, location
    ``pm.yhat`` and squared scale ``pm.q``."""
    if not np.isfinite(y):
        raise NumericError(f"observation is not finite: {y}")
    return float(student_t_logpdf(y - pm.yhat, pm.q, pm.dof))


def student_t_logpdf(resid, q, dof):
    nu = dof
    return (
        gammaln(0.5 * (nu + 1.0))
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi * q)
        - 0.5 * (nu + 1.0) * np.log1p(resid * resid / (nu * q))
    )


def update_state(state: DlmState, f: np.ndarray, y: float, delta: float) -> DlmState:
    pm = predict_moments(state, f, delta)
    f = np.asarray(f, dtype=float)
    R = state.C / delta
    e = y - pm.yhat
    Rf = R @ f
    A = Rf / pm.q
    n_new = state.n + 1.0
    s_new = state.s + (state.s / n_new) * (e * e / pm.q - 1.0)
    C_new = (s_new / state.s) * (R - np.outer(A, A) * pm.q)
    m_new = state.m + A * e
    if not (np.isfinite(s_new) and np.all(np.isfinite(m_new)) and np.all(np.isfinite(C_new))):
        raise NumericError(f"non-finite state after update (s={s_new})")
    return DlmState(m=m_new, C=C_new, n=n_new, s=s_new)


# --- batched kernels ------------------------------------------------------
#
# Shapes: fp (k, p) projected designs, m (k, d, p), C (k, d, p, p),
# s (k, d), deltas (d,).  The degrees of freedom are common to every model.


def predict_batch(m, C, fp, deltas):
    """Return ``(yhat, fRf, Rf)`` for every (model, delta) cell."""
    Cf = np.einsum("kdij,kj->kdi", C, fp)
    Rf = Cf / deltas[None, :, None]
    fRf = np.einsum("kdi,ki->kd", Rf, fp)
    yhat = np.einsum("kdi,ki->kd", m, fp)
    return yhat, fRf, Rf


def update_batch(m, C, s, n_new, e, q, Rf, deltas):
    """In-place discount Kalman update of a stack of states.

    ``e`` and ``q`` are the (k, d) residuals and predictive scales from the
    same step, ``Rf`` the cached ``R f`` products from :func:`predict_batch`.
    """
    A = Rf / q[..., None]
    m += A * e[..., None]
    s_new = s + (s / n_new) * (e * e / q - 1.0)
    ratio = s_new / s
    # C' = (s'/s) (C/delta - A A' q); A A' q keeps C exactly symmetric
    C /= deltas[None, :, None, None]
    C -= (A[..., :, None] * A[..., None, :]) * q[..., None, None]
    C *= ratio[..., None, None]
    s[...] = s_new
