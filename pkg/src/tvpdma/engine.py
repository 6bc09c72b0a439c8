"""Dynamic model averaging over every (predictor subset, delta) filter.

Only the current slice of filter state is held: per step the engine reads
the states from ``t - 1``, writes the states for ``t`` in place, and keeps
the mixture log-probabilities for the same two slices.  Nothing of size
``T x k x d`` is ever allocated.

Every quantity reported for step ``t`` is a one-step-ahead statistic: it is
built from the forgetting-flattened weights and the filter states before
``y_t`` is seen.
"""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import ceil
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .dlm import Q_FLOOR, PriorKind, PriorSpec, predict_batch, update_batch
from .errors import ConfigError, DataError, NumericError
from .models import DEFAULT_MAX_PREDICTORS, ModelSpace, enumerate_models

log = logging.getLogger(__name__)

VDEC_COLUMNS = ("vobs", "vcoeff", "vmod", "vtvp", "vtotal")
# upper bound on the C entries one block touches; fixed so the partition,
# and therefore every floating-point sum, is independent of thread count
BLOCK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class DmaConfig:
    delta_grid: tuple[float, ...] = (0.90, 0.95, 0.99)
    alpha: float = 0.99
    keep: object = None
    prior: PriorSpec = field(default_factory=PriorSpec)
    burn: int = 0
    threads: int = 1
    max_predictors: int = DEFAULT_MAX_PREDICTORS

    def __post_init__(self):
        grid = tuple(float(x) for x in np.atleast_1d(self.delta_grid))
        object.__setattr__(self, "delta_grid", grid)
        if not grid:
            raise ConfigError("delta grid is empty")
        if any(not 0 < x <= 1 for x in grid):
            raise ConfigError(f"delta values must lie in (0, 1]: {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"delta grid must be strictly increasing: {grid}")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.burn < 0:
            raise ConfigError(f"burn must be nonnegative, got {self.burn}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def d(self) -> int:
        return len(self.delta_grid)


@dataclass(frozen=True)
class MixtureProbs:
    """Log-space mixture weights.

    ``log_cond[i, j]`` is log p(M_i | delta_j, F) and ``log_dprob[j]`` is
    log p(delta_j | F).
    """

    log_cond: np.ndarray
    log_dprob: np.ndarray

    @classmethod
    def uniform(cls, k: int, d: int) -> "MixtureProbs":
        return cls(np.full((k, d), -np.log(k)), np.full(d, -np.log(d)))

    @classmethod
    def from_probs(cls, cond, dprob) -> "MixtureProbs":
        with np.errstate(divide="ignore"):
            return cls(np.log(np.asarray(cond, float)), np.log(np.asarray(dprob, float)))

    @property
    def cond(self) -> np.ndarray:
        return np.exp(self.log_cond)

    @property
    def dprob(self) -> np.ndarray:
        return np.exp(self.log_dprob)

    def joint(self) -> np.ndarray:
        return np.exp(self.log_cond + self.log_dprob[None, :])

    def marginal(self) -> np.ndarray:
        """p(M_i | F) with delta integrated out."""
        return self.cond @ self.dprob


def _normalize_columns(logw: np.ndarray, what: str) -> np.ndarray:
    """Subtract the column log-sum-exp; an all-zero column resets to uniform."""
    lse = logsumexp(logw, axis=0)
    with np.errstate(invalid="ignore"):
        out = logw - lse
    bad = ~np.isfinite(lse)
    if np.any(bad):
        log.warning("%s underflowed in %d column(s); reset to uniform", what, int(bad.sum()))
        out = np.where(bad, -np.log(logw.shape[0]), out)
    return out


def forgetting_update(probs: MixtureProbs, alpha: float) -> MixtureProbs:
    """Flatten model and delta weights by raising them to ``alpha``."""
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return probs
    return MixtureProbs(
        _normalize_columns(alpha * probs.log_cond, "model weights"),
        _normalize_columns(alpha * probs.log_dprob, "delta weights"),
    )


def _argmax_lowest(values: np.ndarray, keys: np.ndarray) -> int:
    """Index of the maximum of ``values``; ties go to the smallest key."""
    top = values.max()
    cand = np.flatnonzero(values == top)
    return int(cand[np.argmin(keys[cand])])


def inclusion_probs(probs: MixtureProbs, space: ModelSpace) -> np.ndarray:
    incl = probs.marginal() @ space.membership().astype(float)
    # forced predictors sit in every model
    incl[sorted(space.keep)] = 1.0
    return incl


def expected_size(probs: MixtureProbs, space: ModelSpace) -> float:
    return float(probs.marginal() @ space.sizes().astype(float))


def dms_size(probs: MixtureProbs, space: ModelSpace) -> int:
    i = _argmax_lowest(probs.marginal(), space.masks)
    return int(space.sizes()[i])


def posterior_theta(means: Sequence[np.ndarray], probs: MixtureProbs, space: ModelSpace) -> np.ndarray:
    """Weighted coefficient average, excluded predictors counting as zero.

    ``means[i]`` is the (d, p_i) array of posterior means of model ``i``.
    """
    w = probs.joint()
    theta = np.zeros(space.n)
    for i, idx in enumerate(space.predictor_indices()):
        theta[idx] += w[i] @ np.asarray(means[i]).reshape(w.shape[1], -1)
    return theta


def variance_decomposition(yhat, s, fRf, probs: MixtureProbs) -> np.ndarray:
    """Split the predictive variance into (obs, coeff, mod, tvp, total).

    ``yhat``, ``s`` and ``fRf`` are (k, d) arrays of per-filter forecast
    means, observational variance estimates and coefficient-uncertainty
    terms; ``probs`` must already be the predicted weights.
    """
    cond, dprob = probs.cond, probs.dprob
    w = cond * dprob[None, :]
    vobs = float(np.sum(s * w))
    vcoeff = float(np.sum(fRf * w))
    yhat_j = np.sum(yhat * cond, axis=0)
    yhat_all = float(yhat_j @ dprob)
    vmod = float(np.sum((yhat - yhat_j[None, :]) ** 2 * w))
    vtvp = float(((yhat_j - yhat_all) ** 2) @ dprob)
    return np.array([vobs, vcoeff, vmod, vtvp, vobs + vcoeff + vmod + vtvp])


def top_prob_stats(marginal: np.ndarray) -> tuple[float, float]:
    """Largest model probability and the mass of the top 10% of models."""
    k = marginal.size
    top = ceil(0.1 * k)
    largest = np.sort(np.partition(marginal, k - top)[k - top:])[::-1]
    return float(largest[0]), float(largest.sum())


def delta_posterior_mean(probs: MixtureProbs, delta_grid) -> float:
    return float(np.asarray(delta_grid, float) @ probs.dprob)


@dataclass
class StepStats:
    yhat_dma: float
    yhat_dms: float
    lpdf_dma: float
    lpdf_dms: float
    incl: np.ndarray
    theta: np.ndarray
    size: float
    size_dms: int
    deltahat: float
    pmt: np.ndarray
    vdec: np.ndarray
    highmp: float
    highmp_top01: float


@dataclass
class DmaOutput:
    yhat_dma: np.ndarray
    yhat_dms: np.ndarray
    lpdf_dma: np.ndarray
    lpdf_dms: np.ndarray
    incl: np.ndarray
    theta: np.ndarray
    size: np.ndarray
    size_dms: np.ndarray
    deltahat: np.ndarray
    pmt: np.ndarray
    vdec: np.ndarray
    highmp: np.ndarray
    highmp_top01: np.ndarray
    theta_final: np.ndarray
    names: tuple[str, ...]
    delta_grid: tuple[float, ...]
    alpha: float
    k: int
    elapsed: float = 0.0
    prior: str = ""
    keep: tuple[str, ...] = ()

    @property
    def T(self) -> int:
        return self.yhat_dma.size

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def d(self) -> int:
        return len(self.delta_grid)

    def meta(self) -> dict:
        return {
            "T": self.T,
            "n": self.n,
            "d": self.d,
            "k": self.k,
            "combinations_with_delta": self.k * self.d,
            "alpha": self.alpha,
            "delta_grid": list(self.delta_grid),
            "prior": self.prior,
            "keep": list(self.keep),
            "predictors": list(self.names),
            "elapsed_seconds": self.elapsed,
        }


class _Block:
    """A run of models with the same predictor count, stored contiguously."""

    def __init__(self, start: int, idx: np.ndarray, masks: np.ndarray, d: int):
        self.start = start
        self.stop = start + idx.shape[0]
        self.idx = idx  # (kb, p) predictor positions
        self.masks = masks
        kb, p = idx.shape
        self.m = np.zeros((kb, d, p))
        self.C = np.zeros((kb, d, p, p))

    @property
    def rows(self) -> slice:
        return slice(self.start, self.stop)


class DmaEngine:
    """Runs the averaging recursion one observation at a time.

    Parameters
    ----------
    n : int
        Predictor count (columns of the full design).
    config : DmaConfig
    names : sequence of str, optional
    design : (T, n) array, optional
        Full-sample design; required for the Zellner prior, whose Gram
        matrices are taken from it.
    """

    def __init__(self, n: int, config: DmaConfig, names: Sequence[str] | None = None, design=None):
        self.config = config
        self.space = enumerate_models(n, config.keep, names, config.max_predictors, config.d)
        self.deltas = np.asarray(config.delta_grid)
        d = config.d
        prior = config.prior

        # engine order: by model size, then mask
        sizes = self.space.sizes()
        order = np.lexsort((self.space.masks, sizes))
        self.masks = self.space.masks[order]
        self.sizes = sizes[order].astype(float)
        self.membership = self.space.membership()[order].astype(float)
        self.forced = sorted(self.space.keep)
        k = self.masks.size

        gram = None
        if prior.kind is PriorKind.ZELLNER:
            if design is None:
                raise ConfigError("Zellner prior requires the full design matrix")
            design = np.asarray(design, float)
            gram = design.T @ design

        self.blocks: list[_Block] = []
        start = 0
        for p in np.unique(sizes):
            rows = order[sizes[order] == p]
            per_block = max(1, BLOCK_ENTRIES // (d * p * p))
            for b0 in range(0, rows.size, per_block):
                sel = rows[b0:b0 + per_block]
                idx = np.stack(self.space.predictor_indices(sel))
                blk = _Block(start, idx, self.space.masks[sel], d)
                if gram is None:
                    blk.C[...] = prior.g * np.eye(p)
                else:
                    blk.C[...] = (prior.g * prior.s0 * _inverse_grams(gram, idx))[:, None]
                self.blocks.append(blk)
                start = blk.stop
        assert start == k

        self.s = np.full((k, d), float(prior.s0))
        self.dof = float(prior.n0)
        self.probs = MixtureProbs.uniform(k, d)
        # per-step scratch, filled by the block workers
        self._yhat = np.empty((k, d))
        self._fRf = np.empty((k, d))
        self._s_pred = np.empty((k, d))
        self._ll = np.empty((k, d))
        self._pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    @property
    def k(self) -> int:
        return self.masks.size

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _filter_block(self, blk: _Block, f, y, w, const):
        rows = blk.rows
        fp = f[blk.idx]
        yhat, fRf, Rf = predict_batch(blk.m, blk.C, fp, self.deltas)
        s = self.s[rows]
        q = fRf + s
        bad = ~(np.isfinite(q) & np.isfinite(yhat)) | (q < Q_FLOOR)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise NumericError(
                f"degenerate predictive variance q={q[i, j]!r} in model mask "
                f"{int(blk.masks[i]):#b} at delta={self.deltas[j]}"
            )
        e = y - yhat
        with np.errstate(over="ignore"):
            z = e * e / q
        if not np.all(np.isfinite(z)):
            i, j = np.argwhere(~np.isfinite(z))[0]
            raise NumericError(
                f"standardized residual overflows in model mask "
                f"{int(blk.masks[i]):#b} at delta={self.deltas[j]}"
            )
        self._yhat[rows] = yhat
        self._fRf[rows] = fRf
        self._s_pred[rows] = s
        nu = self.dof
        self._ll[rows] = const - 0.5 * np.log(q) - 0.5 * (nu + 1.0) * np.log1p(e * e / (nu * q))
        # theta contribution uses the pre-update means
        contrib = np.einsum("kd,kdp->kp", w[rows], blk.m)
        theta = np.bincount(blk.idx.ravel(), weights=contrib.ravel(), minlength=f.size)
        update_batch(blk.m, blk.C, s, nu + 1.0, e, q, Rf, self.deltas)
        return theta

    def step(self, f: np.ndarray, y: float) -> StepStats:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.space.n,):
            raise DataError(f"design row has shape {f.shape}, expected ({self.space.n},)")
        if not (np.isfinite(y) and np.all(np.isfinite(f))):
            raise DataError("non-finite observation or design row")
        pred = forgetting_update(self.probs, self.config.alpha)
        cond, dprob = pred.cond, pred.dprob
        w = cond * dprob[None, :]

        nu = self.dof
        const = gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
        if self._pool is None:
            parts = [self._filter_block(b, f, y, w, const) for b in self.blocks]
        else:
            parts = list(self._pool.map(lambda b: self._filter_block(b, f, y, w, const), self.blocks))
        theta = np.zeros(self.space.n)
        for part in parts:
            theta += part
        self.dof = nu + 1.0

        yhat, ll = self._yhat, self._ll
        logw = pred.log_cond + pred.log_dprob[None, :]
        yhat_j = np.sum(yhat * cond, axis=0)
        yhat_dma = float(yhat_j @ dprob)
        lpdf_dma = float(logsumexp(ll + logw))

        # joint argmax, ties to the lowest (mask, delta index)
        kd_keys = self.masks[:, None].astype(np.float64) * self.config.d + np.arange(self.config.d)
        flat = _argmax_lowest(w.ravel(), kd_keys.ravel())
        i_dms, j_dms = divmod(flat, self.config.d)

        marginal = cond @ dprob
        i_sel = _argmax_lowest(marginal, self.masks)
        highmp, top01 = top_prob_stats(marginal)
        incl = marginal @ self.membership
        incl[self.forced] = 1.0

        stats = StepStats(
            yhat_dma=yhat_dma,
            yhat_dms=float(yhat[i_dms, j_dms]),
            lpdf_dma=lpdf_dma,
            lpdf_dms=float(ll[i_dms, j_dms]),
            incl=incl,
            theta=theta,
            size=float(marginal @ self.sizes),
            size_dms=int(self.sizes[i_sel]),
            deltahat=float(self.deltas @ dprob),
            pmt=dprob,
            vdec=variance_decomposition(yhat, self._s_pred, self._fRf, pred),
            highmp=highmp,
            highmp_top01=top01,
        )

        # posterior weights given y_t
        log_lik_delta = logsumexp(ll + pred.log_cond, axis=0)
        log_cond = _normalize_columns(ll + pred.log_cond, "model weights")
        log_dprob = _normalize_columns(pred.log_dprob + log_lik_delta, "delta weights")
        self.probs = MixtureProbs(log_cond, log_dprob)
        return stats

    def posterior_theta(self) -> np.ndarray:
        """Coefficient average under the current (posterior) weights."""
        w = self.probs.joint()
        theta = np.zeros(self.space.n)
        for blk in self.blocks:
            contrib = np.einsum("kd,kdp->kp", w[blk.rows], blk.m)
            theta += np.bincount(blk.idx.ravel(), weights=contrib.ravel(), minlength=self.space.n)
        return theta

    def state_nbytes(self) -> int:
        arrays = [self.s, self._yhat, self._fRf, self._s_pred, self._ll, self.probs.log_cond]
        arrays += [a for b in self.blocks for a in (b.m, b.C, b.idx)]
        return int(sum(a.nbytes for a in arrays))


def _inverse_grams(gram: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Inverse Gram submatrices for a stack of models, jittering singular ones."""
    sub = gram[idx[:, :, None], idx[:, None, :]]
    p = idx.shape[1]
    eig = np.linalg.eigvalsh(sub)
    singular = eig[:, 0] <= 1e-12 * np.maximum(eig[:, -1], np.finfo(float).tiny)
    if np.any(singular):
        jitter = 1e-8 * np.trace(sub[singular], axis1=1, axis2=2) / p
        sub[singular] += jitter[:, None, None] * np.eye(p)
    out = np.linalg.inv(sub)
    # the filter never removes asymmetry and inflates it by 1/delta each step
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    if not np.all(np.isfinite(out)):
        raise NumericError("inverse Gram matrix has non-finite entries")
    return out


def default_threads() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def run_dma(y, F, config: DmaConfig, names: Sequence[str] | None = None) -> DmaOutput:
    """Fit the full recursion to ``y`` (length T) on design ``F`` (T x n)."""
    y = np.asarray(y, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or y.ndim != 1 or F.shape[0] != y.size:
        raise DataError(f"response length {y.shape} does not match design shape {F.shape}")
    T, n = F.shape
    if T < 1:
        raise DataError("empty sample")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(F))):
        raise DataError("response or design contains missing or non-finite values")

    t0 = time.perf_counter()
    engine = DmaEngine(n, config, names, design=F)
    d = config.d
    out = {
        "yhat_dma": np.empty(T), "yhat_dms": np.empty(T),
        "lpdf_dma": np.empty(T), "lpdf_dms": np.empty(T),
        "incl": np.empty((T, n)), "theta": np.empty((T, n)),
        "size": np.empty(T), "size_dms": np.empty(T, dtype=int),
        "deltahat": np.empty(T), "pmt": np.empty((T, d)), "vdec": np.empty((T, 5)),
        "highmp": np.empty(T), "highmp_top01": np.empty(T),
    }
    try:
        for t in range(T):
            st = engine.step(F[t], y[t])
            for key, arr in out.items():
                arr[t] = getattr(st, key)
        theta_final = engine.posterior_theta()
    finally:
        engine.close()
    space = engine.space
    return DmaOutput(
        **out,
        theta_final=theta_final,
        names=space.names,
        delta_grid=config.delta_grid,
        alpha=config.alpha,
        k=space.k,
        elapsed=time.perf_counter() - t0,
        prior=config.prior.describe(n),
        keep=tuple(space.names[j] for j in sorted(space.keep)),
    )
