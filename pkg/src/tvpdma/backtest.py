"""Out-of-sample scoring of averaged and selected forecasts."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _scores(y, yhat, lpdf):
    err = y - yhat
    return {"MSE": float(np.mean(err**2)), "MAD": float(np.mean(np.abs(err))), "logPL": float(np.sum(lpdf))}


def backtest(out, y, burn: int = 0) -> dict[str, dict[str, float]]:
    """MSE, mean absolute deviation and summed log predictive likelihood.

    Only steps after the first ``burn`` are scored.  Returns a nested dict
    ``{"DMA": {...}, "DMS": {...}}``.
    """
    y = np.asarray(y, dtype=float)
    if y.size != out.T:
        raise ConfigError(f"response length {y.size} differs from output length {out.T}")
    if not 0 <= burn < y.size:
        raise ConfigError(f"burn must lie in [0, {y.size}), got {burn}")
    sl = slice(burn, None)
    return {
        "DMA": _scores(y[sl], out.yhat_dma[sl], out.lpdf_dma[sl]),
        "DMS": _scores(y[sl], out.yhat_dms[sl], out.lpdf_dms[sl]),
    }


def pld(out_a, out_b, burn: int = 0) -> np.ndarray:
    """Accumulated log predictive likelihood of ``out_a`` over ``out_b``."""
    a = np.asarray(getattr(out_a, "lpdf_dma", out_a), dtype=float)
    b = np.asarray(getattr(out_b, "lpdf_dma", out_b), dtype=float)
    if a.shape != b.shape:
        raise ConfigError(f"series lengths differ: {a.shape} vs {b.shape}")
    return np.cumsum(a[burn:] - b[burn:])
