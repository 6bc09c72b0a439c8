"""Predictor-subset enumeration.

A model is a bitmask over the ``n`` predictor positions (bit ``j`` set means
predictor ``j`` is in the model).  The empty model is never part of the
space.  Models are always listed in ascending mask order, which fixes the
tie-breaking of model selection and the order of every reduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigError

KITCHEN_SINK = "KS"
DEFAULT_MAX_PREDICTORS = 25
HARD_MAX_PREDICTORS = 64


@dataclass(frozen=True)
class ModelSpace:
    n: int
    keep: frozenset[int]
    masks: np.ndarray  # uint64, strictly increasing
    names: tuple[str, ...] = field(default=())
    kitchen_sink: bool = False

    @property
    def k(self) -> int:
        return int(self.masks.size)

    def sizes(self) -> np.ndarray:
        return popcount(self.masks)

    def membership(self) -> np.ndarray:
        """Boolean (k, n) matrix, entry (i, j) true when model i holds predictor j."""
        bits = np.uint64(1) << np.arange(self.n, dtype=np.uint64)
        return (self.masks[:, None] & bits[None, :]) != 0

    def predictor_indices(self, rows: np.ndarray | None = None) -> list[np.ndarray]:
        masks = self.masks if rows is None else self.masks[rows]
        return [mask_indices(int(m)) for m in masks]


def popcount(masks) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.uint64)
    out = np.zeros(masks.shape, dtype=np.int64)
    work = masks.copy()
    one = np.uint64(1)
    while np.any(work):
        out += (work & one).astype(np.int64)
        work = work >> one
    return out


def model_size(mask: int) -> int:
    return int(mask).bit_count()


def mask_indices(mask: int) -> np.ndarray:
    mask = int(mask)
    return np.array([j for j in range(mask.bit_length()) if mask >> j & 1], dtype=np.intp)


def project_design(f_full: np.ndarray, mask: int) -> np.ndarray:
    return np.asarray(f_full)[mask_indices(mask)]


def count_models(n: int, keep: Iterable[int] | str | None = None) -> int:
    if keep == KITCHEN_SINK:
        return 1
    keep = set(keep or ())
    return 2 ** (n - len(keep)) if keep else 2**n - 1


def state_bytes(n: int, keep, d: int) -> int:
    """Bytes needed to hold every (model, delta) filter state once."""
    free = n - (n if keep == KITCHEN_SINK else len(set(keep or ())))
    base = n - free
    total = 0
    # sum over free-subset sizes q of C(free, q) * (p^2 + p + 1), p = base + q
    for q in range(free + 1):
        p = base + q
        if p == 0:
            continue
        total += comb(free, q) * (p * p + p + 1)
    return total * d * 8


def _normalize_keep(keep, n: int, names: Sequence[str]) -> tuple[frozenset[int], bool]:
    if keep is None:
        return frozenset(), False
    if isinstance(keep, str):
        if keep.upper() == KITCHEN_SINK:
            return frozenset(range(n)), True
        keep = [keep]
    out = set()
    for item in keep:
        if isinstance(item, str):
            if item not in names:
                raise ConfigError(f"unknown predictor in keep list: {item!r}")
            out.add(list(names).index(item))
        else:
            j = int(item)
            if not 0 <= j < n:
                raise ConfigError(f"keep index {j} outside [0, {n})")
            out.add(j)
    return frozenset(out), False


def enumerate_models(
    n: int,
    keep=None,
    names: Sequence[str] | None = None,
    max_predictors: int = DEFAULT_MAX_PREDICTORS,
    d: int = 1,
) -> ModelSpace:
    """Enumerate every admissible predictor subset.

    Parameters
    ----------
    n : int
        Number of predictors, intercept included.
    keep : iterable of int or str, or ``"KS"``
        Zero-based indices (or names) forced into every model.  ``"KS"``
        yields the single model containing all predictors.
    max_predictors : int
        Capacity cap on ``n``; exceeding it raises :class:`CapacityError`.
    d : int
        Size of the delta grid, only used for the memory estimate in the
        capacity error message.
    """
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(n))
    if len(names) != n:
        raise ConfigError(f"{len(names)} names for {n} predictors")
    if not 1 <= n <= HARD_MAX_PREDICTORS:
        raise ConfigError(f"predictor count must be in [1, {HARD_MAX_PREDICTORS}], got {n}")
    keep_set, ks = _normalize_keep(keep, n, names)
    if n > max_predictors and not ks:
        k = count_models(n, keep_set)
        gib = state_bytes(n, keep_set, d) / 2**30
        raise CapacityError(
            f"{n} predictors exceed the cap of {max_predictors}: {k} models x {d} deltas "
            f"would need about {gib:.1f} GiB of filter state; raise the cap to proceed"
        )

    keep_mask = 0
    for j in keep_set:
        keep_mask |= 1 << j
    free = [j for j in range(n) if j not in keep_set]
    if ks:
        masks = np.array([keep_mask], dtype=np.uint64)
    else:
        # every subset of the free positions, scattered back into mask space
        sub = np.arange(2 ** len(free), dtype=np.uint64)
        masks = np.full(sub.shape, keep_mask, dtype=np.uint64)
        for b, j in enumerate(free):
            masks |= ((sub >> np.uint64(b)) & np.uint64(1)) << np.uint64(j)
        masks = np.sort(masks)
        if keep_mask == 0:
            masks = masks[1:]  # drop the empty model
    return ModelSpace(n=n, keep=keep_set, masks=masks, names=names, kitchen_sink=ks)
