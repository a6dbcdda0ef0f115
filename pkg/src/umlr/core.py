"""Shared data model: datasets, outcome centering, and the two-group outcome split.

The split divides training units into a below-or-at-mean group and an
above-mean group of the outcome; the two per-group residual-sum constraints
that define unbiased (mean-anchored) fitting are stated over exactly these
index sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePartitionError, InvalidInputError

__all__ = [
    "Dataset",
    "SplitIndices",
    "center_outcome",
    "partition_by_mean",
]


def _as_float_array(x, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Covariates X (n x p), binary treatment t, continuous outcome y.

    Arrays are validated and made read-only at construction; instances are
    safe to share across threads.
    """

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_float_array(self.X, "X", 2)
        y = _as_float_array(self.y, "y", 1)
        t_raw = np.asarray(self.t)
        if t_raw.ndim != 1:
            raise InvalidInputError(f"t must be 1-dimensional, got shape {t_raw.shape}")
        if t_raw.size and not np.all(np.isfinite(t_raw.astype(float))):
            raise InvalidInputError("t contains non-finite entries")
        t = t_raw.astype(np.int64, copy=True)
        if not np.array_equal(t.astype(float), t_raw.astype(float)) or not np.all(
            (t == 0) | (t == 1)
        ):
            bad = np.flatnonzero(~np.isin(t_raw.astype(float), (0.0, 1.0)))
            raise InvalidInputError(
                f"t must contain only 0/1; first offending row {bad[0] if bad.size else '?'}"
            )
        n = X.shape[0]
        if n < 2:
            raise InvalidInputError(f"need n >= 2 units, got {n}")
        if X.shape[1] < 1:
            raise InvalidInputError("need p >= 1 covariates")
        if t.shape[0] != n or y.shape[0] != n:
            raise InvalidInputError(
                f"X, t, y must share n: got {n}, {t.shape[0]}, {y.shape[0]}"
            )
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def arm_indices(self, arm: int) -> np.ndarray:
        """Row indices with t == arm (0 or 1)."""
        return np.flatnonzero(self.t == arm)

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset (or resample) of an already-validated dataset.

        Skips re-validation: any row selection of finite, 0/1-checked arrays
        stays valid, and this sits on the bootstrap hot path.
        """
        idx = np.asarray(idx, dtype=np.int64)
        out = object.__new__(Dataset)
        object.__setattr__(out, "X", _frozen(self.X[idx]))
        object.__setattr__(out, "t", _frozen(self.t[idx]))
        object.__setattr__(out, "y", _frozen(self.y[idx]))
        return out


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint, complementary index sets partitioning {0..n-1}.

    ``r1`` holds units with outcome at or below the sample mean, ``r2`` the
    rest. Stored sorted so iteration order is platform-independent.
    """

    r1: np.ndarray
    r2: np.ndarray
    n: int = field(default=0)

    def __post_init__(self):
        r1 = np.sort(np.asarray(self.r1, dtype=np.int64))
        r2 = np.sort(np.asarray(self.r2, dtype=np.int64))
        n = self.n if self.n else r1.size + r2.size
        combined = np.concatenate([r1, r2])
        if combined.size != n or not np.array_equal(np.sort(combined), np.arange(n)):
            raise InvalidInputError("r1 and r2 must disjointly cover 0..n-1")
        object.__setattr__(self, "r1", _frozen(r1))
        object.__setattr__(self, "r2", _frozen(r2))
        object.__setattr__(self, "n", int(n))

    @property
    def both_nonempty(self) -> bool:
        return self.r1.size > 0 and self.r2.size > 0


def center_outcome(y) -> tuple[np.ndarray, float]:
    """Subtract the sample mean from y; return (centered, mean).

    The mean is returned so predictions fitted on the centered scale can be
    shifted back.
    """
    y = _as_float_array(y, "y", 1)
    if y.size == 0:
        raise InvalidInputError("y must be nonempty")
    mean = float(np.mean(y))
    return y - mean, mean


def partition_by_mean(y) -> SplitIndices:
    """Split indices into r1 = {i: y_i <= mean(y)} and r2 = {i: y_i > mean(y)}.

    Ties at the mean go to r1. Computed on the outcome as given; centering
    shifts values and cut-off equally, so the partition is identical either
    way. Raises :class:`DegeneratePartitionError` when r2 is empty (constant
    outcome): the two anchoring constraints would collapse into one and
    constrained fitting must not proceed.
    """
    y = _as_float_array(y, "y", 1)
    if y.size == 0:
        raise InvalidInputError("y must be nonempty")
    mean = np.mean(y)
    below = y <= mean
    r2 = np.flatnonzero(~below)
    if r2.size == 0:
        raise DegeneratePartitionError(
            "all outcomes at or below their mean; cannot form an above-mean group"
        )
    return SplitIndices(np.flatnonzero(below), r2, n=y.size)
