"""Right-continuous step functions on a finite jump grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def grid_index(grid, t):
    """Index of the last grid point ``<= t``; ``-1`` before the first point."""
    return np.searchsorted(grid, t, side="right") - 1


def evaluate_on(grid, values, t, axis=-1):
    """Evaluate step-function values stored on ``grid`` at times ``t``.

    ``values`` holds the right-continuous value at each grid point along
    ``axis``. The function is zero before the first grid point.
    """
    values = np.asarray(values, dtype=float)
    values = np.moveaxis(values, axis, -1)
    padded = np.concatenate([np.zeros(values.shape[:-1] + (1,)), values], axis=-1)
    out = padded[..., grid_index(grid, t) + 1]
    return np.moveaxis(out, -1, axis) if np.ndim(t) else out


@dataclass(frozen=True)
class StepFunction:
    """Nondecreasing-or-not step function, zero at the origin.

    Attributes
    ----------
    times : ndarray
        Strictly increasing jump times.
    values : ndarray
        Value on ``[times[k], times[k+1])``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.shape != times.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_jumps(cls, times, jumps):
        return cls(times, np.cumsum(jumps))

    @property
    def jumps(self):
        return np.diff(self.values, prepend=0.0)

    def __call__(self, t):
        return evaluate_on(self.times, self.values, t)

    def left_limit(self, t):
        """Value at ``t-`` (zero at or before the first jump)."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        padded = np.concatenate([[0.0], self.values])
        return padded[idx + 1]

    def scaled(self, factor):
        return StepFunction(self.times, self.values * factor)

    def __len__(self):
        return self.times.size
