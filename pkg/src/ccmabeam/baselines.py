"""Reference beamformers for comparison runs."""

from __future__ import annotations

import math

import numpy as np

from .geometry import ArrayGeometry
from .metrics import DELTA_L_DB, MetricCurves, evaluate_filter_bank
from .wavefield import Direction, steering_vector

__all__ = ["das_filter", "evaluate_baseline", "get_baseline", "BASELINE_TAGS"]


def das_filter(geometry: ArrayGeometry, frequency: float, doa: Direction) -> np.ndarray:
    """Delay-and-sum filter d(DoA) / M, distortionless by construction."""
    return steering_vector(geometry, frequency, doa) / geometry.total_mics


_BASELINES = {
    "das": das_filter,
    "delay_and_sum": das_filter,
}

BASELINE_TAGS = tuple(sorted(_BASELINES))


def get_baseline(tag: str):
    try:
        return _BASELINES[tag]
    except KeyError:
        raise ValueError(
            f"unknown baseline {tag!r}; expected one of {BASELINE_TAGS}"
        ) from None


def evaluate_baseline(
    geometry: ArrayGeometry,
    doa: Direction,
    frequencies,
    tag: str = "das",
    grid_resolution: float = math.radians(1.0),
    delta_l: float = DELTA_L_DB,
) -> MetricCurves:
    """Metric curves of a named baseline beamformer."""
    fn = get_baseline(tag)
    return evaluate_filter_bank(
        geometry,
        doa,
        frequencies,
        lambda f: fn(geometry, f, doa),
        grid_resolution,
        delta_l,
    )
