"""Far-field steering vectors and beampatterns on angular grids.

Directions use spherical polar coordinates: elevation measured from the
array normal (0 is broadside, pi/2 lies in the array plane) and azimuth
measured from the positive x axis.  All angles are radians.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ArrayGeometry

__all__ = [
    "Direction",
    "AngularGrid",
    "SteeringField",
    "propagation_delay",
    "steering_vector",
    "steering_matrix",
    "beampattern",
    "beampattern_grid",
    "build_steering_field",
    "pattern_db",
    "export_beampattern_csv",
]


@dataclass(frozen=True)
class Direction:
    """Arrival direction (elevation in [0, pi], azimuth in [0, 2*pi))."""

    elevation: float
    azimuth: float

    def __post_init__(self):
        object.__setattr__(self, "elevation", float(self.elevation))
        object.__setattr__(self, "azimuth", float(self.azimuth))
        if not 0.0 <= self.elevation <= math.pi:
            raise ValueError(f"elevation must lie in [0, pi], got {self.elevation}")
        if not 0.0 <= self.azimuth < 2.0 * math.pi:
            raise ValueError(f"azimuth must lie in [0, 2*pi), got {self.azimuth}")

    @classmethod
    def from_degrees(cls, elevation_deg: float, azimuth_deg: float) -> "Direction":
        return cls(math.radians(elevation_deg), math.radians(azimuth_deg % 360.0))

    def unit_vector(self) -> np.ndarray:
        s = math.sin(self.elevation)
        return np.array(
            [s * math.cos(self.azimuth), s * math.sin(self.azimuth), math.cos(self.elevation)]
        )


@dataclass(frozen=True)
class AngularGrid:
    """Uniform elevation x azimuth grid snapped to contain a steering direction."""

    elevations: np.ndarray
    azimuths: np.ndarray
    resolution: float

    @classmethod
    def build(
        cls,
        resolution: float,
        doa: Direction,
        elevation_range: tuple[float, float] = (0.0, math.pi / 2.0),
    ) -> "AngularGrid":
        if resolution <= 0.0:
            raise ValueError("grid resolution must be positive")
        lo, hi = elevation_range
        elevations = snapped_range(lo, hi, doa.elevation, resolution)
        count = int(round(2.0 * math.pi / resolution))
        azimuths = np.sort((doa.azimuth + np.arange(count) * resolution) % (2.0 * math.pi))
        for arr in (elevations, azimuths):
            arr.setflags(write=False)
        return cls(elevations=elevations, azimuths=azimuths, resolution=resolution)

    def doa_indices(self, doa: Direction) -> tuple[int, int]:
        ei = int(np.argmin(np.abs(self.elevations - doa.elevation)))
        ai = int(np.argmin(np.abs(self.azimuths - doa.azimuth)))
        return ei, ai


def snapped_range(lo: float, hi: float, anchor: float, step: float) -> np.ndarray:
    """Grid points anchor + k*step inside [lo, hi]; always contains the anchor."""
    kmin = math.ceil((lo - anchor) / step - 1e-9)
    kmax = math.floor((hi - anchor) / step + 1e-9)
    return anchor + np.arange(kmin, kmax + 1) * step


def propagation_delay(geometry: ArrayGeometry, ring: int, mic: int, direction: Direction) -> float:
    """Arrival-time offset in seconds of mic (ring, mic) relative to the center.

    Positive delay means the wavefront reaches the microphone after it
    reaches the array center.
    """
    r = geometry.rings[ring]
    if not 0 <= mic < r.mic_count:
        raise IndexError(f"mic {mic} out of range for ring {ring} ({r.mic_count} mics)")
    return (
        -(r.radius / geometry.sound_speed)
        * math.sin(direction.elevation)
        * math.cos(direction.azimuth - r.angles[mic])
    )


def _check_frequency(geometry: ArrayGeometry, frequency: float) -> None:
    nyquist = geometry.sample_rate / 2.0
    if not 0.0 < frequency <= nyquist:
        raise ValueError(f"frequency must lie in (0, {nyquist}] Hz, got {frequency}")


def steering_vector(
    geometry: ArrayGeometry, frequency: float, direction: Direction
) -> np.ndarray:
    """Unit-modulus steering phases for one direction, length total_mics."""
    _check_frequency(geometry, frequency)
    tau = (
        -(geometry.mic_radii / geometry.sound_speed)
        * math.sin(direction.elevation)
        * np.cos(direction.azimuth - geometry.mic_angles)
    )
    return np.exp(2j * math.pi * frequency * tau)


def steering_matrix(
    geometry: ArrayGeometry,
    frequency: float,
    elevations: np.ndarray,
    azimuths: np.ndarray,
) -> np.ndarray:
    """Steering vectors for paired (elevation, azimuth) arrays, shape (n, total_mics)."""
    _check_frequency(geometry, frequency)
    elevations = np.atleast_1d(np.asarray(elevations, dtype=float))
    azimuths = np.atleast_1d(np.asarray(azimuths, dtype=float))
    tau = (
        -(geometry.mic_radii[None, :] / geometry.sound_speed)
        * np.sin(elevations)[:, None]
        * np.cos(azimuths[:, None] - geometry.mic_angles[None, :])
    )
    return np.exp(2j * math.pi * frequency * tau)


def beampattern(h: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """Array response h^H d per direction; ``steering`` is (n, mics) or (mics,)."""
    h = np.asarray(h)
    steering = np.asarray(steering)
    if steering.shape[-1] != h.shape[0]:
        raise ValueError(
            f"filter length {h.shape[0]} does not match steering width {steering.shape[-1]}"
        )
    return steering @ np.conj(h)


def beampattern_grid(
    geometry: ArrayGeometry, h: np.ndarray, frequency: float, grid: AngularGrid
) -> np.ndarray:
    """Complex response over a full grid, shape (n_elevations, n_azimuths)."""
    th, ph = np.meshgrid(grid.elevations, grid.azimuths, indexing="ij")
    flat = beampattern(h, steering_matrix(geometry, frequency, th.ravel(), ph.ravel()))
    return flat.reshape(th.shape)


@dataclass(frozen=True)
class SteeringField:
    """Steering vectors on a shared grid for a list of frequency bands."""

    frequencies: tuple[float, ...]
    grid: AngularGrid
    values: tuple[np.ndarray, ...]  # per band, (total_mics, n_elev * n_azim)

    def band(self, index: int) -> np.ndarray:
        return self.values[index]


def build_steering_field(
    geometry: ArrayGeometry, frequencies, grid: AngularGrid
) -> SteeringField:
    th, ph = np.meshgrid(grid.elevations, grid.azimuths, indexing="ij")
    values = []
    for f in frequencies:
        mat = steering_matrix(geometry, f, th.ravel(), ph.ravel())
        values.append(mat.T.copy())
    return SteeringField(
        frequencies=tuple(float(f) for f in frequencies), grid=grid, values=tuple(values)
    )


def pattern_db(values: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    """Magnitude in dB relative to a unit mainlobe, floored to avoid log(0)."""
    power = np.abs(np.asarray(values)) ** 2 + floor
    return 10.0 * np.log10(power)


def export_beampattern_csv(
    path: str | Path,
    elevations: np.ndarray,
    azimuths: np.ndarray,
    pattern_db_grid: np.ndarray,
) -> None:
    """Rows are elevation, columns azimuth, cells dB re mainlobe."""
    pattern_db_grid = np.asarray(pattern_db_grid)
    if pattern_db_grid.shape != (len(elevations), len(azimuths)):
        raise ValueError("pattern grid shape does not match the angle axes")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["elevation_deg\\azimuth_deg"] + [f"{math.degrees(a):.3f}" for a in azimuths])
        for i, el in enumerate(elevations):
            writer.writerow(
                [f"{math.degrees(el):.3f}"] + [f"{v:.6f}" for v in pattern_db_grid[i]]
            )
