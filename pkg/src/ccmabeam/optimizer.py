"""Resilient-propagation optimization of the ring-weight design.

The update rule is the sign-based variant without weight backtracking:
a gradient sign flip shrinks the per-coordinate step and skips that
coordinate for one iteration (its stored sign is reset), a repeated sign
grows the step, and parameters always move by the signed step.

The design pipeline assembles one differentiation tape per iteration
covering every frequency band jointly, since the across-band loss terms
couple the bands.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import CVar, Tape, Var
from .geometry import ArrayGeometry
from .loss import LossConfig, total_loss
from .metrics import (
    DELTA_L_DB,
    GAMMA_DIAGONAL_REG,
    PATTERN_POWER_FLOOR,
    MetricCurves,
    NumericalError,
    beamwidth_parabola,
    build_fit_cuts,
    evaluate_params,
    gamma_matrix,
)
from .wavefield import Direction, steering_matrix, steering_vector
from .weighting import DesignParams, SIGMA_FLOOR, constrain_band, ring_distances, softplus_inverse

__all__ = [
    "RPropConfig",
    "RPropState",
    "rprop_step",
    "IterationRow",
    "RunRecord",
    "OptimizeResult",
    "DesignPipeline",
    "optimize",
]

INITIAL_SIGMA = 0.5
INIT_NOISE = 1e-3


@dataclass(frozen=True)
class RPropConfig:
    initial_step: float = 0.1
    grow: float = 1.2
    shrink: float = 0.5
    step_min: float = 1e-6
    step_max: float = 50.0

    def __post_init__(self):
        if not (self.grow > 1.0 > self.shrink > 0.0):
            raise ValueError("rprop scale factors must satisfy grow > 1 > shrink > 0")
        if not (0.0 < self.step_min <= self.initial_step <= self.step_max):
            raise ValueError("rprop step bounds must satisfy min <= initial <= max")


@dataclass
class RPropState:
    """Per-coordinate step sizes and the previous gradient (0 marks a reset)."""

    steps: np.ndarray
    prev_grad: np.ndarray

    @classmethod
    def create(cls, n: int, config: RPropConfig = RPropConfig()) -> "RPropState":
        return cls(steps=np.full(n, config.initial_step), prev_grad=np.zeros(n))


def rprop_step(
    state: RPropState,
    gradient: np.ndarray,
    params: np.ndarray,
    config: RPropConfig = RPropConfig(),
) -> np.ndarray:
    """One sign-based update; returns the new parameter vector."""
    g = np.array(gradient, dtype=float)
    if g.shape != state.steps.shape:
        raise ValueError("gradient length does not match the optimizer state")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise NumericalError(f"non-finite gradient in coordinates {bad.tolist()[:8]}")
    product = g * state.prev_grad
    grew = product > 0.0
    flipped = product < 0.0
    state.steps[grew] = np.minimum(state.steps[grew] * config.grow, config.step_max)
    state.steps[flipped] = np.maximum(state.steps[flipped] * config.shrink, config.step_min)
    g[flipped] = 0.0  # skip flipped coordinates this iteration, reset their sign
    new_params = params - np.sign(g) * state.steps
    state.prev_grad = g
    return new_params


@dataclass(frozen=True)
class IterationRow:
    iteration: int
    loss: float
    theta: tuple[float, ...]
    phi: tuple[float, ...]
    df: tuple[float, ...]
    wng: tuple[float, ...]


@dataclass
class RunRecord:
    """Loss and metric trace of one optimization run."""

    frequencies: tuple[float, ...]
    rows: list[IterationRow]
    stopping_reason: str

    @property
    def iteration_count(self) -> int:
        return len(self.rows)

    def losses(self) -> np.ndarray:
        return np.array([row.loss for row in self.rows])

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.losses())

    def to_csv(self, path: str | Path) -> None:
        header = ["iteration", "loss"]
        for f in self.frequencies:
            tag = f"{f:g}"
            header += [
                f"theta_deg_{tag}",
                f"phi_deg_{tag}",
                f"df_db_{tag}",
                f"wng_db_{tag}",
            ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in self.rows:
                cells = [str(row.iteration), f"{row.loss:.9e}"]
                for b in range(len(self.frequencies)):
                    cells += [
                        f"{math.degrees(row.theta[b]):.6f}",
                        f"{math.degrees(row.phi[b]):.6f}",
                        f"{10.0 * math.log10(row.df[b]):.6f}",
                        f"{10.0 * math.log10(row.wng[b]):.6f}",
                    ]
                writer.writerow(cells)


class _CutData(NamedTuple):
    x: np.ndarray
    doa_index: int
    sigma: float
    e_re: np.ndarray  # (points, mics) response coefficients, real part
    e_im: np.ndarray


class _BandData(NamedTuple):
    frequency: float
    a_gamma: np.ndarray  # (mics, mics) diffuse quadratic form over real gains
    theta_cut: _CutData
    phi_cut: _CutData


def _mod2(re, im):
    if isinstance(re, Var):
        return CVar(re, im).modulus2()
    return re * re + im * im


class DesignPipeline:
    """Differentiable map from unconstrained parameters to the design loss.

    All geometry-dependent quantities (window distances, steering phases
    along the fit cuts, diffuse-coherence quadratic forms) are constant
    per direction-of-arrival and are precomputed once.  ``build_loss``
    accepts tape variables or plain floats, so the same object serves the
    optimizer and finite-difference checks.
    """

    def __init__(
        self,
        geometry: ArrayGeometry,
        doa: Direction,
        frequencies: Sequence[float],
        loss_config: LossConfig,
        grid_resolution: float = math.radians(1.0),
        delta_l: float = DELTA_L_DB,
    ):
        if len(frequencies) == 0:
            raise ValueError("at least one frequency band is required")
        self.geometry = geometry
        self.doa = doa
        self.frequencies = tuple(float(f) for f in frequencies)
        self.loss_config = loss_config
        self.delta_l = delta_l
        self.delta_sq = [
            ring_distances(geometry, r, doa) ** 2 for r in range(geometry.ring_count)
        ]
        self.bands = [
            self._band_data(f, grid_resolution) for f in self.frequencies
        ]

    def _band_data(self, frequency: float, grid_resolution: float) -> _BandData:
        geometry = self.geometry
        d = steering_vector(geometry, frequency, self.doa)
        a_gamma = gamma_matrix(geometry, frequency) * np.real(np.outer(np.conj(d), d))

        def cut_data(cut) -> _CutData:
            steer = steering_matrix(geometry, frequency, cut.elevations, cut.azimuths)
            coeff = steer * np.conj(d)[None, :]
            return _CutData(
                x=cut.x,
                doa_index=cut.doa_index,
                sigma=cut.sigma,
                e_re=np.ascontiguousarray(coeff.real),
                e_im=np.ascontiguousarray(coeff.imag),
            )

        theta_cut, phi_cut = build_fit_cuts(geometry, self.doa, frequency, grid_resolution)
        return _BandData(frequency, a_gamma, cut_data(theta_cut), cut_data(phi_cut))

    @property
    def param_count(self) -> int:
        return 2 * self.geometry.ring_count * len(self.frequencies)

    def initial_params(self, seed: int) -> np.ndarray:
        """Near-uniform start: equal ring weights, sigma about INITIAL_SIGMA,
        plus a seeded +-INIT_NOISE jitter to break ring symmetry."""
        rings = self.geometry.ring_count
        base = np.zeros(self.param_count)
        v0 = softplus_inverse(INITIAL_SIGMA - SIGMA_FLOOR)
        for b in range(len(self.frequencies)):
            base[(2 * b + 1) * rings : (2 * b + 2) * rings] = v0
        rng = np.random.default_rng(seed)
        return base + rng.uniform(-INIT_NOISE, INIT_NOISE, self.param_count)

    def split_vector(self, x: np.ndarray):
        rings = self.geometry.ring_count
        u_bands, v_bands = [], []
        for b in range(len(self.frequencies)):
            lo = 2 * b * rings
            u_bands.append(np.asarray(x[lo : lo + rings]))
            v_bands.append(np.asarray(x[lo + rings : lo + 2 * rings]))
        return u_bands, v_bands

    def params_from_vector(self, x: np.ndarray) -> DesignParams:
        u_bands, v_bands = self.split_vector(x)
        return DesignParams.from_unconstrained(self.frequencies, u_bands, v_bands)

    def build_loss(self, x: Sequence):
        """Loss of a flat parameter vector (Vars or floats).

        Layout per band: ring-weight parameters, then width parameters.
        Returns (loss, detached BandLossTerms snapshot).
        """
        if len(x) != self.param_count:
            raise ValueError(f"expected {self.param_count} parameters, got {len(x)}")
        rings = self.geometry.ring_count
        thetas, phis, dfs, wngs = [], [], [], []
        for b, band in enumerate(self.bands):
            lo = 2 * b * rings
            u = x[lo : lo + rings]
            v = x[lo + rings : lo + 2 * rings]
            weights, sigmas = constrain_band(u, v)

            taps = []
            for r in range(rings):
                scale = -0.5 / (sigmas[r] * sigmas[r])
                taps.append([ad.exp(d2 * scale) for d2 in self.delta_sq[r]])
            # per-mic gains created back to back so reductions see one span
            gains = []
            for r in range(rings):
                w = weights[r]
                gains.extend(w * s for s in taps[r])

            total = ad.vsum(gains)
            power = total * total
            filter_power = ad.sumsq(gains)
            diffuse = ad.quadform(gains, band.a_gamma)
            # floor matching directivity_factor: guards an indefinite form
            # without biasing the well-conditioned case
            df = power / ad.vmax(diffuse, GAMMA_DIAGONAL_REG * filter_power)
            wng = power / filter_power
            norm_db = 10.0 * ad.log10(power)

            def cut_widths(cut: _CutData):
                res = ad.lincomb_many(gains, cut.e_re)
                ims = ad.lincomb_many(gains, cut.e_im)
                db = [
                    10.0 * ad.log10(_mod2(re, im) + PATTERN_POWER_FLOOR) - norm_db
                    for re, im in zip(res, ims)
                ]
                width, _ = beamwidth_parabola(
                    cut.x, db, cut.doa_index, cut.sigma, self.delta_l
                )
                return width

            thetas.append(cut_widths(band.theta_cut))
            phis.append(cut_widths(band.phi_cut))
            dfs.append(df)
            wngs.append(wng)
        return total_loss(thetas, phis, dfs, wngs, self.loss_config)


class OptimizeResult(NamedTuple):
    params: DesignParams
    curves: MetricCurves
    record: RunRecord


def optimize(
    geometry: ArrayGeometry,
    doa: Direction,
    frequencies: Sequence[float],
    loss_config: LossConfig,
    budget: int,
    seed: int = 0,
    grid_resolution: float = math.radians(1.0),
    rprop_config: RPropConfig = RPropConfig(),
    no_improve_limit: int = 200,
    improve_tol: float = 1e-6,
    delta_l: float = DELTA_L_DB,
) -> OptimizeResult:
    """Jointly optimize all bands; returns the best parameters seen.

    Deterministic for a fixed seed.  Stops at the iteration budget or
    after ``no_improve_limit`` iterations without the best loss improving
    by more than ``improve_tol``.
    """
    if budget < 1:
        raise ValueError("iteration budget must be at least 1")
    pipeline = DesignPipeline(
        geometry, doa, frequencies, loss_config, grid_resolution, delta_l
    )
    x = pipeline.initial_params(seed)
    state = RPropState.create(len(x), rprop_config)
    rows: list[IterationRow] = []
    best_loss = math.inf
    best_x = x.copy()
    no_improve = 0
    reason = "budget_exhausted"
    for it in range(1, budget + 1):
        tape = Tape()
        leaves = [tape.var(value) for value in x]
        value, snap = pipeline.build_loss(leaves)
        current = value.value
        if not math.isfinite(current):
            raise NumericalError(f"loss became non-finite at iteration {it}")
        rows.append(
            IterationRow(
                iteration=it,
                loss=current,
                theta=tuple(snap.theta),
                phi=tuple(snap.phi),
                df=tuple(snap.df),
                wng=tuple(snap.wng),
            )
        )
        if current < best_loss - improve_tol:
            no_improve = 0
        else:
            no_improve += 1
        if current < best_loss:
            best_loss = current
            best_x = x.copy()
        if no_improve >= no_improve_limit:
            reason = "no_improvement"
            break
        if it == budget:
            break
        grads = np.array(tape.gradients(value, leaves))
        x = rprop_step(state, grads, x, rprop_config)
    params = pipeline.params_from_vector(best_x)
    curves = evaluate_params(geometry, doa, params, grid_resolution, delta_l)
    record = RunRecord(pipeline.frequencies, rows, reason)
    return OptimizeResult(params=params, curves=curves, record=record)
