"""Objective functions for the beamwidth-constrained design problem.

All three variants share the piecewise structure: a band whose
beamwidth overshoots its target is penalized by that beamwidth directly,
otherwise a performance term takes over.  Branch selection happens on
detached values so gradients flow only through the active branch.
Beamwidths enter in radians; conversion to degrees is an I/O concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import value_of

__all__ = ["LossConfig", "BandLossTerms", "loss_l1", "loss_l2", "loss_l3", "total_loss"]

VARIANTS = ("L1", "L2", "L3")

# slack below target before the broadening branch of L2 engages
L2_TOLERANCE = math.radians(1.0)

STD_EPS = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Loss variant selection and its weighting knobs.

    ``alpha`` trades directivity against white noise gain inside the
    performance term; ``lambda1``/``lambda2`` weight the across-band
    standard deviations of DF and WNG; ``lambda3`` weights the mismatch
    between opposing bands.  Targets are radians.
    """

    variant: str
    target_theta: float
    target_phi: float
    alpha: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 < self.target_theta <= math.pi or not 0.0 < self.target_phi <= math.pi:
            raise ValueError("beamwidth targets must lie in (0, pi] radians")


@dataclass
class BandLossTerms:
    """Detached snapshot of the assembled loss (floats only)."""

    theta: list[float]
    phi: list[float]
    df: list[float]
    wng: list[float]
    branches: list[str]
    band_values: list[float]
    p: list[float] | None = None
    i_term: float = 0.0
    delta_term: float = 0.0
    total: float = 0.0


def _branch(theta, phi, cfg: LossConfig) -> str:
    over_t = value_of(theta) > cfg.target_theta
    over_p = value_of(phi) > cfg.target_phi
    if over_t and not over_p:
        return "theta"
    if over_p and not over_t:
        return "phi"
    if over_t and over_p:
        return "both"
    return "perf"


def loss_l1(theta, phi, df, cfg: LossConfig):
    """Beamwidth overshoot penalty, otherwise maximize directivity.

    When both widths overshoot, their sum is penalized so each keeps a
    descent direction.
    """
    branch = _branch(theta, phi, cfg)
    if branch == "theta":
        return theta
    if branch == "phi":
        return phi
    if branch == "both":
        return theta + phi
    return -ad.log10(df)


def loss_l2(theta, phi, df, cfg: LossConfig):
    """Like L1, but a clearly undershooting band reduces directivity instead.

    When both widths sit more than a small tolerance below target the
    directivity term flips sign, trading DF away to broaden the mainlobe.
    """
    branch = _branch(theta, phi, cfg)
    if branch == "theta":
        return theta
    if branch == "phi":
        return phi
    if branch == "both":
        return theta + phi
    under_t = value_of(theta) < cfg.target_theta - L2_TOLERANCE
    under_p = value_of(phi) < cfg.target_phi - L2_TOLERANCE
    if under_t and under_p:
        return ad.log10(df)
    return -ad.log10(df)


def _perf_term(df, wng, alpha: float):
    # exact shortcuts keep the alpha endpoints bit-compatible with L1/L2
    if alpha == 1.0:
        return -ad.log10(df)
    if alpha == 0.0:
        return -ad.log10(wng)
    return -(alpha * ad.log10(df)) - ((1.0 - alpha) * ad.log10(wng))


def _fold_sum(values):
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total


def _std(values, eps: float = STD_EPS):
    n = len(values)
    mean = _fold_sum(values) / n
    deviations = [(v - mean) * (v - mean) for v in values]
    return ad.sqrt(_fold_sum(deviations) / n + eps)


def loss_l3(thetas, phis, dfs, wngs, cfg: LossConfig):
    """Banded piecewise loss plus across-band invariance regularizers.

    Per band the branch value is the L1 overshoot penalty or the
    alpha-weighted performance term.  The invariance term adds the
    population standard deviations of DF and WNG; the difference term
    adds |P_i - P_(F-i+1)| over opposing band pairs (1-based i from 2 to
    floor(F/2)).  Both global terms are skipped exactly when their
    weights are zero, which makes the (alpha=1, lambdas=0) configuration
    reduce bit-identically to the sum of per-band L1 values.
    """
    count = len(thetas)
    if count < 2:
        raise ValueError("the banded loss needs at least 2 frequency bands")
    terms = []
    branches = []
    for theta, phi, df, wng in zip(thetas, phis, dfs, wngs):
        branch = _branch(theta, phi, cfg)
        branches.append(branch)
        if branch == "theta":
            terms.append(theta)
        elif branch == "phi":
            terms.append(phi)
        elif branch == "both":
            terms.append(theta + phi)
        else:
            terms.append(_perf_term(df, wng, cfg.alpha))
    total = _fold_sum(terms)

    i_term = 0.0
    if cfg.lambda1 > 0.0:
        i_term = i_term + cfg.lambda1 * _std(dfs)
    if cfg.lambda2 > 0.0:
        i_term = i_term + cfg.lambda2 * _std(wngs)
    if cfg.lambda1 > 0.0 or cfg.lambda2 > 0.0:
        total = total + i_term

    delta_term = 0.0
    p_values = None
    if cfg.lambda3 > 0.0:
        p_values = [_perf_term(df, wng, cfg.alpha) for df, wng in zip(dfs, wngs)]
        diffs = [
            abs(p_values[i - 1] - p_values[count - i])
            for i in range(2, count // 2 + 1)
        ]
        if diffs:
            delta_term = cfg.lambda3 * _fold_sum(diffs)
            total = total + delta_term

    snapshot = BandLossTerms(
        theta=[value_of(t) for t in thetas],
        phi=[value_of(p) for p in phis],
        df=[value_of(d) for d in dfs],
        wng=[value_of(w) for w in wngs],
        branches=branches,
        band_values=[value_of(t) for t in terms],
        p=None if p_values is None else [value_of(p) for p in p_values],
        i_term=value_of(i_term),
        delta_term=value_of(delta_term),
        total=value_of(total),
    )
    return total, snapshot


def total_loss(thetas, phis, dfs, wngs, cfg: LossConfig):
    """Assemble the configured variant over all bands.

    Returns the scalar objective (Var or float, matching the inputs) and
    a detached :class:`BandLossTerms` snapshot.
    """
    if cfg.variant == "L3":
        return loss_l3(thetas, phis, dfs, wngs, cfg)
    band_fn = loss_l1 if cfg.variant == "L1" else loss_l2
    terms = [band_fn(t, p, d, cfg) for t, p, d in zip(thetas, phis, dfs)]
    total = _fold_sum(terms)
    snapshot = BandLossTerms(
        theta=[value_of(t) for t in thetas],
        phi=[value_of(p) for p in phis],
        df=[value_of(d) for d in dfs],
        wng=[value_of(w) for w in wngs],
        branches=[_branch(t, p, cfg) for t, p in zip(thetas, phis)],
        band_values=[value_of(t) for t in terms],
        total=value_of(total),
    )
    return total, snapshot
