"""Empirical, true, and worst-case-neighborhood (diametrical) risk.

The diametrical risk of w at radius gamma is the supremum of the empirical
risk over all parameter perturbations of norm at most gamma. Two estimators
are provided: an exact-by-construction 1-D grid oracle (the grid is augmented
with every breakpoint of piecewise losses, so piecewise-linear suprema are
exact), and a sampled outer approximation that maximizes over random
directions of norm exactly gamma, matching what the training algorithms do.
The sampled estimate never exceeds the true supremum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .losses import LossModel, Sample
from .params import NormKind, ParamVector, axpy, sample_sphere


@dataclass(frozen=True)
class Exact:
    pass


@dataclass(frozen=True)
class Grid:
    points: int


@dataclass(frozen=True)
class Sampled:
    r: int
    seed: Optional[int] = None


@dataclass
class RiskEstimate:
    value: float
    method: Union[Exact, Grid, Sampled]
    gamma: float
    worst_direction: Optional[ParamVector] = None
    worst_index: Optional[int] = None


@dataclass
class TrueRiskEstimate:
    value: float
    stderr: float
    n: int


@dataclass
class McConfig:
    """Monte-Carlo fallback for true risk: n draws from the data distribution."""

    n: int
    rng: np.random.Generator
    sampler: Optional[callable] = None  # rng -> Sample; defaults to model.sample_z


def _samples_of(S) -> Sequence[Sample]:
    return S.samples if hasattr(S, "samples") else S


def empirical_risk(model: LossModel, w, S) -> float:
    """Mean loss over the sample, accumulated in fixed index order."""
    samples = _samples_of(S)
    if len(samples) == 0:
        raise ValueError("empty sample")
    return model.batch_risk(w, samples)


def label_risk_curves(model, w_points: np.ndarray, labels) -> np.ndarray:
    """Empirical risk at each w point for a label-only loss.

    Groups the sample by label value, so the sum over m samples becomes a
    count-weighted sum over distinct labels (the two are the same sum up to
    floating-point rounding). Labels are combined in ascending order.
    """
    w_points = np.asarray(w_points, dtype=np.float64)
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    acc = np.zeros_like(w_points)
    for lab, count in zip(values, counts):
        acc = acc + count * model.eval_scalar(w_points, int(lab))
    return acc / counts.sum()


def empirical_risk_curve(model, w_points: np.ndarray, S) -> np.ndarray:
    """Empirical risk of a 1-D loss evaluated at every point of w_points."""
    samples = _samples_of(S)
    if len(samples) == 0:
        raise ValueError("empty sample")
    w_points = np.asarray(w_points, dtype=np.float64)
    if getattr(model, "label_sufficient", False):
        return label_risk_curves(model, w_points, [z.label for z in samples])
    acc = np.zeros_like(w_points)
    for z in samples:
        acc = acc + model.eval_curve(w_points, z)
    return acc / len(samples)


def true_risk(model: LossModel, w, mc: Optional[McConfig] = None) -> TrueRiskEstimate:
    """Analytic expected loss when the model knows it, else a Monte-Carlo mean.

    The Monte-Carlo path reports the standard error of the mean alongside the
    estimate.
    """
    if model.true_risk is not None:
        return TrueRiskEstimate(value=float(model.true_risk(w)), stderr=0.0, n=0)
    if mc is None:
        raise ValueError("model has no analytic true risk and no mc config was given")
    sampler = mc.sampler if mc.sampler is not None else getattr(model, "sample_z", None)
    if sampler is None:
        raise ValueError("mc config needs a sampler for this model")
    if mc.n < 2:
        raise ValueError("mc.n must be >= 2 to report a standard error")
    values = np.array([model.eval(w, sampler(mc.rng)) for _ in range(mc.n)])
    return TrueRiskEstimate(
        value=float(values.mean()),
        stderr=float(values.std(ddof=1) / np.sqrt(mc.n)),
        n=mc.n,
    )


def neighborhood_grid_1d(model, w: float, gamma: float, grid_points: int) -> np.ndarray:
    """Evaluation grid on [w - gamma, w + gamma]: uniform points, the center,
    plus every declared loss breakpoint that falls inside the interval."""
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    lo, hi = w - gamma, w + gamma
    pts = [np.linspace(lo, hi, grid_points), np.array([w])]
    bps = [b for b in getattr(model, "breakpoints", ()) if lo <= b <= hi]
    if bps:
        pts.append(np.array(bps, dtype=np.float64))
    return np.unique(np.concatenate(pts))


def diametrical_risk_grid_1d(
    model, w: float, gamma: float, S, grid_points: int = 4097
) -> RiskEstimate:
    """Worst empirical risk over the radius-gamma interval around scalar w.

    Exact for piecewise-linear losses because every breakpoint in range is a
    grid point; a lower bound on the supremum otherwise. gamma = 0 returns
    the empirical risk itself, exactly.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    w = float(w)
    if gamma == 0.0:
        wrapped = model.wrap(w) if hasattr(model, "wrap") else w
        return RiskEstimate(value=empirical_risk(model, wrapped, S), method=Exact(), gamma=0.0)
    pts = neighborhood_grid_1d(model, w, gamma, grid_points)
    values = empirical_risk_curve(model, pts, S)
    return RiskEstimate(value=float(values.max()), method=Grid(len(pts)), gamma=gamma)


def diametrical_risk_sampled(
    model: LossModel,
    w: ParamVector,
    gamma: float,
    kind: NormKind,
    r: int,
    S,
    rng: Union[np.random.Generator, int],
) -> RiskEstimate:
    """Max empirical risk over r random directions of norm exactly gamma.

    Deterministic given the seed; ties in the maximum go to the lowest draw
    index, so a parallel evaluation with the same draws reduces identically.
    The argmax direction is recorded on the estimate.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    seed = None
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        rng = np.random.default_rng(seed)
    samples = _samples_of(S)
    best_value = -np.inf
    best_index = -1
    best_direction = None
    for i in range(r):
        u = sample_sphere(w, gamma, kind, rng)
        value = model.batch_risk(axpy(w, 1.0, u), samples)
        if value > best_value:
            best_value, best_index, best_direction = value, i, u
    return RiskEstimate(
        value=float(best_value),
        method=Sampled(r=r, seed=seed),
        gamma=gamma,
        worst_direction=best_direction,
        worst_index=best_index,
    )
