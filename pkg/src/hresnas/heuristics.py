"""Scoring and decision rules that steer the search: neuron importance,
prune selection, stochastic growth allocation, the layer-growth threshold,
and the loss-curve flattening test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import ShapeError

IMPORTANCE_EXPONENT = 33  # fixed constant of the method, overridable per call

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class EmptyCatalogError(ValueError):
    """Raised when an allocation is requested but there is no layer to grow."""


class ImportanceAccumulator:
    """Running per-neuron sums of |activation * activation-gradient| and
    fire counts, collected over one pass of the dataset.

    Keyed by the layer id of the residual block owning the hidden neurons.
    """

    def __init__(self) -> None:
        self.sum_abs_prod: dict[int, np.ndarray] = {}
        self.nonzero_count: dict[int, np.ndarray] = {}
        # per-layer sample counts; all equal after a full pass, but counting
        # per layer keeps batch-streaming from several layers exact
        self.seen: dict[int, int] = {}

    def reset(self) -> None:
        self.sum_abs_prod.clear()
        self.nonzero_count.clear()
        self.seen.clear()

    @property
    def n_samples(self) -> int:
        return max(self.seen.values(), default=0)

    def accumulate(self, layer_id: int, activations: np.ndarray,
                   activation_grads: np.ndarray) -> None:
        if activations.shape != activation_grads.shape or activations.ndim != 2:
            raise ShapeError(
                f"accumulate: activations {activations.shape} and grads "
                f"{activation_grads.shape} must be equal batch x width matrices"
            )
        prod = np.abs(activations * activation_grads).sum(axis=0)
        fired = (activations > 0).sum(axis=0)
        if layer_id in self.sum_abs_prod:
            if self.sum_abs_prod[layer_id].shape != prod.shape:
                raise ShapeError(
                    f"accumulate: layer {layer_id} width changed mid-pass"
                )
            self.sum_abs_prod[layer_id] += prod
            self.nonzero_count[layer_id] += fired
        else:
            self.sum_abs_prod[layer_id] = prod.astype(np.float64)
            self.nonzero_count[layer_id] = fired.astype(np.int64)
        self.seen[layer_id] = self.seen.get(layer_id, 0) + activations.shape[0]


def importance_scores(acc: ImportanceAccumulator,
                      exponent: int = IMPORTANCE_EXPONENT) -> dict[int, np.ndarray]:
    """Per-neuron score A * (1 - B^exponent).

    A is the accumulated |activation * gradient| mass and B the fraction of
    samples on which the neuron fired; raising B to a high power means the
    penalty only bites for neurons that fire on (nearly) every sample.
    """
    if acc.n_samples <= 0:
        raise ValueError("importance_scores: accumulator has seen no samples")
    scores: dict[int, np.ndarray] = {}
    for layer_id, a in acc.sum_abs_prod.items():
        b = acc.nonzero_count[layer_id] / acc.seen[layer_id]
        scores[layer_id] = a * (1.0 - b ** exponent)
    return scores


@dataclass
class PruneSelection:
    victims: list[tuple[int, int]]
    shortfall: int = 0


def select_prune(scores: dict[int, np.ndarray], m: int,
                 layer_order: list[int]) -> PruneSelection:
    """Pick the m globally lowest-scoring neurons.

    Ties break by position in `layer_order` then neuron index, so the result
    does not depend on the iteration order of `scores`. Asking for more
    neurons than exist returns everything and reports the shortfall.
    """
    if m < 0:
        raise ValueError("select_prune: m must be >= 0")
    order = {layer_id: pos for pos, layer_id in enumerate(layer_order)}
    entries = []
    for layer_id, layer_scores in scores.items():
        pos = order[layer_id]
        for neuron, score in enumerate(layer_scores):
            entries.append((float(score), pos, neuron, layer_id))
    entries.sort(key=lambda e: e[:3])
    taken = entries[:m]
    return PruneSelection(
        victims=[(layer_id, neuron) for _, _, neuron, layer_id in taken],
        shortfall=max(0, m - len(entries)),
    )


@dataclass
class GrowthAllocator:
    """Distributes new neurons across layers, biased toward layers whose
    neuron count has been growing.

    Keeps an exponential moving average of each layer's net neuron change;
    70% of a growth budget is drawn multinomially with probability
    proportional to the (clamped-nonnegative) average, the rest uniformly.
    """

    alpha: float = 0.5
    seed: int = 0
    ma: dict[int, float] = field(default_factory=dict)

    def update(self, delta: dict[int, float]) -> None:
        """Fold per-layer net neuron changes into the moving averages."""
        for layer_id, d in delta.items():
            prev = self.ma.get(layer_id, 0.0)
            self.ma[layer_id] = self.alpha * d + (1.0 - self.alpha) * prev

    def drop_missing(self, layer_ids: list[int]) -> None:
        """Forget layers that no longer exist."""
        live = set(layer_ids)
        for layer_id in [k for k in self.ma if k not in live]:
            del self.ma[layer_id]

    def allocate(self, total: int, layer_ids: list[int],
                 rng: np.random.Generator | None = None) -> dict[int, int]:
        if not layer_ids:
            raise EmptyCatalogError("allocate: no layers to grow")
        if total < 0:
            raise ValueError("allocate: total must be >= 0")
        if rng is None:
            rng = np.random.default_rng(self.seed)
        n = len(layer_ids)
        counts = np.zeros(n, dtype=np.int64)
        n_biased = int(0.7 * total)
        weights = np.array([max(self.ma.get(i, 0.0), 0.0) for i in layer_ids])
        if weights.sum() > 0:
            p = weights / weights.sum()
        else:
            p = np.full(n, 1.0 / n)
        counts += rng.multinomial(n_biased, p)
        counts += rng.multinomial(total - n_biased, np.full(n, 1.0 / n))
        return {layer_id: int(c) for layer_id, c in zip(layer_ids, counts)}


def growth_threshold(fan_in: int, fan_out: int) -> float:
    """Hidden-width limit (fan_in * fan_out^2)^(1/3) past which a residual
    block's linear inners should become residual blocks themselves."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("growth_threshold: dimensions must be >= 1")
    return float(np.cbrt(float(fan_in) * float(fan_out) ** 2))


@dataclass
class LossCurveFit:
    """Least-squares fit of normalized per-epoch losses to y = e^(ax)(1-x)."""

    a: float
    residual: float
    n_points: int

    @property
    def flattened(self) -> bool:
        return self.a < -5.0


def _curve_sse(a: float, x: np.ndarray, y: np.ndarray) -> float:
    model = np.exp(a * x) * (1.0 - x)
    return float(np.sum((y - model) ** 2))


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    # standard interval shrink; f assumed unimodal on [lo, hi]
    c = hi - (hi - lo) * _INV_PHI
    d = lo + (hi - lo) * _INV_PHI
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - (hi - lo) * _INV_PHI
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + (hi - lo) * _INV_PHI
            fd = f(d)
    return (lo + hi) / 2.0


def fit_loss_curve(losses) -> LossCurveFit:
    """Fit the current phase's loss history to y = e^(ax)(1-x).

    Epoch indices are mapped linearly onto [0, 1] and losses min-max
    normalized. A coarse grid over a in [-50, 10] is refined by golden
    section. A constant loss history has no scale to normalize by and is
    reported as already flat (a = -inf).
    """
    y_raw = np.asarray(losses, dtype=np.float64)
    if y_raw.size < 3:
        raise ValueError("fit_loss_curve: need at least 3 loss points")
    lo, hi = float(y_raw.min()), float(y_raw.max())
    if hi == lo:
        return LossCurveFit(a=float("-inf"), residual=0.0, n_points=y_raw.size)
    x = np.linspace(0.0, 1.0, y_raw.size)
    y = (y_raw - lo) / (hi - lo)

    grid = np.arange(-50.0, 10.0 + 1e-9, 0.25)
    sse = np.array([_curve_sse(a, x, y) for a in grid])
    best = int(np.argmin(sse))
    a_lo = grid[max(best - 1, 0)]
    a_hi = grid[min(best + 1, grid.size - 1)]
    a = _golden_section(lambda a: _curve_sse(a, x, y), a_lo, a_hi, tol=1e-3)
    return LossCurveFit(a=a, residual=_curve_sse(a, x, y), n_points=y_raw.size)


def should_stop(fit: LossCurveFit | None, epoch: int, max_epochs: int,
                threshold: float = -5.0) -> bool:
    """Stop training once the loss curve has flattened (a < threshold) or the
    epoch budget is exhausted."""
    if epoch >= max_epochs:
        return True
    return fit is not None and fit.a < threshold
