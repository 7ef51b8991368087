"""Design-based finite-sample inference for weak null hypotheses.

Tests of a hypothesized average effect run by simulating assignment
vectors from each candidate assignment model, decomposing the linear
test statistic into observed and null-imputed parts, and bounding the
p-value over the admissible unit-level effect heterogeneity and over
the model class. One set of Monte Carlo draws per model bounds the
entire p-value curve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import Dataset, RngHandle, StrataIndex
from .errors import ConfigError, StatisticNotLinear
from .finite_sample import AssignmentModel


@dataclass(frozen=True)
class HetBounds:
    """Bound c1 >= 0 on unit-level deviations of the treated-vs-control
    effect from its average; c1 = 0 encodes a homogeneous (sharp-null
    style) effect."""

    c1: float = 0.0

    def __post_init__(self):
        if self.c1 < 0:
            raise ConfigError("heterogeneity bound must be nonnegative")

    def epsilon_corners(self) -> tuple[tuple[float, float], ...]:
        if self.c1 == 0.0:
            return ((0.0, 0.0),)
        return tuple(itertools.product((-self.c1, self.c1), repeat=2))


@dataclass(frozen=True, eq=False)
class NullGrid:
    """Sorted, deduplicated grid of hypothesized average effects."""

    values: np.ndarray

    def __post_init__(self):
        v = np.unique(np.asarray(self.values, dtype=float))
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ConfigError("null grid must be nonempty and finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_range(cls, lo: float, hi: float, step: float) -> "NullGrid":
        if step <= 0 or hi < lo:
            raise ConfigError("grid range must be increasing with positive step")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return cls(lo + step * np.arange(count))


@dataclass(frozen=True)
class ModelClass:
    """Explicit finite collection of candidate assignment models."""

    models: tuple[AssignmentModel, ...]

    def __post_init__(self):
        if not self.models:
            raise ConfigError("model class must be nonempty")

    @classmethod
    def single(cls, model: AssignmentModel) -> "ModelClass":
        return cls((model,))

    @classmethod
    def from_lambda_boxes(
        cls,
        boxes: Mapping[int, tuple[float, float]],
        n_strata: int,
        resolution: int = 5,
        max_models: int = 10**4,
    ) -> "ModelClass":
        """Tensor grid over per-stratum treated-probability intervals.

        ``boxes`` maps dense stratum codes to (lo, hi); strata without
        a box get a degenerate point only if supplied explicitly, so
        every stratum must appear. The grid has ``resolution`` points
        per non-degenerate interval.
        """
        if set(boxes) != set(range(n_strata)):
            raise ConfigError("a lambda interval is required for every stratum")
        if resolution < 1:
            raise ConfigError("grid resolution must be at least 1")
        axes = []
        for k in range(n_strata):
            lo, hi = boxes[k]
            if not (0.0 < lo <= hi < 1.0):
                raise ConfigError(f"lambda interval for stratum {k} must lie in (0, 1)")
            axes.append([lo] if lo == hi else list(np.linspace(lo, hi, resolution)))
        total = math.prod(len(a) for a in axes)
        if total > max_models:
            raise ConfigError(f"lambda grid would create {total} models (limit {max_models})")
        models = tuple(
            AssignmentModel.binary(np.asarray(combo)) for combo in itertools.product(*axes)
        )
        return cls(models)


@dataclass(frozen=True)
class ExceedancePolicy:
    """Documents the tie convention: a simulated statistic equal to the
    observed one counts as an exceedance (the event is '>=')."""

    comparison: str = ">="

    def exceeds(self, simulated, observed):
        return simulated >= observed


def randomized_tiebreak_policy(config: Mapping | None = None) -> ExceedancePolicy:
    """The only supported policy: plain '>=' with no added randomization."""
    if config and config.get("comparison", ">=") != ">=":
        raise ConfigError("only the '>=' exceedance convention is supported")
    return ExceedancePolicy()


# ---------------------------------------------------------------------------
# Linear statistics: Q weights as functions of (X, W)
# ---------------------------------------------------------------------------

STATISTICS = ("t_hat", "wmd", "ipw")


def _as_2d(w: np.ndarray) -> tuple[np.ndarray, bool]:
    w = np.asarray(w)
    if w.ndim == 1:
        return w[None, :], True
    return w, False


def _stratum_counts(w2d: np.ndarray, strata: StrataIndex) -> np.ndarray:
    """Per-draw treated counts by stratum: (B, K)."""
    b = w2d.shape[0]
    counts = np.empty((b, strata.n_strata))
    for k, idx in enumerate(strata.members):
        counts[:, k] = w2d[:, idx].sum(axis=1)
    return counts


def statistic_weights(name: str, w, strata: StrataIndex) -> np.ndarray:
    """Per-unit weights Q_i of the named linear statistic, evaluated on
    one assignment vector (n,) or a batch (B, n).

    All supported statistics are linear in the outcome with weights
    depending on (X, W) only; other names are rejected.
    """
    if name not in STATISTICS:
        raise StatisticNotLinear(name)
    w2d, squeeze = _as_2d(w)
    if not np.all((w2d == 0) | (w2d == 1)):
        raise ConfigError("statistic weights are defined for binary assignments only")
    labels = strata.labels
    n_k = strata.counts[labels].astype(float)  # (n,)
    m1 = _stratum_counts(w2d, strata)[:, labels]  # (B, n)
    m0 = n_k[None, :] - m1
    treated = w2d == 1
    control = ~treated

    if name == "t_hat":
        p1 = (m1 - treated) / (n_k - 1.0)
        p0 = (m0 - control) / (n_k - 1.0)
        q = p0 * treated - p1 * control
    elif name == "wmd":
        q = n_k * (treated / np.maximum(1.0, m1) - control / np.maximum(1.0, m0))
    else:  # ipw
        floor = 1.0 / (2.0 * n_k - 2.0)
        p1 = (m1 - treated) / (n_k - 1.0)
        p0 = (m0 - control) / (n_k - 1.0)
        q = treated / np.maximum(p1, floor) - control / np.maximum(p0, floor)
    return q[0] if squeeze else q


def observed_statistic(data: Dataset, strata: StrataIndex, name: str) -> float:
    q = statistic_weights(name, data.w, strata)
    return float(np.mean(q * data.y))


def _require_binary(data: Dataset) -> None:
    if data.treatments != (0, 1):
        raise ConfigError("p-value bounds are implemented for binary treatments only")


def omega_parts(
    data: Dataset, strata: StrataIndex, w_sim: np.ndarray, statistic: str
) -> np.ndarray:
    """Statistic decomposition for given simulated assignments (B, n).

    Columns: observed-outcome part, imputation slope, and the slope's
    positive and negative components (for the heterogeneity corners).
    All use weights evaluated on the simulated assignment.
    """
    w_sim = np.atleast_2d(np.asarray(w_sim))
    q = statistic_weights(statistic, w_sim, strata)
    omega1 = q @ data.y / data.n
    u = q * (w_sim - data.w[None, :]) / data.n
    omega2 = u.sum(axis=1)
    omega3 = np.where(u >= 0, u, 0.0).sum(axis=1)
    omega4 = np.where(u < 0, u, 0.0).sum(axis=1)
    return np.column_stack([omega1, omega2, omega3, omega4])


def draw_omegas(
    data: Dataset,
    strata: StrataIndex,
    model: AssignmentModel,
    statistic: str,
    draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Simulate assignment vectors under the model and decompose the
    statistic; returns a (draws, 4) array of omega parts."""
    _require_binary(data)
    if draws < 1:
        raise ConfigError("at least one Monte Carlo draw is required")
    lam1 = model.lam[strata.labels, 1]
    w_sim = (rng.random((draws, data.n)) < lam1[None, :]).astype(np.int64)
    return omega_parts(data, strata, w_sim, statistic)


@dataclass(frozen=True, eq=False)
class PValueBounds:
    """Lower/upper p-value curves over the null grid."""

    grid: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    draws: int
    statistic: str
    n_models: int
    c1: float
    observed: float

    def __post_init__(self):
        if np.any(self.p_lo > self.p_hi + 1e-15):
            raise ConfigError("p-value bounds are crossed")


def pvalue_bounds(
    data: Dataset,
    strata: StrataIndex,
    statistic: str,
    grid: NullGrid,
    models: ModelClass,
    het: HetBounds,
    draws: int,
    rng: RngHandle,
) -> PValueBounds:
    """Bound the p-value curve for weak nulls on the average effect.

    For each candidate model, a single batch of simulated assignments
    is reused across the whole grid and all heterogeneity corners; the
    reported curves are the pointwise extrema of the Monte Carlo
    exceedance frequencies.
    """
    if statistic not in STATISTICS:
        raise StatisticNotLinear(statistic)
    t_obs = observed_statistic(data, strata, statistic)
    tbar = grid.values
    p_lo = np.full(tbar.shape, np.inf)
    p_hi = np.full(tbar.shape, -np.inf)
    corners = het.epsilon_corners()
    for l_index, model in enumerate(models.models):
        gen = rng.child(l_index).generator()
        om = draw_omegas(data, strata, model, statistic, draws, gen)
        base = om[:, 0][:, None] + np.outer(om[:, 1], tbar)  # (B, G)
        for eps3, eps4 in corners:
            stats = base + (eps3 * om[:, 2] + eps4 * om[:, 3])[:, None]
            p = np.mean(stats >= t_obs, axis=0)
            p_lo = np.minimum(p_lo, p)
            p_hi = np.maximum(p_hi, p)
    return PValueBounds(
        grid=tbar,
        p_lo=p_lo,
        p_hi=p_hi,
        draws=draws,
        statistic=statistic,
        n_models=len(models.models),
        c1=het.c1,
        observed=t_obs,
    )


def confidence_set(pvb: PValueBounds, alpha: float) -> np.ndarray:
    """Grid points retained at level alpha: upper p-value bound > alpha.

    Retaining on the upper bound is the conservative inversion; the
    result is a grid subset and is not forced to be an interval.
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError("alpha must lie strictly between 0 and 1")
    return pvb.grid[pvb.p_hi > alpha]
