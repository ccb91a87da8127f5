"""Empirical screen for stochastic domination between two samples."""
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from exact.checks import CheckReport
from lattice.configs import Pattern
from lattice.geometry import Box
from montecarlo.engine import RngStream, occupation_matrix
from montecarlo.survival import ConditionedSample
from utils.errors import PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

Samples = Union[ConditionedSample, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class IncreasingFunction:
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]


def _indicator(i: int) -> Callable:
    return lambda occ: occ[:, i]


def _count(idx: np.ndarray) -> Callable:
    return lambda occ: occ[:, idx].sum(axis=1)


def _any(idx: np.ndarray) -> Callable:
    return lambda occ: occ[:, idx].max(axis=1)


def _all(idx: np.ndarray) -> Callable:
    return lambda occ: occ[:, idx].min(axis=1)


def default_battery(box: Box, random_sets: int = 8, seed: int = 0) -> List[IncreasingFunction]:
    """Site indicators, ball counts around the origin, and sums, maxima and minima over random site sets."""
    battery = [IncreasingFunction(f"site{i}", _indicator(i)) for i in range(box.size)]
    radius = np.array([sum(abs(x) for x in s) for s in box.sites])
    for r in range(1, int(radius.max()) + 1):
        battery.append(IncreasingFunction(f"ball{r}", _count(np.flatnonzero(radius <= r))))
    rng = RngStream(seed, 0).generator()
    for k in range(random_sets):
        size = int(rng.integers(2, box.size + 1)) if box.size >= 2 else 1
        idx = np.sort(rng.choice(box.size, size=size, replace=False))
        battery.append(IncreasingFunction(f"sum{k}", _count(idx)))
        battery.append(IncreasingFunction(f"max{k}", _any(idx)))
        battery.append(IncreasingFunction(f"min{k}", _all(idx)))
    return battery


def product_sample(probs: Sequence[float], size: int, seed: int, pattern: Optional[Pattern] = None) -> np.ndarray:
    """Occupation rows of the product Bernoulli law, kept off ``pattern`` by rejection."""
    probs = np.asarray(probs, dtype=float)
    rng = RngStream(seed, 0).generator()
    rows, kept = [], 0
    while kept < size:
        occ = (rng.random((2 * (size - kept) + 16, probs.size)) < probs).astype(float)
        if pattern is not None:
            occ = occ[occ[:, list(pattern.site_indices)].sum(axis=1) < pattern.threshold]
        rows.append(occ)
        kept += len(occ)
    return np.concatenate(rows)[:size]


def _occupation(samples: Samples, width: int) -> np.ndarray:
    if isinstance(samples, ConditionedSample):
        return samples.occupation
    samples = np.asarray(samples)
    if samples.ndim == 2:
        return samples.astype(float)
    return occupation_matrix(samples, width)


def domination_mc(
    lower: Samples,
    upper: Samples,
    box: Box,
    battery: Optional[List[IncreasingFunction]] = None,
    level: float = 0.05,
) -> CheckReport:
    """One-sided z tests of mean_lower[f] <= mean_upper[f] over a battery of increasing f.

    Bonferroni-corrected over the battery. Passing is a necessary condition
    for domination only.
    """
    occ_a, occ_b = _occupation(lower, box.size), _occupation(upper, box.size)
    if occ_a.shape[1] != box.size or occ_b.shape[1] != box.size:
        raise PreconditionError("samples were not drawn on this box")
    if len(occ_a) < 2 or len(occ_b) < 2:
        raise PreconditionError("each sample needs at least two configurations")
    battery = battery or default_battery(box)
    z_crit = float(stats.norm.ppf(1 - level / len(battery)))
    rows, violations = [], []
    for f in battery:
        fa, fb = f.evaluate(occ_a), f.evaluate(occ_b)
        diff = float(fb.mean() - fa.mean())
        se = float(np.sqrt(fa.var(ddof=1) / fa.size + fb.var(ddof=1) / fb.size))
        z = diff / se if se > 0 else (np.inf if diff >= 0 else -np.inf)
        violated = bool(z < -z_crit)
        if violated:
            violations.append(f.name)
        rows.append(
            {"function": f.name, "mean_lower": float(fa.mean()), "mean_upper": float(fb.mean()), "diff": diff, "stderr": se, "z": z, "violated": violated}
        )
    if violations:
        logger.info("domination screen: %d of %d functions violated", len(violations), len(battery))
    params = {"functions": len(battery), "z_critical": z_crit, "n_lower": len(occ_a), "n_upper": len(occ_b), "violations": violations}
    notes = ["necessary-condition screen; passing does not prove domination"]
    return CheckReport("domination_mc", not violations, params, rows, level, notes)
