"""Survival curves, decay-rate fits and conditioned samples by simulation."""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from exact.checks import CheckReport
from exact.spectral import conditioned_law, survival_exact
from exact.state_space import DistVec, StateSpace, restricted_marginals
from generators.models import GeneratorSpec
from harmonic.weights import SiteWeights
from montecarlo.engine import (
    RngStream,
    draw_initial,
    killed_rates,
    occupation_matrix,
    run_trajectories,
    sample_path,
)
from utils.errors import AcceptanceTooLow, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

CONFIDENCE = 0.95
MIN_ACCEPTANCE = 1e-4
PILOT_TRIALS = 2000


def _require_killing(spec: GeneratorSpec) -> None:
    if not spec.killing:
        raise PreconditionError(f"{spec.model.value} has no pattern; there is no hitting time to simulate")


def wilson_interval(successes: np.ndarray, trials: int, confidence: float = CONFIDENCE):
    z = stats.norm.ppf(0.5 + confidence / 2)
    p = np.asarray(successes, dtype=float) / trials
    denom = 1 + z ** 2 / trials
    centre = (p + z ** 2 / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z ** 2 / (4 * trials ** 2)) / denom
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)


@dataclass
class SurvivalCurve:
    times: np.ndarray
    estimates: np.ndarray
    trials: int
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    taus: np.ndarray = field(repr=False, default=None)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"t": self.times, "estimate": self.estimates, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "trials": self.trials}
        )

    def mean_tau(self) -> Tuple[float, float]:
        """Sample mean of the hitting time and its standard error; censored paths make it a lower bound."""
        finite = self.taus[np.isfinite(self.taus)]
        if finite.size < self.taus.size:
            logger.warning("%d of %d paths censored; mean hitting time is biased low", self.taus.size - finite.size, self.taus.size)
        if finite.size < 2:
            return float("nan"), float("nan")
        return float(finite.mean()), float(finite.std(ddof=1) / math.sqrt(finite.size))


def _tau_task(payload, rng, index):
    spec, horizon = payload
    init = draw_initial(spec, rng)
    return sample_path(killed_rates(spec), init, horizon, rng).tau


def _tau_from_task(payload, rng, index):
    spec, init, horizon = payload
    return sample_path(killed_rates(spec), init, horizon, rng, initially_killed=spec.in_target(init)).tau


def survival_curve(
    spec: GeneratorSpec,
    t_grid: Sequence[float],
    trials: int,
    seed: int,
    workers: int = 1,
    init: Optional[int] = None,
) -> SurvivalCurve:
    """P(τ > t) on ``t_grid`` from ``trials`` independent paths.

    Paths start from ν_ρ conditioned off the pattern, or from the fixed
    configuration ``init``; each is censored at the last grid time.
    """
    _require_killing(spec)
    times = np.asarray(sorted(t_grid), dtype=float)
    horizon = float(times[-1]) if times.size else 0.0
    if init is None:
        taus = run_trajectories(_tau_task, (spec, horizon), trials, seed, workers)
    else:
        taus = run_trajectories(_tau_from_task, (spec, int(init), horizon), trials, seed, workers)
    taus = np.asarray(taus, dtype=float)
    alive = (taus[None, :] > times[:, None]).sum(axis=1)
    lo, hi = wilson_interval(alive, trials)
    logger.info("survival curve: %d paths, %d censored at t=%.4g", trials, int(np.isinf(taus).sum()), horizon)
    return SurvivalCurve(times, alive / trials, trials, lo, hi, taus)


@dataclass
class LambdaFit:
    lam: float
    stderr: float
    intercept: float
    points: int
    window: Tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "lambda_hat": self.lam,
            "stderr": self.stderr,
            "intercept": self.intercept,
            "points": self.points,
            "window": list(self.window),
        }


def lambda_fit(curve: SurvivalCurve, window: Optional[Tuple[float, float]] = None) -> LambdaFit:
    """Least-squares slope of −log P̂ over ``window``.

    The standard error propagates the exact covariance of the survival
    indicators, Cov(−log P̂_s, −log P̂_t) ≈ (1 − P_s)/(n P_s) for s ≤ t.
    """
    t_min, t_max = window if window is not None else (curve.times[0], curve.times[-1])
    mask = (curve.times >= t_min) & (curve.times <= t_max) & (curve.estimates > 0)
    x, p = curve.times[mask], curve.estimates[mask]
    if x.size < 3:
        raise PreconditionError(f"window [{t_min}, {t_max}] keeps {x.size} usable grid points, need 3")
    y = -np.log(p)
    centred = x - x.mean()
    c = centred / np.dot(centred, centred)
    slope = float(np.dot(c, y))
    intercept = float(y.mean() - slope * x.mean())
    var_diag = (1 - p) / (curve.trials * p)
    # s <= t: covariance is set by the earlier time
    earlier = np.minimum.outer(np.arange(x.size), np.arange(x.size))
    cov = var_diag[earlier]
    stderr = float(math.sqrt(max(c @ cov @ c, 0.0)))
    return LambdaFit(slope, stderr, intercept, int(x.size), (float(t_min), float(t_max)))


@dataclass
class ConditionedSample:
    """Configurations at time t of paths that survived past t."""

    states: np.ndarray
    width: int
    t: float
    method: str
    acceptance: Optional[float] = None
    attempts: int = 0
    killings: int = 0

    def __len__(self) -> int:
        return int(self.states.size)

    @property
    def occupation(self) -> np.ndarray:
        return occupation_matrix(self.states, self.width)

    def marginals(self) -> np.ndarray:
        return self.occupation.mean(axis=0)

    def stderr(self) -> np.ndarray:
        m = self.marginals()
        return np.sqrt(m * (1 - m) / max(len(self), 1))

    def lambda_estimate(self) -> Optional[float]:
        """Fleming-Viot estimate: killings per particle per unit time."""
        if self.method != "fleming-viot" or self.t <= 0:
            return None
        return self.killings / (len(self) * self.t)


def _survivor_task(payload, rng, index):
    spec, t = payload
    path = sample_path(killed_rates(spec), draw_initial(spec, rng), t, rng)
    return path.final if path.censored else None


def _rejection(spec, t, trials, seed, workers, pilot, min_acceptance) -> ConditionedSample:
    pilot_run = run_trajectories(_survivor_task, (spec, t), pilot, seed, workers)
    accepted = [s for s in pilot_run if s is not None]
    acceptance = len(accepted) / pilot
    if acceptance < min_acceptance:
        raise AcceptanceTooLow(
            f"pilot acceptance {acceptance:.2e} at t={t} is below {min_acceptance:.0e}; "
            "use a smaller t or method='fleming-viot'"
        )
    attempts = pilot
    while len(accepted) < trials:
        need = trials - len(accepted)
        batch = int(math.ceil(1.2 * need / acceptance)) + 16
        batch_run = run_trajectories(_survivor_task, (spec, t), batch, seed, workers, offset=attempts)
        accepted.extend(s for s in batch_run if s is not None)
        attempts += batch
    acceptance = len(accepted) / attempts
    logger.info("rejection sampler: %d of %d paths survived to t=%.4g", len(accepted), attempts, t)
    return ConditionedSample(np.array(accepted[:trials], dtype=np.int64), spec.width, t, "rejection", acceptance, attempts)


def _exit_rate(rates, bits: int) -> float:
    cumulative = rates(bits)[1]
    return float(cumulative[-1]) if cumulative.size else 0.0


def _fleming_viot(spec: GeneratorSpec, t: float, particles: int, seed: int) -> ConditionedSample:
    """Particles follow the killed dynamics; a killed particle jumps onto a uniformly chosen other one."""
    rng = RngStream(seed, 0).generator()
    rates = killed_rates(spec)
    state = np.array([draw_initial(spec, rng) for _ in range(particles)], dtype=np.int64)
    clock, killings = 0.0, 0
    while True:
        totals = np.array([_exit_rate(rates, int(s)) for s in state])
        grand = totals.sum()
        dt = rng.exponential(1.0 / grand) if grand > 0 else np.inf
        if clock + dt > t:
            break
        clock += dt
        k = int(np.searchsorted(np.cumsum(totals), rng.random() * grand, side="right"))
        k = min(k, particles - 1)
        targets, cumulative, killing = rates(int(state[k]))
        idx = min(int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")), targets.size - 1)
        if killing[idx]:
            killings += 1
            if particles > 1:
                other = int(rng.integers(particles - 1))
                state[k] = state[other if other < k else other + 1]
        else:
            state[k] = targets[idx]
    logger.info("Fleming-Viot: %d particles, %d killings by t=%.4g", particles, killings, t)
    return ConditionedSample(state, spec.width, t, "fleming-viot", None, particles, killings)


def conditioned_sample(
    spec: GeneratorSpec,
    t: float,
    trials: int,
    seed: int,
    workers: int = 1,
    method: str = "rejection",
    pilot: int = PILOT_TRIALS,
    min_acceptance: float = MIN_ACCEPTANCE,
) -> ConditionedSample:
    """Draws from T_t(ν_ρ): ν_ρ-started paths kept on {τ > t}.

    ``method="fleming-viot"`` runs an interacting particle system of
    ``trials`` particles instead; it is biased at finite particle number.
    """
    _require_killing(spec)
    if t < 0:
        raise PreconditionError(f"time must be non-negative, got {t}")
    if method == "rejection":
        return _rejection(spec, t, trials, seed, workers, min(pilot, max(trials, 1)), min_acceptance)
    if method == "fleming-viot":
        return _fleming_viot(spec, t, trials, seed)
    raise PreconditionError(f"unknown sampler {method!r}; use 'rejection' or 'fleming-viot'")


def yaglom_compare(
    spec: GeneratorSpec,
    weights: SiteWeights,
    t: float,
    trials: int,
    seed: int,
    workers: int = 1,
    method: str = "rejection",
    level: float = 0.05,
    sample: Optional[ConditionedSample] = None,
) -> CheckReport:
    """Conditioned site marginals against the product lower and upper bounds.

    Both bounds are the marginals of the product laws ν_α and ν_ρ
    restricted off the pattern; a site passes when its estimate is inside
    the band up to a Bonferroni-corrected one-sided margin. A ``sample``
    drawn beforehand is used as is.
    """
    if sample is None:
        sample = conditioned_sample(spec, t, trials, seed, workers, method)
    m, se = sample.marginals(), sample.stderr()
    lower = restricted_marginals(weights.alpha, spec.pattern)
    upper = restricted_marginals(np.full(spec.width, spec.rho), spec.pattern)
    z = stats.norm.ppf(1 - level / (2 * spec.width))
    rows, passed = [], True
    for i, coord in enumerate(spec.box.sites):
        slack = z * max(se[i], 1.0 / len(sample))
        ok = bool(lower[i] - slack <= m[i] <= upper[i] + slack)
        passed &= ok
        rows.append(
            {"site": i, "coord": str(coord), "estimate": m[i], "stderr": se[i], "lower": lower[i], "upper": upper[i], "within": ok}
        )
    params = {"t": t, "trials": len(sample), "method": sample.method, "acceptance": sample.acceptance, "z": z}
    notes = ["one-sided Monte Carlo screen of the marginal sandwich; not a proof of domination"]
    return CheckReport("yaglom", passed, params, rows, level, notes)


def _marginal_task(payload, rng, index):
    spec, init, t = payload
    start = draw_initial(spec, rng) if init is None else init
    path = sample_path(killed_rates(spec), start, t, rng, initially_killed=spec.in_target(start))
    return path.final if path.censored else None


def simulate_marginals(
    spec: GeneratorSpec,
    t: float,
    trials: int,
    seed: int,
    init: Optional[int] = None,
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """E[η_t(i); τ > t] per site with standard errors.

    Without a pattern this is the plain time-t marginal.
    """
    finals = run_trajectories(_marginal_task, (spec, init, t), trials, seed, workers)
    alive = [s for s in finals if s is not None]
    occ = np.zeros((trials, spec.width))
    if alive:
        occ[: len(alive)] = occupation_matrix(alive, spec.width)
    means = occ.mean(axis=0)
    return means, occ.std(axis=0, ddof=1) / math.sqrt(trials)


def marginals_check(space: StateSpace, t: float, trials: int, seed: int, workers: int = 1, level: float = 0.05) -> CheckReport:
    """Simulated E_ν[η_t(i); τ > t] against the uniformized killed semigroup."""
    spec = space.spec
    means, se = simulate_marginals(spec, t, trials, seed, workers=workers)
    init = DistVec.nu(space).normalize()
    law = conditioned_law(space, init, t)
    exact = survival_exact(space, init, t) * law.marginals()
    z = stats.norm.ppf(1 - level / (2 * spec.width))
    rows, passed = [], True
    for i, coord in enumerate(spec.box.sites):
        slack = z * max(se[i], 1.0 / trials)
        ok = bool(abs(means[i] - exact[i]) <= slack)
        passed &= ok
        rows.append({"site": i, "coord": str(coord), "simulated": means[i], "stderr": se[i], "exact": exact[i], "within": ok})
    return CheckReport("gillespie_uniformization", passed, {"t": t, "trials": trials, "z": z}, rows, level)
