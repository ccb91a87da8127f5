"""Random-walk bounds behind the weight constants."""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp

from harmonic.hitting import solve_hitting
from harmonic.weights import PsiForm, weights
from lattice.geometry import Box
from utils.errors import PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class SummabilityReport:
    d: int
    n_grid: List[int]
    partial_sums: List[float]
    increments: List[float]
    decaying: bool

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"n": self.n_grid, "partial_sum": self.partial_sums, "increment": [np.nan] + self.increments}
        )


def summability_check(d: int, n_grid: Sequence[int], C: float = 1.0, rho: float = 0.5) -> SummabilityReport:
    """Partial sums of (1 - α_i/ρ)^2 over Λ_n minus the origin, for growing n."""
    grid = sorted(set(int(n) for n in n_grid))
    if len(grid) < 2:
        raise PreconditionError("summability needs at least two box sizes")
    sums = []
    for n in grid:
        box = Box(d, n)
        profile = solve_hitting(box, [box.origin])
        w = weights(profile, C, rho, PsiForm.PRODUCT)
        terms = (1.0 - w.alpha / rho) ** 2
        terms[box.index(box.origin)] = 0.0
        sums.append(float(terms.sum()))
    increments = list(np.diff(sums))
    decaying = all(b < a for a, b in zip(increments, increments[1:])) and increments[-1] < increments[0]
    if len(increments) == 1:
        decaying = False
    logger.info("summability d=%d: partial sums %s", d, ["%.4g" % s for s in sums])
    return SummabilityReport(d, grid, sums, [float(x) for x in increments], decaying)


@dataclass(frozen=True)
class ReturnStatistics:
    """Interval for E_0[R] = Σ_{n≥2} P_0(S_n = 0) and the implied return probability."""

    d: int
    t_max: int
    lower: float
    upper: float
    divergent: bool
    envelope_constant: float
    return_probability: tuple = field(default=(0.0, 1.0))

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "t_max": self.t_max,
            "expected_returns_lower": self.lower,
            "expected_returns_upper": self.upper,
            "divergent": self.divergent,
            "envelope_constant": self.envelope_constant,
            "return_probability_lower": self.return_probability[0],
            "return_probability_upper": self.return_probability[1],
        }


def log_return_probabilities(d: int, m_max: int) -> np.ndarray:
    """log P_0(S_{2m} = 0) for m = 1..m_max of the simple random walk on Z^d.

    P(S_{2m}=0) = C(2m, m) (2d)^{-2m} Σ_{m_1+..+m_d=m} (m!/∏m_i!)^2, with the
    inner sum evaluated as a d-fold convolution in log space.
    """
    ks = np.arange(m_max + 1)
    base = -2.0 * gammaln(ks + 1)
    acc = base.copy()
    for _ in range(d - 1):
        nxt = np.empty_like(acc)
        for m in range(m_max + 1):
            nxt[m] = logsumexp(acc[: m + 1] + base[m::-1])
        acc = nxt
    m = ks[1:]
    log_inner = 2.0 * gammaln(m + 1) + acc[1:]
    return gammaln(2 * m + 1) - 2.0 * gammaln(m + 1) - 2 * m * np.log(2 * d) + log_inner


def return_statistics(d: int, t_max: int = 2000) -> ReturnStatistics:
    if d < 1:
        raise PreconditionError(f"dimension must be positive, got {d}")
    m_max = max(1, t_max // 2)
    probs = np.exp(log_return_probabilities(d, m_max))
    lower = float(probs.sum())
    m = np.arange(1, m_max + 1)
    limit = 2.0 * (d / (4.0 * np.pi)) ** (d / 2.0)
    constant = float(max(limit, np.max(probs * m ** (d / 2.0))))
    if d <= 2:
        logger.info("return series diverges in d=%d (partial sum %.4f)", d, lower)
        return ReturnStatistics(d, t_max, lower, np.inf, True, constant, (lower / (1 + lower), 1.0))
    tail = constant * m_max ** (1.0 - d / 2.0) / (d / 2.0 - 1.0)
    upper = lower + tail
    interval = (lower / (1.0 + lower), upper / (1.0 + upper))
    logger.info("E_0[R] in [%.6f, %.6f] for d=%d", lower, upper, d)
    return ReturnStatistics(d, t_max, lower, float(upper), False, constant, interval)


@dataclass(frozen=True)
class TwoPointReport:
    d: int
    rows: List[dict]
    monotone_in_n: bool
    all_below_half: bool
    chain_holds: bool

    @property
    def passed(self) -> bool:
        return self.monotone_in_n and self.all_below_half and self.chain_holds

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def two_point_bound(d: int, n_grid: Sequence[int], t_max: int = 2000) -> TwoPointReport:
    """max_{k∼0, k≠0'} P_k(H_{0,0'} < H_n) against 1/2, with the comparison chain."""
    grid = sorted(set(int(n) for n in n_grid))
    if d >= 3:
        return_upper = return_statistics(d, t_max).return_probability[1]
    else:
        return_upper = 1.0
    rows = []
    for n in grid:
        box = Box(d, n)
        if n < 1:
            raise PreconditionError("the two-point bound needs n >= 1 so that 0' is in the box")
        partner = box.partner
        others = [k for k in box.origin_neighbors if k != partner]
        if not others:
            raise PreconditionError("the origin has no neighbor besides 0' in d=1 boxes of this size")
        both = solve_hitting(box, [box.origin, partner])
        only_origin = solve_hitting(box, [box.origin])
        only_partner = solve_hitting(box, [partner])
        value = max(both.h(k) for k in others)
        chain = all(
            only_partner.h(k) <= only_origin.h(k) + 1e-12 and only_origin.h(k) <= return_upper + 1e-12
            for k in others
        )
        rows.append(
            {
                "n": n,
                "two_point": value,
                "below_half": value < 0.5,
                "to_partner": max(only_partner.h(k) for k in others),
                "to_origin": max(only_origin.h(k) for k in others),
                "return_upper": return_upper,
                "chain_holds": chain,
            }
        )
    values = [r["two_point"] for r in rows]
    monotone = all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    return TwoPointReport(
        d, rows, monotone, all(r["below_half"] for r in rows), all(r["chain_holds"] for r in rows)
    )
