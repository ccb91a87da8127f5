from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from harmonic.hitting import HittingProfile, _neighbor_sum
from lattice.configs import Config, Pattern
from lattice.geometry import Box
from utils.errors import ConstructionUnavailable, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

A2_MARGIN = 1e-9


class PsiForm(str, Enum):
    """Which ψ family the weights evaluate."""

    ORIGIN_KILLED = "origin-killed"    # (1 - η(0)) ∏_{i≠0} γ_i^η(i)
    PATTERN_KILLED = "pattern-killed"  # 1_{A^c}(η) ∏ γ_i^η(i)
    PRODUCT = "product"                # ∏ γ_i^η(i)
    INVERSE = "inverse"                # ∏ γ_i^-η(i)


@dataclass(frozen=True, eq=False)
class SiteWeights:
    box: Box
    profile: HittingProfile = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    C: float
    rho: float
    form: PsiForm
    pattern: Optional[Pattern] = None

    def __post_init__(self):
        factor = 1.0 / self.gamma if self.form is PsiForm.INVERSE else self.gamma
        object.__setattr__(self, "_factor", factor)
        kill_mask = 0
        if self.form is PsiForm.ORIGIN_KILLED:
            kill_mask = 1 << self.box.index(self.box.origin)
        object.__setattr__(self, "_kill_mask", kill_mask)

    @property
    def gamma_target(self) -> float:
        return 1.0 / (1.0 + self.C)

    @property
    def alpha_tilde(self) -> np.ndarray:
        inv = self.rho / self.gamma
        return inv / (inv + 1.0 - self.rho)

    def vanishes(self, bits: int) -> bool:
        if self.form is PsiForm.ORIGIN_KILLED:
            return bool(bits & self._kill_mask)
        if self.form is PsiForm.PATTERN_KILLED:
            return self.pattern.contains_bits(bits)
        return False

    def psi(self, c: Config) -> float:
        if self.vanishes(c.bits):
            return 0.0
        value = 1.0
        for i in c.occupied():
            value *= self._factor[i]
        return float(value)

    def ratio_bits(self, source: int, target: int) -> float:
        """ψ(target)/ψ(source) for configurations differing in a few sites."""
        if self.vanishes(target):
            return 0.0
        ratio = 1.0
        diff = source ^ target
        while diff:
            low = diff & -diff
            i = low.bit_length() - 1
            if target & low:
                ratio *= self._factor[i]
            else:
                ratio /= self._factor[i]
            diff ^= low
        return float(ratio)

    def frame(self) -> pd.DataFrame:
        coords = np.array(self.box.sites, dtype=int).reshape(self.box.size, self.box.d)
        df = pd.DataFrame(coords, columns=[f"x{k + 1}" for k in range(self.box.d)])
        df["h"] = [self.profile.h(s) for s in self.box.sites]
        df["gamma"] = self.gamma
        df["alpha"] = self.alpha
        df["alpha_tilde"] = self.alpha_tilde
        return df


def weights(
    profile: HittingProfile,
    C: float,
    rho: float,
    form: PsiForm = PsiForm.ORIGIN_KILLED,
    box: Optional[Box] = None,
    pattern: Optional[Pattern] = None,
) -> SiteWeights:
    """γ_i = 1/(1 + C h(i)) and α_i = ργ_i/(ργ_i + 1 - ρ) on the model box."""
    if C < 0:
        raise PreconditionError(f"weight constant must be non-negative, got {C}")
    if not 0 < rho < 1:
        raise PreconditionError(f"density must lie in (0, 1), got {rho}")
    form = PsiForm(form)
    box = box or profile.box
    if form is PsiForm.PATTERN_KILLED and pattern is None:
        raise PreconditionError("pattern-killed weights need the pattern")
    if form is PsiForm.ORIGIN_KILLED and not box.contains(box.origin):
        raise PreconditionError("origin-killed weights need the origin in the box")

    h = np.array([profile.h(s) for s in box.sites])
    gamma = 1.0 / (1.0 + C * h)
    alpha = rho * gamma / (rho * gamma + 1.0 - rho)
    return SiteWeights(box, profile, gamma, alpha, float(C), float(rho), form, pattern)


def flat_weights(box: Box, rho: float, form: PsiForm, pattern: Optional[Pattern] = None) -> SiteWeights:
    """γ ≡ 1: ψ reduces to its indicator factor."""
    profile = HittingProfile(box.full(), (), np.zeros(box.full().size))
    return weights(profile, 0.0, rho, form, box=box, pattern=pattern)


def _neighbor_values(profile: HittingProfile, exclude=()):
    cube = profile.box
    return [profile.h(k) for k in cube.origin_neighbors if k not in exclude]


def constant_for_A1(profile: HittingProfile) -> float:
    """C = 1/(1 - 2 max_{k∼0} h(k))."""
    values = _neighbor_values(profile)
    top = max(values, default=0.0)
    if top >= 0.5:
        raise ConstructionUnavailable(
            f"max hitting probability next to the origin is {top:.6f} >= 1/2; "
            "no finite constant exists for this box"
        )
    return 1.0 / (1.0 - 2.0 * top)


def constant_for_A2(profile: HittingProfile) -> float:
    """Smallest C with (1 + C)/(1 + C h(k)) >= 2 over k ∼ 0, k ≠ 0', plus a margin."""
    cube = profile.box
    values = _neighbor_values(profile, exclude=(cube.partner,))
    if not values:
        raise ConstructionUnavailable("the origin has no neighbor besides 0' in this box")
    top = max(values)
    if top >= 0.5:
        raise ConstructionUnavailable(
            f"max two-target hitting probability is {top:.6f} >= 1/2; no finite constant exists"
        )
    return 1.0 / (1.0 - 2.0 * top) + A2_MARGIN


def birth_death_slack(h: float, C: float, a: float, b: float, rho: float) -> float:
    """Smallest margin of the two birth-death inequalities at one site k ∼ 0."""
    delta = b * (1 - rho) / (a * rho)
    g = 1.0 / (1.0 + C * h)
    rhs = -C * (1.0 - h) / (1.0 + C * h)
    increasing = (delta / g - 1.0) * (a + g * b / delta)
    decreasing = (1.0 / (g * delta) - 1.0) * (b + g * delta * a)
    return min(increasing - rhs, decreasing - rhs)


def constant_for_ab(
    profile: HittingProfile,
    a: float,
    b: float,
    rho: float,
    c_min: float = 1.0,
    ratio: float = 2 ** 0.25,
    c_max: float = 1e8,
) -> float:
    """First C on the geometric grid c_min·ratio^j where both inequalities hold."""
    if a <= 0 or b <= 0:
        raise PreconditionError(f"flip rates must be positive, got a={a}, b={b}")
    if not 0 < rho < 1:
        raise PreconditionError(f"density must lie in (0, 1), got {rho}")
    values = _neighbor_values(profile) or [0.0]
    worst = np.inf
    C = c_min
    while C <= c_max:
        slack = min(birth_death_slack(h, C, a, b, rho) for h in values)
        if slack >= -1e-12:
            logger.debug("birth-death constant %.6g (a=%g, b=%g, rho=%g)", C, a, b, rho)
            return C
        worst = min(worst, -slack)
        C *= ratio
    raise ConstructionUnavailable(
        f"no constant up to {c_max:g} satisfies the birth-death inequalities; "
        f"smallest violation seen {worst:.3e}"
    )


def reciprocal_harmonic_defect(w: SiteWeights) -> float:
    """max |Σ_{j∼k} 1/γ_j - 2d/γ_k| over non-target cube sites (1/γ = 1 outside)."""
    profile = w.profile
    grid = profile.grid()
    inv = 1.0 + w.C * grid
    target_mask = np.zeros(profile.box.size, dtype=bool)
    target_mask[profile.box.indices(profile.targets)] = True
    target_mask = target_mask.reshape(grid.shape)
    d = profile.box.d
    around = _neighbor_sum(inv - 1.0) + 2 * d
    defect = np.abs(around - 2 * d * inv)
    return float(defect[~target_mask].max()) if (~target_mask).any() else 0.0
