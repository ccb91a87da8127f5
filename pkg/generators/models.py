"""The three finite-volume models and their state enumeration."""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from harmonic.hitting import solve_hitting
from harmonic.weights import (
    PsiForm,
    SiteWeights,
    constant_for_A1,
    constant_for_A2,
    constant_for_ab,
    weights,
)
from lattice.configs import Pattern
from lattice.geometry import Box
from utils.errors import CapExceeded, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

MAX_STATES = 2 ** 24


class ModelKind(str, Enum):
    SSEP = "ssep"
    BETA_BOND = "beta-bond"
    BIRTH_DEATH = "birth-death"

    @classmethod
    def names(cls):
        return [m.value for m in cls]


PATTERNS = ("A1", "A2")


@dataclass(frozen=True)
class GeneratorSpec:
    """Which dynamics to run on which box.

    SSEP and BetaBond carry a pattern and are killed on entering it; the
    birth-death model lives on the origin-excluded box and is never killed.
    """

    model: ModelKind
    box: Box
    rho: float
    pattern: Optional[Pattern] = None
    beta: float = 1.0
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if not 0.0 < self.rho < 1.0:
            raise PreconditionError(f"density must lie in (0, 1), got {self.rho}")
        if self.beta <= 0:
            raise PreconditionError(f"bond intensity must be positive, got {self.beta}")
        if self.a <= 0 or self.b <= 0:
            raise PreconditionError(f"flip rates must be positive, got a={self.a}, b={self.b}")
        if self.model is ModelKind.BIRTH_DEATH:
            if not self.box.origin_excluded:
                raise PreconditionError("the birth-death model runs on the origin-excluded box")
            if self.pattern is not None:
                raise PreconditionError("the birth-death model has no pattern")
        else:
            if self.box.origin_excluded:
                raise PreconditionError(f"{self.model.value} needs the full box")
            if self.pattern is None:
                raise PreconditionError(f"{self.model.value} needs a pattern")
            if self.pattern.box != self.box:
                raise PreconditionError("pattern was built on a different box")
        if self.model is ModelKind.BETA_BOND and self.box.n < 1:
            raise PreconditionError("the beta bond (0, 0') needs n >= 1")

    @property
    def kappa(self) -> float:
        return float(np.sqrt((1.0 - self.rho) / self.rho))

    @property
    def killing(self) -> bool:
        return self.pattern is not None

    @property
    def coupling_regime(self) -> bool:
        """β ≥ 2d − 1, where the order-preserving coupling exists."""
        return self.model is ModelKind.BETA_BOND and self.beta >= 2 * self.box.d - 1

    @property
    def width(self) -> int:
        return self.box.size

    def in_target(self, bits: int) -> bool:
        return self.pattern is not None and self.pattern.contains_bits(bits)

    def describe(self) -> dict:
        out = {"model": self.model.value, "d": self.box.d, "n": self.box.n, "rho": self.rho}
        if self.model is ModelKind.BETA_BOND:
            out["beta"] = self.beta
            out["coupling_regime"] = self.coupling_regime
        if self.model is ModelKind.BIRTH_DEATH:
            out.update(a=self.a, b=self.b)
        if self.pattern is not None:
            out["pattern_sites"] = [list(s) for s in self.pattern.sites]
            out["pattern_threshold"] = self.pattern.threshold
        return out


def build_pattern(box: Box, name: str) -> Pattern:
    if name == "A1":
        return Pattern.single_site(box)
    if name == "A2":
        return Pattern.pair(box)
    raise PreconditionError(f"unknown pattern {name!r}; allowed: {', '.join(PATTERNS)}")


def build_spec(
    model: str,
    d: int,
    n: int,
    rho: float,
    pattern: str = "A1",
    beta: float = 1.0,
    a: float = 1.0,
    b: float = 1.0,
) -> GeneratorSpec:
    kind = ModelKind(model)
    if kind is ModelKind.BIRTH_DEATH:
        return GeneratorSpec(kind, Box(d, n, origin_excluded=True), rho, None, beta, a, b)
    box = Box(d, n)
    return GeneratorSpec(kind, box, rho, build_pattern(box, pattern), beta, a, b)


def model_weights(spec: GeneratorSpec, C: Optional[float] = None, inverse: bool = False) -> SiteWeights:
    """The weight system matching the model's pattern, with the finite-box constant.

    A_1 uses the origin profile and the origin-killed ψ, A_2 the two-target
    profile and the pattern-killed ψ, birth-death the origin profile on the
    full cube with the product (or, with ``inverse``, the inverse-product) ψ.
    """
    box = spec.box
    if spec.model is ModelKind.BIRTH_DEATH:
        profile = solve_hitting(box, [box.origin])
        if C is None:
            C = constant_for_ab(profile, spec.a, spec.b, spec.rho)
        form = PsiForm.INVERSE if inverse else PsiForm.PRODUCT
        return weights(profile, C, spec.rho, form, box=box)
    if spec.pattern.threshold == 1 and spec.pattern.sites == (box.origin,):
        profile = solve_hitting(box, [box.origin])
        if C is None:
            C = constant_for_A1(profile)
        return weights(profile, C, spec.rho, PsiForm.ORIGIN_KILLED, box=box)
    profile = solve_hitting(box, spec.pattern.sites)
    if C is None:
        C = constant_for_A2(profile)
    return weights(profile, C, spec.rho, PsiForm.PATTERN_KILLED, box=box, pattern=spec.pattern)


def _spread(values: np.ndarray, positions) -> np.ndarray:
    out = np.zeros(values.shape, dtype=np.int64)
    for j, pos in enumerate(positions):
        out |= ((values >> j) & 1) << pos
    return out


def enumerate_states(spec: GeneratorSpec, max_states: int = MAX_STATES) -> np.ndarray:
    """All configurations outside the pattern, as ascending packed integers."""
    width = spec.width
    if width > 62:
        raise CapExceeded("states", max_states, 2 ** min(width, 62))
    if spec.pattern is None:
        count = 1 << width
        if count > max_states:
            raise CapExceeded("states", max_states, count)
        return np.arange(count, dtype=np.int64)

    pattern_idx = sorted(spec.pattern.site_indices)
    free_idx = [i for i in range(width) if i not in set(pattern_idx)]
    local = np.arange(1 << len(pattern_idx), dtype=np.int64)
    ones = np.zeros_like(local)
    for j in range(len(pattern_idx)):
        ones += (local >> j) & 1
    allowed = _spread(local[ones < spec.pattern.threshold], pattern_idx)

    count = (1 << len(free_idx)) * allowed.size
    if count > max_states:
        raise CapExceeded("states", max_states, count)
    free = _spread(np.arange(1 << len(free_idx), dtype=np.int64), free_idx)
    states = np.sort((free[:, None] | allowed[None, :]).ravel())
    logger.debug("enumerated %d states for %s on %d sites", states.size, spec.model.value, width)
    return states
