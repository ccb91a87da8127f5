"""Principal eigenpairs and the killed semigroup of enumerated chains."""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from exact.state_space import DistVec, StateSpace
from generators.models import GeneratorSpec, ModelKind
from utils.errors import ConvergenceError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

RAYLEIGH_TOL = 1e-13
RESIDUAL_TOL = 1e-10
STABLE_ITERATIONS = 10
TRUNCATION_TOL = 1e-14
MAX_STEP = 4.0


class KilledSemigroup:
    """exp(tM) for a matrix with non-negative off-diagonal entries.

    M is shifted so its rows sum to at most zero, uniformized at the largest
    exit rate and expanded in Poisson-weighted powers over sub-steps of mean
    at most ``max_step`` jumps. Each sub-step drops a Poisson tail below
    ``tol`` relative to the current vector; ``truncation_bound`` accumulates
    the absolute error of the last evolution.
    """

    def __init__(self, matrix: sparse.spmatrix, tol: float = TRUNCATION_TOL, max_step: float = MAX_STEP):
        matrix = sparse.csr_matrix(matrix, dtype=float)
        self.size = matrix.shape[0]
        self.shift = max(0.0, float(np.asarray(matrix.sum(axis=1)).max(initial=0.0)))
        shifted = matrix - self.shift * sparse.identity(self.size, format="csr")
        self.theta = max(0.0, float(-shifted.diagonal().min(initial=0.0)))
        if self.theta > 0:
            self.kernel = sparse.identity(self.size, format="csr") + shifted / self.theta
        else:
            self.kernel = sparse.identity(self.size, format="csr")
        self.kernel_t = self.kernel.T.tocsr()
        self.tol = tol
        self.max_step = max_step
        self.truncation_bound = 0.0

    def _step(self, v: np.ndarray, h: float, kernel) -> np.ndarray:
        mu = self.theta * h
        if mu == 0.0:
            return v * math.exp(self.shift * h)
        top = int(max(1, poisson.isf(self.tol, mu)))
        weights = poisson.pmf(np.arange(top + 1), mu)
        tail = float(poisson.sf(top, mu))
        out = weights[0] * v
        term = v
        for k in range(1, top + 1):
            term = kernel @ term
            out = out + weights[k] * term
        scale = math.exp(self.shift * h)
        self.truncation_bound = self.truncation_bound * scale + tail * float(np.abs(v).max(initial=0.0)) * scale
        return out * scale

    def _evolve(self, v: np.ndarray, t: float, kernel) -> np.ndarray:
        if t < 0:
            raise PreconditionError(f"time must be non-negative, got {t}")
        v = np.array(v, dtype=float)
        if t == 0:
            return v
        steps = max(1, math.ceil(self.theta * t / self.max_step))
        h = t / steps
        for _ in range(steps):
            v = self._step(v, h, kernel)
        return v

    def apply(self, f: np.ndarray, t: float) -> np.ndarray:
        """exp(tM) f, the action on functions."""
        self.truncation_bound = 0.0
        return self._evolve(f, t, self.kernel)

    def push(self, m: np.ndarray, t: float) -> np.ndarray:
        """m exp(tM), the action on measures."""
        self.truncation_bound = 0.0
        return self._evolve(m, t, self.kernel_t)

    def apply_grid(self, f: np.ndarray, times: Sequence[float]) -> List[np.ndarray]:
        """exp(tM) f at each of the ascending ``times``, evolving incrementally."""
        self.truncation_bound = 0.0
        out, current, last = [], np.array(f, dtype=float), 0.0
        for t in times:
            if t < last:
                raise PreconditionError("time grid must be ascending")
            current = self._evolve(current, t - last, self.kernel)
            out.append(current)
            last = t
        return out


def killed_semigroup(space: StateSpace) -> KilledSemigroup:
    cached = space.__dict__.get("_killed_semigroup")
    if cached is None:
        cached = KilledSemigroup(space.killed_generator)
        space.__dict__["_killed_semigroup"] = cached
    return cached


@dataclass(frozen=True, eq=False)
class SpectralResult:
    lam: float
    u: np.ndarray = field(repr=False)
    gap_estimate: float
    iterations: int
    residual: float
    space: StateSpace = field(repr=False)
    levels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def u_mean(self) -> float:
        return float(np.dot(self.space.nu, self.u))

    @property
    def u_square(self) -> float:
        return float(np.dot(self.space.nu, self.u ** 2))

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "gap_estimate": self.gap_estimate,
            "iterations": self.iterations,
            "residual": self.residual,
            "states": len(self.space),
            "u_min": float(self.u.min()),
            "u_max": float(self.u.max()),
            "int_u": self.u_mean,
            "int_u2": self.u_square,
        }


def _space(spec_or_space: Union[GeneratorSpec, StateSpace]) -> StateSpace:
    if isinstance(spec_or_space, StateSpace):
        return spec_or_space
    return StateSpace(spec_or_space)


def _rayleigh(Q, v: np.ndarray, nu: np.ndarray) -> float:
    return -float(np.dot(nu * v, Q @ v) / np.dot(nu * v, v))


def _residual(Q, v: np.ndarray, lam: float) -> float:
    return float(np.abs(Q @ v + lam * v).max() / np.abs(v).max())


def _power_iteration(Q, nu, start, tol_rayleigh, tol_residual, max_iter, project=None):
    theta = max(float(-Q.diagonal().min()), 1e-300)
    kernel = sparse.identity(Q.shape[0], format="csr") + Q / (2.0 * theta)
    v = np.array(start, dtype=float)
    if project is not None:
        v = project(v)
    v /= math.sqrt(np.dot(nu * v, v))
    lam_prev, stable = np.inf, 0
    for it in range(1, max_iter + 1):
        v = kernel @ v
        if project is not None:
            v = project(v)
        v /= math.sqrt(np.dot(nu * v, v))
        lam = _rayleigh(Q, v, nu)
        if abs(lam - lam_prev) <= tol_rayleigh * max(abs(lam), 1.0):
            stable += 1
        else:
            stable = 0
        lam_prev = lam
        if stable >= STABLE_ITERATIONS:
            if tol_residual is None:
                return lam, v, it, np.nan
            res = _residual(Q, v, lam)
            if res <= tol_residual:
                return lam, v, it, res
    res = _residual(Q, v, lam_prev) if tol_residual is not None else np.nan
    raise ConvergenceError(f"power iteration stalled after {max_iter} iterations", res)


def _gap(Q, nu, u, lam, max_iter: int) -> float:
    if Q.shape[0] < 2:
        return np.inf
    unorm = np.dot(nu * u, u)

    def project(w):
        return w - (np.dot(nu * w, u) / unorm) * u

    start = np.random.default_rng(0).standard_normal(Q.shape[0])
    try:
        second, _, _, _ = _power_iteration(Q, nu, start, 1e-12, None, max_iter, project)
    except ConvergenceError:
        logger.warning("deflated iteration did not settle; gap estimate is approximate")
        w = project(start)
        second = _rayleigh(Q, w, nu)
    return float(second - lam)


def principal_dirichlet(
    spec_or_space: Union[GeneratorSpec, StateSpace],
    tol_rayleigh: float = RAYLEIGH_TOL,
    tol_residual: float = RESIDUAL_TOL,
    max_iter: int = 1_000_000,
) -> SpectralResult:
    """λ and u > 0 of the killed generator, with ∫u dν = 1."""
    space = _space(spec_or_space)
    if not space.spec.killing:
        raise PreconditionError("the birth-death chain is not killed; use dual_principal_ab")
    Q = space.killed_generator
    nu = space.nu
    lam, v, iterations, residual = _power_iteration(
        Q, nu, np.ones(len(space)), tol_rayleigh, tol_residual, max_iter
    )
    if v.sum() < 0:
        v = -v
    if v.min() <= 0:
        raise ConvergenceError("principal eigenfunction is not positive", residual)
    u = v / np.dot(nu, v)
    gap = _gap(Q, nu, u, lam, max_iter)
    logger.info("λ = %.12g after %d iterations (residual %.2e, gap %.4g)", lam, iterations, residual, gap)
    return SpectralResult(lam, u, gap, iterations, residual, space)


def adjoint_principal(space: StateSpace, max_iter: int = 1_000_000) -> SpectralResult:
    """Principal eigenpair of the ν-adjoint D^{-1} Qᵀ D of the killed generator."""
    Q = space.killed_generator
    nu = space.nu
    adj = (sparse.diags(1.0 / nu) @ Q.T @ sparse.diags(nu)).tocsr()
    lam, v, iterations, residual = _power_iteration(
        adj, nu, np.ones(len(space)), RAYLEIGH_TOL, RESIDUAL_TOL, max_iter
    )
    if v.sum() < 0:
        v = -v
    u = v / np.dot(nu, v)
    return SpectralResult(lam, u, np.nan, iterations, residual, space)


def dense_principal(spec_or_space: Union[GeneratorSpec, StateSpace]) -> SpectralResult:
    """Dense symmetric eigendecomposition of the ν-symmetrized killed generator."""
    space = _space(spec_or_space)
    Q = space.killed_generator.toarray()
    root = np.sqrt(space.nu)
    sym = (root[:, None] * Q) / root[None, :]
    sym = 0.5 * (sym + sym.T)
    values, vectors = np.linalg.eigh(sym)
    levels = -values[::-1]
    phi = vectors[:, -1]
    u = phi / root
    if u.sum() < 0:
        u = -u
    u = u / np.dot(space.nu, u)
    gap = float(levels[1] - levels[0]) if levels.size > 1 else np.inf
    residual = float(np.abs(Q @ u + levels[0] * u).max() / np.abs(u).max())
    return SpectralResult(float(levels[0]), u, gap, 0, residual, space, levels)


def dual_principal_ab(
    spec_or_space: Union[GeneratorSpec, StateSpace],
    tol: float = RESIDUAL_TOL,
    max_iter: int = 2_000_000,
) -> SpectralResult:
    """u_n > 0 with (L_ab)* u_n = 0 and ∫u_n dν = 1; u_n ν is invariant for L_ab."""
    space = _space(spec_or_space)
    if space.spec.model is not ModelKind.BIRTH_DEATH:
        raise PreconditionError("dual_principal_ab needs the birth-death model")
    Q = space.killed_generator
    dual = space.base_generator
    nu = space.nu
    theta = float(-Q.diagonal().min())
    kernel_t = (sparse.identity(len(space), format="csr") + Q / (2.0 * theta)).T.tocsr()
    pi = nu / nu.sum()
    residual = np.inf
    for it in range(1, max_iter + 1):
        pi = kernel_t @ pi
        pi /= pi.sum()
        if it % 50 == 0:
            u = pi / nu / np.dot(nu, pi / nu)
            residual = float(np.abs(dual @ u).max() / np.abs(u).max())
            if residual <= tol:
                logger.info("dual eigenfunction after %d iterations (residual %.2e)", it, residual)
                return SpectralResult(0.0, u, np.nan, it, residual, space)
    raise ConvergenceError("stationary iteration for the birth-death chain stalled", residual)


def survival_exact(space: StateSpace, init: DistVec, t: float) -> float:
    """P_init(τ > t); ``init`` carries the whole initial mass seen on A^c."""
    if init.space is not space:
        raise PreconditionError("initial law lives on a different state space")
    semigroup = killed_semigroup(space)
    survival = semigroup.apply(np.ones(len(space)), t)
    return float(np.dot(init.values, survival))


def survival_profile(space: StateSpace, init: DistVec, times: Sequence[float]) -> np.ndarray:
    semigroup = killed_semigroup(space)
    images = semigroup.apply_grid(np.ones(len(space)), times)
    return np.array([float(np.dot(init.values, img)) for img in images])


def conditioned_law(space: StateSpace, init: DistVec, t: float) -> DistVec:
    """T_t(init): the killed image of ``init`` at time t, renormalized."""
    if init.space is not space:
        raise PreconditionError("initial law lives on a different state space")
    image = killed_semigroup(space).push(init.values, t)
    mass = image.sum()
    if not mass > 1e-300:
        raise PreconditionError(f"survival mass {mass:.3e} at t={t} is too small to condition on")
    return DistVec(space, np.clip(image, 0.0, None) / mass, True)
