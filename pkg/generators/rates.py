"""Rate enumeration for every generator the project uses.

Transition lists hold off-diagonal moves only; consumers rebuild the
diagonal from the total rate (and the potential, when there is one).
"""
import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Optional, Tuple, Union

from generators.models import GeneratorSpec, ModelKind
from harmonic.weights import SiteWeights
from lattice.configs import Config
from utils.errors import LatticeError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

State = Union[Config, int]


class Move(NamedTuple):
    target: int
    rate: float
    clock: tuple
    killing: bool = False


@dataclass(frozen=True)
class TransitionList:
    source: int
    width: int
    moves: Tuple[Move, ...]
    potential: Optional[float] = None

    @property
    def total_rate(self) -> float:
        return math.fsum(m.rate for m in self.moves)

    @property
    def killing_rate(self) -> float:
        return math.fsum(m.rate for m in self.moves if m.killing)

    def targets(self):
        return [Config(m.target, self.width) for m in self.moves]

    def __len__(self) -> int:
        return len(self.moves)


def _bits(spec: GeneratorSpec, c: State) -> int:
    if isinstance(c, Config):
        if c.width != spec.width:
            raise LatticeError(f"configuration width {c.width} does not match box size {spec.width}")
        return c.bits
    return int(c)


def _exchange_rate(spec: GeneratorSpec, i: int, j: int) -> float:
    if spec.model is ModelKind.BETA_BOND:
        box = spec.box
        bond = {box.index(box.origin), box.index(box.partner)}
        if {i, j} == bond:
            return spec.beta
    return 1.0


def _exchanges(spec: GeneratorSpec, bits: int, bonds: Iterable[Tuple[int, int]]):
    for i, j in bonds:
        bi, bj = (bits >> i) & 1, (bits >> j) & 1
        if bi == bj:
            continue
        src, dst = (i, j) if bi else (j, i)
        yield bits ^ ((1 << i) | (1 << j)), _exchange_rate(spec, i, j), ("x", src, dst)


def _boundary_flips(spec: GeneratorSpec, bits: int, sites: Iterable[int]):
    kappa = spec.kappa
    for i in sites:
        m = spec.box.outside_count(i)
        if m == 0:
            continue
        rate = m * kappa if (bits >> i) & 1 else m / kappa
        yield bits ^ (1 << i), rate, ("b", i)


def _origin_flips(spec: GeneratorSpec, bits: int, sites: Iterable[int], dual: bool):
    rho, a, b = spec.rho, spec.a, spec.b
    for k in sites:
        if (bits >> k) & 1:
            rate = b * (1 - rho) / rho if dual else a
        else:
            rate = a * rho / (1 - rho) if dual else b
        yield bits ^ (1 << k), rate, ("f", k)


def _flip_sites(spec: GeneratorSpec) -> Tuple[int, ...]:
    if spec.model is not ModelKind.BIRTH_DEATH:
        return ()
    return tuple(spec.box.indices(spec.box.origin_neighbors))


def _moves(spec: GeneratorSpec, bits: int, dual: bool = False, sites: Optional[Iterable[int]] = None):
    box = spec.box
    if sites is None:
        bonds, boundary, flips = box.bonds, box.boundary, _flip_sites(spec)
    else:
        chosen = set(sites)
        bonds = [(i, j) for i, j in box.bonds if i in chosen or j in chosen]
        boundary = [i for i in box.boundary if i in chosen]
        flips = [k for k in _flip_sites(spec) if k in chosen]
    yield from _exchanges(spec, bits, bonds)
    yield from _boundary_flips(spec, bits, boundary)
    yield from _origin_flips(spec, bits, flips, dual)


def _dual_potential(spec: GeneratorSpec, bits: int) -> float:
    rho = spec.rho
    coeff = spec.a / (1 - rho) - spec.b / rho
    return coeff * math.fsum(rho - ((bits >> k) & 1) for k in _flip_sites(spec))


def transitions(spec: GeneratorSpec, c: State) -> TransitionList:
    """Every move out of ``c`` with its rate; moves into the pattern are flagged."""
    bits = _bits(spec, c)
    moves = tuple(
        Move(target, rate, clock, spec.in_target(target)) for target, rate, clock in _moves(spec, bits)
    )
    return TransitionList(bits, spec.width, moves)


def killed_transitions(spec: GeneratorSpec, c: State) -> TransitionList:
    bits = _bits(spec, c)
    if spec.in_target(bits):
        raise PreconditionError(f"{Config(bits, spec.width).text()} is inside the pattern")
    return transitions(spec, bits)


def dual_ab_transitions(spec: GeneratorSpec, c: State) -> TransitionList:
    """Markov part of the ν_ρ-adjoint of the birth-death generator plus its potential."""
    if spec.model is not ModelKind.BIRTH_DEATH:
        raise PreconditionError("the dual generator is defined for the birth-death model only")
    bits = _bits(spec, c)
    moves = tuple(Move(t, r, k) for t, r, k in _moves(spec, bits, dual=True))
    return TransitionList(bits, spec.width, moves, _dual_potential(spec, bits))


def base_transitions(spec: GeneratorSpec, c: State) -> TransitionList:
    """The generator ψ-transforms act on: the killed chain, or the dual for birth-death."""
    if spec.model is ModelKind.BIRTH_DEATH:
        return dual_ab_transitions(spec, c)
    return killed_transitions(spec, c)


def _check_psi(spec: GeneratorSpec, weights: SiteWeights, bits: int) -> None:
    if spec.in_target(bits):
        raise PreconditionError(f"{Config(bits, spec.width).text()} is inside the pattern")
    if weights.vanishes(bits):
        raise PreconditionError(
            f"ψ vanishes at {Config(bits, spec.width).text()} outside the pattern; weights do not match the model"
        )


def psi_transitions(spec: GeneratorSpec, weights: SiteWeights, c: State) -> TransitionList:
    """Rates c(a, b)·ψ(b)/ψ(a); moves where ψ vanishes are dropped."""
    bits = _bits(spec, c)
    _check_psi(spec, weights, bits)
    base = base_transitions(spec, bits)
    moves = []
    for m in base.moves:
        ratio = weights.ratio_bits(bits, m.target)
        if ratio > 0.0 and not m.killing:
            moves.append(Move(m.target, m.rate * ratio, m.clock))
    return TransitionList(bits, spec.width, tuple(moves))


def potential_V(spec: GeneratorSpec, weights: SiteWeights, c: State) -> float:
    """V = Lψ/ψ evaluated from the raw move list."""
    bits = _bits(spec, c)
    _check_psi(spec, weights, bits)
    base = base_transitions(spec, bits)
    total = math.fsum(
        m.rate * ((0.0 if m.killing else weights.ratio_bits(bits, m.target)) - 1.0) for m in base.moves
    )
    return total + (base.potential or 0.0)


def local_V(spec: GeneratorSpec, weights: SiteWeights, bits: int, sites: Iterable[int]) -> float:
    """The part of V carried by moves touching ``sites`` (plus the full potential)."""
    total = 0.0
    for target, rate, _ in _moves(spec, bits, dual=spec.model is ModelKind.BIRTH_DEATH, sites=sites):
        ratio = 0.0 if spec.in_target(target) else weights.ratio_bits(bits, target)
        total += rate * (ratio - 1.0)
    if spec.model is ModelKind.BIRTH_DEATH:
        total += _dual_potential(spec, bits)
    return total


def hprocess_transitions(
    spec: GeneratorSpec,
    u: Callable[[int], float],
    lam: float,
    c: State,
    tol: float = 1e-8,
) -> TransitionList:
    """Doob-transformed rates c(x, y)·u(y)/u(x) over y outside the pattern."""
    bits = _bits(spec, c)
    ux = u(bits)
    if not ux > 0.0:
        raise PreconditionError(f"u vanishes at {Config(bits, spec.width).text()}")
    base = killed_transitions(spec, bits)
    moves = tuple(
        Move(m.target, m.rate * u(m.target) / ux, m.clock) for m in base.moves if not m.killing
    )
    out = TransitionList(bits, spec.width, moves)
    compensation = out.total_rate - (base.total_rate - lam)
    if abs(compensation) > tol * max(1.0, base.total_rate):
        logger.warning(
            "h-rates at %s miss the eigen-compensation by %.3e; u is not an eigenfunction for λ=%.6g",
            Config(bits, spec.width).text(), compensation, lam,
        )
    return out
