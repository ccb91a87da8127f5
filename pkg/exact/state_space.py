"""Enumerated state spaces, vectors over them and sparse generator matrices."""
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from generators.models import MAX_STATES, GeneratorSpec, enumerate_states
from generators.rates import TransitionList, base_transitions, killed_transitions, psi_transitions
from harmonic.weights import SiteWeights
from lattice.configs import Config, Pattern
from utils.errors import LatticeError, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

NORMALIZATION_TOL = 1e-12


class StateSpace:
    """States outside the pattern in canonical ascending-bit order."""

    def __init__(self, spec: GeneratorSpec, max_states: int = MAX_STATES):
        self.spec = spec
        self.states = enumerate_states(spec, max_states)
        self.width = spec.width

    def __len__(self) -> int:
        return int(self.states.size)

    @property
    def box(self):
        return self.spec.box

    def index(self, bits: int) -> int:
        pos = int(np.searchsorted(self.states, bits))
        if pos >= self.states.size or self.states[pos] != bits:
            raise LatticeError(f"{Config(int(bits), self.width).text()} is not in the state space")
        return pos

    def indices(self, bits: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.states, bits)
        pos = np.minimum(pos, self.states.size - 1)
        if not np.all(self.states[pos] == bits):
            raise LatticeError("some configurations are not in the state space")
        return pos

    def contains(self, bits: int) -> bool:
        pos = int(np.searchsorted(self.states, bits))
        return pos < self.states.size and self.states[pos] == bits

    @cached_property
    def occupation(self) -> np.ndarray:
        """Boolean matrix states × sites."""
        shifts = np.arange(self.width, dtype=np.int64)
        return ((self.states[:, None] >> shifts[None, :]) & 1).astype(bool)

    @cached_property
    def particle_counts(self) -> np.ndarray:
        return self.occupation.sum(axis=1)

    @cached_property
    def nu(self) -> np.ndarray:
        """ν_ρ weights restricted to the enumerated states (not renormalized)."""
        return self.product_weights(np.full(self.width, self.spec.rho))

    def product_weights(self, probs: Sequence[float]) -> np.ndarray:
        probs = np.asarray(probs, dtype=float)
        if probs.shape != (self.width,):
            raise PreconditionError(f"need {self.width} site probabilities, got shape {probs.shape}")
        occ = self.occupation
        with np.errstate(divide="ignore"):
            logp = np.where(occ, np.log(probs)[None, :], np.log1p(-probs)[None, :])
        return np.exp(logp.sum(axis=1))

    def text(self, pos: int) -> str:
        return Config(int(self.states[pos]), self.width).text()

    def generator(self, enumerate_fn: Callable[[int], TransitionList]) -> sparse.csr_matrix:
        """Sparse generator over the space; killing moves leave only their diagonal mass."""
        n = len(self)
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        for pos in range(n):
            tl = enumerate_fn(int(self.states[pos]))
            out = 0.0
            for m in tl.moves:
                out += m.rate
                if m.killing:
                    continue
                rows.append(pos)
                cols.append(self.index(m.target))
                vals.append(m.rate)
            diag[pos] = -out + (tl.potential or 0.0)
        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(diag)
        matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        matrix.sum_duplicates()
        return matrix

    @cached_property
    def killed_generator(self) -> sparse.csr_matrix:
        """The stopped generator on A^c (or the full generator when nothing is killed)."""
        spec = self.spec
        return self.generator(lambda s: killed_transitions(spec, s))

    @cached_property
    def base_generator(self) -> sparse.csr_matrix:
        spec = self.spec
        return self.generator(lambda s: base_transitions(spec, s))

    def psi_generator(self, weights: SiteWeights) -> sparse.csr_matrix:
        spec = self.spec
        return self.generator(lambda s: psi_transitions(spec, weights, s))


@dataclass(frozen=True, eq=False)
class DistVec:
    """Weights indexed by the states of a space; also usable as a function of bits."""

    space: StateSpace = field(repr=False)
    values: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.space),):
            raise PreconditionError(f"vector length {values.shape} does not match {len(self.space)} states")
        if np.any(values < 0):
            raise PreconditionError("distribution weights must be non-negative")
        if self.normalized and abs(values.sum() - 1.0) > NORMALIZATION_TOL * max(1, values.size):
            raise PreconditionError(f"normalized vector sums to {values.sum():.15f}")
        object.__setattr__(self, "values", values)

    def __call__(self, bits: int) -> float:
        if not self.space.contains(bits):
            return 0.0
        return float(self.values[self.space.index(bits)])

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def normalize(self) -> "DistVec":
        total = self.mass
        if total <= 0:
            raise PreconditionError("cannot normalize a vector of zero mass")
        return DistVec(self.space, self.values / total, True)

    def marginals(self) -> np.ndarray:
        """Per-site occupation probabilities of the normalized vector."""
        return (self.values @ self.space.occupation) / self.mass

    def expect(self, f: np.ndarray) -> float:
        return float(np.dot(self.values, f) / self.mass)

    def frame(self) -> pd.DataFrame:
        texts = [self.space.text(i) for i in range(len(self.space))]
        return pd.DataFrame({"state": texts, "weight": self.values})

    @classmethod
    def nu(cls, space: StateSpace) -> "DistVec":
        """ν_ρ on the enumerated states; mass ν_ρ(A^c)."""
        return cls(space, space.nu)

    @classmethod
    def product(cls, space: StateSpace, probs: Sequence[float]) -> "DistVec":
        """Product Bernoulli law restricted to the space and renormalized."""
        return cls(space, space.product_weights(probs)).normalize()

    @classmethod
    def point(cls, space: StateSpace, bits: int) -> "DistVec":
        values = np.zeros(len(space))
        values[space.index(bits)] = 1.0
        return cls(space, values, True)


def restricted_marginals(probs: Sequence[float], pattern: Optional[Pattern]) -> np.ndarray:
    """Site marginals of a product Bernoulli law conditioned off a threshold pattern."""
    probs = np.asarray(probs, dtype=float)
    if pattern is None:
        return probs.copy()
    idx = list(pattern.site_indices)
    p = probs[idx]
    total = 0.0
    occupied = np.zeros(len(idx))
    for assignment in itertools.product((0, 1), repeat=len(idx)):
        if sum(assignment) >= pattern.threshold:
            continue
        a = np.array(assignment)
        weight = float(np.prod(np.where(a == 1, p, 1 - p)))
        total += weight
        occupied += weight * a
    out = probs.copy()
    out[idx] = occupied / total
    return out


def indicator(space: StateSpace, site_index: int) -> np.ndarray:
    return space.occupation[:, site_index].astype(float)


def functions_by_name(space: StateSpace, names: Iterable[str], u: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Probe functions: ``one``, ``u`` and ``site<k>`` indicators."""
    out = {}
    for name in names:
        if name == "one":
            out[name] = np.ones(len(space))
        elif name == "u":
            if u is None:
                raise PreconditionError("probe 'u' needs the eigenfunction")
            out[name] = np.asarray(u, dtype=float)
        elif name.startswith("site"):
            out[name] = indicator(space, int(name[4:]))
        else:
            raise PreconditionError(f"unknown probe {name!r}")
    return out
