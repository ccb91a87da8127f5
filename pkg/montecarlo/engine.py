"""Gillespie simulation of enumerated dynamics with per-trajectory random streams."""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from generators.models import GeneratorSpec
from generators.rates import Move, TransitionList, killed_transitions
from utils.errors import PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class RngStream:
    """Independent stream for trajectory ``stream_id`` of run ``seed``."""

    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,)))


class RateCache:
    """Memoized (targets, cumulative rates, killing flags) per source state."""

    def __init__(self, enumerate_fn: Callable[[int], TransitionList]):
        self._fn = enumerate_fn
        self._table: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __call__(self, bits: int):
        entry = self._table.get(bits)
        if entry is None:
            moves = [m for m in self._fn(bits).moves if m.rate > 0]
            targets = np.array([m.target for m in moves], dtype=np.int64)
            cumulative = np.cumsum([m.rate for m in moves]) if moves else np.zeros(0)
            killing = np.array([m.killing for m in moves], dtype=bool)
            entry = (targets, cumulative, killing)
            self._table[bits] = entry
        return entry

    @classmethod
    def for_matrix(cls, states: np.ndarray, matrix: sparse.csr_matrix) -> "RateCache":
        """Rows of a conservative generator over enumerated ``states``."""
        matrix = sparse.csr_matrix(matrix)
        index = {int(s): i for i, s in enumerate(states)}

        def rows(bits: int):
            i = index[bits]
            start, stop = matrix.indptr[i], matrix.indptr[i + 1]
            cols, vals = matrix.indices[start:stop], matrix.data[start:stop]
            moves = tuple(
                Move(int(states[c]), float(v), ("m", int(c))) for c, v in zip(cols, vals) if c != i and v > 0
            )
            return TransitionList(bits, 0, moves)

        return cls(rows)


@dataclass
class PathResult:
    tau: float
    censored: bool
    final: int
    events: int
    snapshots: List[int] = field(default_factory=list)
    occupation: Dict[int, float] = field(default_factory=dict)


def sample_path(
    rates: RateCache,
    init: int,
    horizon: float,
    rng: np.random.Generator,
    record_times: Sequence[float] = (),
    occupation: bool = False,
    initially_killed: bool = False,
) -> PathResult:
    """Exponential race over the current move list until killing or ``horizon``.

    ``tau`` is the killing time (``inf`` when censored). ``snapshots`` holds
    the state at each of the ascending ``record_times`` reached alive.
    """
    if initially_killed:
        return PathResult(0.0, False, init, 0)
    t, state, events = 0.0, int(init), 0
    times = list(record_times)
    snapshots: List[int] = []
    visits: Dict[int, float] = {}
    while True:
        targets, cumulative, killing = rates(state)
        total = cumulative[-1] if cumulative.size else 0.0
        dt = rng.exponential(1.0 / total) if total > 0 else np.inf
        end = min(t + dt, horizon)
        # the state holds on [t, t + dt)
        while times and times[0] < t + dt and times[0] <= horizon:
            snapshots.append(state)
            times.pop(0)
        if occupation:
            visits[state] = visits.get(state, 0.0) + (end - t)
        if t + dt > horizon:
            return PathResult(np.inf, True, state, events, snapshots, visits)
        t += dt
        # ties at exactly equal cumulative values resolve to the lower index
        idx = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        idx = min(idx, targets.size - 1)
        events += 1
        if killing[idx]:
            return PathResult(t, False, state, events, snapshots, visits)
        state = int(targets[idx])


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_block(task: Callable, payload, seed: int, start: int, stop: int):
    return [task(payload, RngStream(seed, i).generator(), i) for i in range(start, stop)]


def run_trajectories(
    task: Callable,
    payload,
    trials: int,
    seed: int,
    workers: int = 1,
    block: int = 256,
    offset: int = 0,
) -> list:
    """Run ``task(payload, rng, index)`` for indices offset..offset+trials-1, in index order.

    Every trajectory owns the stream ``(seed, index)``, so the output does not
    depend on the number of workers.
    """
    if workers <= 1 or trials <= block:
        return _run_block(task, payload, seed, offset, offset + trials)
    stop = offset + trials
    bounds = [(s, min(s + block, stop)) for s in range(offset, stop, block)]
    results: List = [None] * len(bounds)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_run_block, task, payload, seed, s, e): k for k, (s, e) in enumerate(bounds)}
        for future, k in futures.items():
            results[k] = future.result()
    logger.debug("ran %d trajectories on %d workers", trials, workers)
    return [r for chunk in results for r in chunk]


@lru_cache(maxsize=32)
def killed_rates(spec: GeneratorSpec) -> RateCache:
    """One memo table per spec and process; pattern states have no moves."""
    return RateCache(
        lambda s: TransitionList(s, spec.width, ()) if spec.in_target(s) else killed_transitions(spec, s)
    )


def draw_initial(spec: GeneratorSpec, rng: np.random.Generator, max_tries: int = 10_000) -> int:
    """Bernoulli(ρ) product configuration conditioned off the pattern by rejection."""
    weights = 1 << np.arange(spec.width, dtype=np.int64)
    for _ in range(max_tries):
        bits = int(np.dot(rng.random(spec.width) < spec.rho, weights))
        if not spec.in_target(bits):
            return bits
    raise PreconditionError(f"no initial draw outside the pattern in {max_tries} attempts")


def occupation_matrix(states: Sequence[int], width: int) -> np.ndarray:
    """Rows of 0/1 site occupations for packed states."""
    states = np.asarray(states, dtype=np.int64).reshape(-1)
    return ((states[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(float)
