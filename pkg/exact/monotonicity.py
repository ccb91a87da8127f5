"""Order-theoretic certificates: stochastic domination, V monotonicity, monotone generators."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from scipy import sparse

from exact.state_space import DistVec, StateSpace
from generators.models import GeneratorSpec
from generators.rates import local_V, potential_V
from harmonic.weights import SiteWeights
from lattice.configs import Config
from lattice.monotone import enumerate_monotone_functions
from utils.errors import CapExceeded, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

MAX_DOMINATION_SITES = 14
MAX_GENERATOR_SITES = 6
EXHAUSTIVE_STATES = 2 ** 16
FLOW_SCALE = 2 ** 40
DOMINATION_TOL = 1e-9


@dataclass(frozen=True)
class DominationResult:
    """Outcome of a Strassen test p ≼ q.

    ``coupling`` maps (x, y) bit pairs to mass; ``violated_upset`` lists the
    minimal generators of an up-set Γ with p(Γ) > q(Γ).
    """

    dominated: bool
    excess: float
    coupling: Dict[Tuple[int, int], float] = field(default_factory=dict, repr=False)
    violated_upset: Tuple[int, ...] = ()

    def __bool__(self) -> bool:
        return self.dominated


def _strassen(p_states, p_mass, q_states, q_mass, tol: float) -> DominationResult:
    p_states = np.asarray(p_states, dtype=np.int64)
    q_states = np.asarray(q_states, dtype=np.int64)
    keep_p, keep_q = p_mass > 0, q_mass > 0
    p_states, p_mass = p_states[keep_p], p_mass[keep_p]
    q_states, q_mass = q_states[keep_q], q_mass[keep_q]
    scale = FLOW_SCALE / max(p_mass.sum(), q_mass.sum(), 1e-300)

    graph = nx.DiGraph()
    for x, m in zip(p_states, p_mass):
        graph.add_edge("s", ("p", int(x)), capacity=int(round(m * scale)))
    for y, m in zip(q_states, q_mass):
        graph.add_edge(("q", int(y)), "t", capacity=int(round(m * scale)))
    for x in p_states:
        above = q_states[(x & ~q_states) == 0]
        for y in above:
            graph.add_edge(("p", int(x)), ("q", int(y)))
    if "t" not in graph:
        graph.add_node("t")

    value, flow = nx.maximum_flow(graph, "s", "t")
    total = sum(int(round(m * scale)) for m in p_mass)
    excess = (total - value) / scale
    if excess <= tol + (p_states.size + q_states.size) / scale:
        coupling = {}
        for x in p_states:
            for (_, y), f in flow[("p", int(x))].items():
                if f > 0:
                    coupling[(int(x), int(y))] = f / scale
        return DominationResult(True, max(excess, 0.0), coupling)

    _, (reachable, _) = nx.minimum_cut(graph, "s", "t")
    sources = sorted(node[1] for node in reachable if isinstance(node, tuple) and node[0] == "p")
    minimal = tuple(x for x in sources if not any(y != x and (y & ~x) == 0 for y in sources))
    gen = np.array(minimal, dtype=np.int64)

    def mass_above(states, mass):
        inside = np.zeros(states.size, dtype=bool)
        for g in gen:
            inside |= (g & ~states) == 0
        return float(mass[inside].sum())

    gap = mass_above(p_states, p_mass) - mass_above(q_states, q_mass)
    return DominationResult(False, gap, {}, minimal)


def dominates(
    p: DistVec, q: DistVec, tol: float = DOMINATION_TOL, max_sites: int = MAX_DOMINATION_SITES
) -> DominationResult:
    """Strassen test of p ≼ q by max-flow over the full order relation."""
    if p.space is not q.space:
        raise PreconditionError("domination compares laws on one state space")
    width = p.space.width
    if width > max_sites:
        raise CapExceeded("domination_sites", max_sites, width)
    states = p.space.states
    result = _strassen(states, p.values / p.mass, states, q.values / q.mass, tol)
    logger.debug("domination test on %d states: %s (excess %.3e)", len(states), result.dominated, result.excess)
    return result


def upset_oracle(p: DistVec, q: DistVec) -> bool:
    """p ≼ q by checking p(Γ) ≤ q(Γ) over every up-set of the full cube."""
    width = p.space.width
    pv, qv = p.values / p.mass, q.values / q.mass
    full_p = np.zeros(1 << width)
    full_q = np.zeros(1 << width)
    full_p[p.space.states] = pv
    full_q[q.space.states] = qv
    for table in enumerate_monotone_functions(width, max_sites=max(width, 0)):
        mask = np.array([(table >> x) & 1 for x in range(1 << width)], dtype=bool)
        if full_p[mask].sum() > full_q[mask].sum() + 1e-12:
            return False
    return True


# ---------------------------------------------------------------------------
# V monotonicity


@dataclass(frozen=True)
class VCertificate:
    passed: bool
    direction: str
    mode: str
    checked: int
    worst_margin: float
    counterexample: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "direction": self.direction,
            "mode": self.mode,
            "checked": self.checked,
            "worst_margin": self.worst_margin,
            "counterexample": self.counterexample,
        }


def _window(spec: GeneratorSpec, k: int) -> List[int]:
    box = spec.box
    closed = {k, *box.neighbor_indices(k)}
    if spec.pattern is not None:
        pattern = set(spec.pattern.site_indices)
        if closed & pattern:
            closed |= pattern
        if k in pattern:
            for i in pattern:
                closed |= set(box.neighbor_indices(i))
    return sorted(closed)


def verify_V_monotone(
    spec: GeneratorSpec,
    weights: SiteWeights,
    direction: str = "increasing",
    tol: float = 1e-12,
    exhaustive_limit: int = EXHAUSTIVE_STATES,
    max_states: int = 2 ** 24,
) -> VCertificate:
    """Check V(σ^k η) ≥ V(η) (or ≤) for every η off A with η(k) = 0 and σ^k η off A."""
    if direction not in ("increasing", "decreasing"):
        raise PreconditionError(f"direction must be 'increasing' or 'decreasing', got {direction!r}")
    sign = 1.0 if direction == "increasing" else -1.0
    try:
        space = StateSpace(spec, max_states=min(max_states, exhaustive_limit))
    except CapExceeded:
        space = None

    if space is not None:
        return _verify_exhaustive(spec, weights, space, sign, direction, tol)
    return _verify_local(spec, weights, sign, direction, tol)


def _violation(spec, before, k, margin, v_before, v_after) -> dict:
    width = spec.width
    return {
        "state": Config(before, width).text(),
        "site": list(spec.box.coord(k)),
        "V_before": v_before,
        "V_after": v_after,
        "margin": margin,
    }


def _verify_exhaustive(spec, weights, space, sign, direction, tol) -> VCertificate:
    values = {int(s): potential_V(spec, weights, int(s)) for s in space.states}
    checked, worst, first = 0, np.inf, None
    for s in space.states:
        s = int(s)
        for k in range(spec.width):
            if (s >> k) & 1:
                continue
            up = s | (1 << k)
            if up not in values:
                continue
            checked += 1
            margin = sign * (values[up] - values[s])
            worst = min(worst, margin)
            if margin < -tol and first is None:
                first = _violation(spec, s, k, margin, values[s], values[up])
    if first is not None:
        logger.info("V is not %s: counterexample at %s", direction, first["state"])
    return VCertificate(first is None, direction, "exhaustive", checked, float(worst), first)


def _verify_local(spec, weights, sign, direction, tol) -> VCertificate:
    checked, worst, first = 0, np.inf, None
    for k in range(spec.width):
        window = _window(spec, k)
        others = [i for i in window if i != k]
        if len(others) > 24:
            raise CapExceeded("v_window_sites", 24, len(others))
        for assignment in range(1 << len(others)):
            s = 0
            for j, i in enumerate(others):
                if (assignment >> j) & 1:
                    s |= 1 << i
            up = s | (1 << k)
            if spec.in_target(s) or spec.in_target(up) or weights.vanishes(s) or weights.vanishes(up):
                continue
            checked += 1
            v_before = local_V(spec, weights, s, window)
            v_after = local_V(spec, weights, up, window)
            margin = sign * (v_after - v_before)
            worst = min(worst, margin)
            if margin < -tol and (first is None or s < first["_bits"]):
                first = _violation(spec, s, k, margin, v_before, v_after)
                first["_bits"] = s
    if first is not None:
        first.pop("_bits")
        logger.info("V is not %s: counterexample at %s", direction, first["state"])
    return VCertificate(first is None, direction, "local-window", checked, float(worst), first)


# ---------------------------------------------------------------------------
# generator monotonicity


@dataclass(frozen=True)
class MonotoneCertificate:
    passed: bool
    strategy: str
    pairs_checked: int
    counterexample: Optional[dict] = None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "strategy": self.strategy,
            "pairs_checked": self.pairs_checked,
            "counterexample": self.counterexample,
        }


def covering_pairs(space: StateSpace) -> List[Tuple[int, int, int]]:
    """(lower position, upper position, site) for every x ⋖ y inside the space."""
    pairs = []
    for pos, s in enumerate(space.states):
        s = int(s)
        for k in range(space.width):
            if not (s >> k) & 1:
                up = s | (1 << k)
                if space.contains(up):
                    pairs.append((pos, space.index(up), k))
    return pairs


def _kernel(matrix: sparse.csr_matrix) -> sparse.csr_matrix:
    theta = float(-matrix.diagonal().min())
    if theta <= 0:
        return sparse.identity(matrix.shape[0], format="csr")
    return (sparse.identity(matrix.shape[0], format="csr") + matrix / (2.0 * theta)).tocsr()


def verify_generator_monotone(
    space: StateSpace,
    matrix: sparse.csr_matrix,
    strategy: str = "kernel",
    tol: float = 1e-12,
    max_sites: Optional[int] = None,
) -> MonotoneCertificate:
    """Monotonicity of a conservative generator on the space, order restricted to it.

    ``upsets`` checks the up-set rate criterion over every enumerated up-set;
    ``kernel`` tests P(x, ·) ≼ P(y, ·) for the kernel I + M/(2Θ) on every
    covering pair, which is the same criterion and scales past six sites.
    """
    if strategy == "upsets":
        limit = MAX_GENERATOR_SITES if max_sites is None else max_sites
        if space.width > limit:
            raise CapExceeded("generator_sites", limit, space.width)
        return _monotone_upsets(space, matrix, tol)
    if strategy == "kernel":
        limit = MAX_DOMINATION_SITES if max_sites is None else max_sites
        if space.width > limit:
            raise CapExceeded("domination_sites", limit, space.width)
        return _monotone_kernel(space, matrix, tol)
    raise PreconditionError(f"unknown strategy {strategy!r}; allowed: kernel, upsets")


def _pair_record(space, x, y, upset, excess, rate_x=None, rate_y=None) -> dict:
    out = {
        "lower": space.text(x),
        "upper": space.text(y),
        "upset_generators": [Config(int(g), space.width).text() for g in upset],
        "excess": excess,
    }
    if rate_x is not None:
        out.update(rate_lower=rate_x, rate_upper=rate_y)
    return out


def _monotone_kernel(space, matrix, tol) -> MonotoneCertificate:
    kernel = _kernel(matrix)
    pairs = covering_pairs(space)
    states = space.states
    for x, y, _ in pairs:
        row_x, row_y = kernel.getrow(x), kernel.getrow(y)
        result = _strassen(
            states[row_x.indices], row_x.data, states[row_y.indices], row_y.data, tol
        )
        if not result.dominated:
            logger.info("kernel rows of %s and %s are not ordered", space.text(x), space.text(y))
            return MonotoneCertificate(
                False, "kernel", len(pairs), _pair_record(space, x, y, result.violated_upset, result.excess)
            )
    return MonotoneCertificate(True, "kernel", len(pairs))


def _monotone_upsets(space, matrix, tol, chunk: int = 4096) -> MonotoneCertificate:
    off = matrix.tolil(copy=True)
    off.setdiag(0.0)
    off = off.tocsr()
    outflow = np.asarray(off.sum(axis=1)).ravel()
    pairs = covering_pairs(space)
    if not pairs:
        return MonotoneCertificate(True, "upsets", 0)
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    states = space.states

    def check(tables: List[int]) -> Optional[dict]:
        member = np.array([[(t >> int(s)) & 1 for s in states] for t in tables], dtype=float).T
        to_set = off @ member
        inside = member.astype(bool)
        out_x, out_y = ~inside[xs], ~inside[ys]
        in_x, in_y = inside[xs], inside[ys]
        rx, ry = to_set[xs], to_set[ys]
        bad_out = out_x & out_y & (rx > ry + tol)
        cx = outflow[xs][:, None] - rx
        cy = outflow[ys][:, None] - ry
        bad_in = in_x & in_y & (cx < cy - tol)
        bad = bad_out | bad_in
        if not bad.any():
            return None
        pair_idx, table_idx = np.argwhere(bad)[0]
        members = [int(s) for s, m in zip(states, inside[:, table_idx]) if m]
        minimal = [s for s in members if not any(o != s and (o & ~s) == 0 for o in members)]
        x, y = xs[pair_idx], ys[pair_idx]
        if bad_out[pair_idx, table_idx]:
            rate_x, rate_y = float(rx[pair_idx, table_idx]), float(ry[pair_idx, table_idx])
        else:
            rate_x, rate_y = float(cx[pair_idx, table_idx]), float(cy[pair_idx, table_idx])
        return _pair_record(space, x, y, minimal, abs(rate_x - rate_y), rate_x, rate_y)

    buffer, seen = [], 0
    for table in enumerate_monotone_functions(space.width, max_sites=space.width):
        buffer.append(table)
        if len(buffer) == chunk:
            found = check(buffer)
            seen += len(buffer)
            buffer = []
            if found:
                return MonotoneCertificate(False, "upsets", len(pairs), found)
    if buffer:
        found = check(buffer)
        seen += len(buffer)
        if found:
            return MonotoneCertificate(False, "upsets", len(pairs), found)
    logger.debug("up-set criterion holds on %d up-sets and %d pairs", seen, len(pairs))
    return MonotoneCertificate(True, "upsets", len(pairs))


def psi_monotone(
    spec: GeneratorSpec, weights: SiteWeights, strategy: str = "kernel", max_sites: Optional[int] = None
) -> MonotoneCertificate:
    """verify_generator_monotone applied to the ψ-transformed chain of ``spec``."""
    space = StateSpace(spec)
    return verify_generator_monotone(space, space.psi_generator(weights), strategy, max_sites=max_sites)
