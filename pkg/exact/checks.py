"""Exact finite-volume checks of the survival asymptotics and the domination sandwiches."""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import sparse

from exact.monotonicity import VCertificate, dominates
from exact.spectral import (
    KilledSemigroup,
    SpectralResult,
    adjoint_principal,
    dual_principal_ab,
    killed_semigroup,
    principal_dirichlet,
    survival_profile,
)
from exact.state_space import DistVec, StateSpace
from generators.models import ModelKind
from generators.rates import dual_ab_transitions, potential_V
from harmonic.weights import SiteWeights
from lattice.configs import Config
from utils.errors import CapExceeded, PreconditionError
from utils.logger import get_logger

logger = get_logger(__name__)

RATIO_TOL = 1e-9
DECAY_SLACK = 1.1


@dataclass
class CheckReport:
    """Outcome of one exact check: a pass flag, parameters and a per-t table."""

    check: str
    passed: bool
    parameters: Dict = field(default_factory=dict)
    rows: List[Dict] = field(default_factory=list)
    tolerance: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    name: Optional[str] = None

    @property
    def label(self) -> str:
        """Report key, with the descriptive name when one is set."""
        return self.check if self.name is None else f"{self.check} ({self.name})"

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "name": self.name or self.check,
            "pass": self.passed,
            "parameters": self.parameters,
            "values": self.rows,
            "tolerance": self.tolerance,
            "notes": self.notes,
        }


def default_grid(lam: float, points: int = 6, span: float = 10.0) -> List[float]:
    """Times 0, span/λ/(points-1), ..., span/λ."""
    top = span / lam
    return [top * k / (points - 1) for k in range(points)]


def check_survival_ratio(
    space: StateSpace,
    spectral: Optional[SpectralResult] = None,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = RATIO_TOL,
) -> CheckReport:
    """P_ν(τ>t)e^{λt} against its limit (∫u dν)²/∫u² dν: bounded by 1 and converging at the gap rate."""
    spectral = spectral or principal_dirichlet(space)
    lam, gap = spectral.lam, spectral.gap_estimate
    times = list(t_grid) if t_grid is not None else default_grid(lam)
    nu = DistVec.nu(space)
    survival = survival_profile(space, nu, times)
    limit = spectral.u_mean ** 2 / spectral.u_square

    rows, passed = [], True
    prev = None
    for t, s in zip(times, survival):
        ratio = s * np.exp(lam * t)
        deviation = abs(ratio - limit)
        row = {"t": t, "survival": s, "ratio": ratio, "limit": limit, "deviation": deviation}
        row["bounded"] = bool(ratio <= 1.0 + tol)
        if prev is not None and prev[1] > tol and np.isfinite(gap):
            allowed = prev[1] * np.exp(-gap * (t - prev[0])) * DECAY_SLACK
            row["decay_ok"] = bool(deviation <= allowed + tol)
        else:
            row["decay_ok"] = True
        passed &= row["bounded"] and row["decay_ok"]
        rows.append(row)
        prev = (t, deviation)
    return CheckReport(
        "survival_ratio", passed, {"lambda": lam, "gap": gap, "limit": limit}, rows, tol
    )


def relative_entropy(p: np.ndarray, q: np.ndarray) -> float:
    """∑ p log(p/q) over the support of p."""
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def check_entropy_bound(
    space: StateSpace,
    spectral: Optional[SpectralResult] = None,
    t_grid: Optional[Sequence[float]] = None,
    tol: float = RATIO_TOL,
) -> CheckReport:
    """exp(−H(ν̃, ν)) ≤ P_ν(τ>t)e^{λt} ≤ 1 with dν̃ ∝ u u* dν."""
    spectral = spectral or principal_dirichlet(space)
    adjoint = adjoint_principal(space)
    lam = spectral.lam
    times = list(t_grid) if t_grid is not None else default_grid(lam)
    nu = space.nu
    tilt = spectral.u * adjoint.u * nu
    tilt = tilt / tilt.sum()
    entropy = relative_entropy(tilt, nu)
    lower = float(np.exp(-entropy))
    survival = survival_profile(space, DistVec.nu(space), times)

    rows, passed = [], True
    for t, s in zip(times, survival):
        ratio = s * np.exp(lam * t)
        ok = lower - tol <= ratio <= 1.0 + tol
        passed &= ok
        rows.append({"t": t, "ratio": ratio, "lower": lower, "upper": 1.0, "pass": ok})
    worst = min(rows, key=lambda r: r["ratio"])
    return CheckReport(
        "entropy_bound",
        passed,
        {"lambda": lam, "entropy": entropy, "adjoint_lambda": adjoint.lam, "tightest_t": worst["t"]},
        rows,
        tol,
    )


def check_overlap_identity(
    space: StateSpace,
    g: Union[np.ndarray, Callable[[int], float]],
    spectral: Optional[SpectralResult] = None,
    t_grid: Optional[Sequence[float]] = None,
    final_tol: float = 1e-4,
) -> CheckReport:
    """∫g S̄_{2t} g dν / (∫S̄_t g dν)² → ∫u² dν / (∫u dν)²."""
    spectral = spectral or principal_dirichlet(space)
    g = _as_vector(space, g)
    if np.any(g < 0):
        raise PreconditionError("the overlap identity needs g >= 0 off the pattern")
    lam = spectral.lam
    times = list(t_grid) if t_grid is not None else default_grid(lam)[1:]
    nu = space.nu
    limit = spectral.u_square / spectral.u_mean ** 2
    semigroup = killed_semigroup(space)

    overlap = np.dot(nu * g, spectral.u)
    degenerate = abs(overlap) <= 1e-12 * np.sqrt(np.dot(nu * g, g) * spectral.u_square)
    rows = []
    for t in times:
        st = semigroup.apply(g, t)
        s2t = semigroup.apply(st, t)
        ratio = float(np.dot(nu * g, s2t) / np.dot(nu, st) ** 2)
        rows.append({"t": t, "ratio": ratio, "limit": limit, "gap": abs(ratio - limit)})
    gaps = [r["gap"] for r in rows]
    monotone = all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    passed = (not degenerate) and monotone and gaps[-1] <= final_tol * limit
    notes = ["g is orthogonal to u; the ratio has no eigenfunction limit"] if degenerate else []
    return CheckReport(
        "overlap_identity",
        passed,
        {"lambda": lam, "limit": limit, "degenerate": bool(degenerate), "monotone": monotone},
        rows,
        final_tol,
        notes,
    )


def _as_vector(space: StateSpace, g) -> np.ndarray:
    if callable(g):
        return np.array([g(int(s)) for s in space.states], dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != (len(space),):
        raise PreconditionError(f"function vector has shape {g.shape}, expected {(len(space),)}")
    return g


def sandwich_report(
    space: StateSpace,
    weights: SiteWeights,
    t_grid: Sequence[float] = (0.0, 1.0, 2.0, 4.0),
    max_sites: int = 14,
) -> CheckReport:
    """Exact Strassen tests of the product lower and upper bounds around the conditioned law."""
    spec = space.spec
    if spec.width > max_sites:
        raise CapExceeded("domination_sites", max_sites, spec.width)
    rows = []
    if spec.model is ModelKind.BIRTH_DEATH:
        invariant = dual_principal_ab(space)
        mu = DistVec(space, invariant.u * space.nu).normalize()
        lower = DistVec.product(space, weights.alpha)
        upper = DistVec.product(space, weights.alpha_tilde)
        low = dominates(lower, mu)
        up = dominates(mu, upper)
        rows.append(
            {
                "t": np.nan,
                "law": "invariant",
                "lower_holds": low.dominated,
                "upper_holds": up.dominated,
                "lower_excess": low.excess,
                "upper_excess": up.excess,
            }
        )
        params = {"C": weights.C, "a": spec.a, "b": spec.b, "rho": spec.rho}
    else:
        nu = DistVec.nu(space)
        lower = DistVec.product(space, weights.alpha)
        upper = nu.normalize()
        semigroup = killed_semigroup(space)
        for t in t_grid:
            image = semigroup.push(nu.values, t)
            law = DistVec(space, np.clip(image, 0.0, None)).normalize()
            low = dominates(lower, law)
            up = dominates(law, upper)
            rows.append(
                {
                    "t": t,
                    "law": "conditioned",
                    "lower_holds": low.dominated,
                    "upper_holds": up.dominated,
                    "lower_excess": low.excess,
                    "upper_excess": up.excess,
                }
            )
        params = {"C": weights.C, "rho": spec.rho}
    passed = all(r["lower_holds"] and r["upper_holds"] for r in rows)
    return CheckReport("sandwich", passed, params, rows)


def feynman_kac_check(
    space: StateSpace,
    weights: SiteWeights,
    t_grid: Sequence[float] = (0.5, 1.0, 2.0),
    tol: float = 1e-9,
) -> CheckReport:
    """P_η(τ>t) from the killed chain against ψ(η)·exp(t(L_ψ + V))(1/ψ)(η)."""
    spec = space.spec
    if not spec.killing:
        raise PreconditionError("the Feynman-Kac comparison needs a killed model")
    psi = np.array([weights.psi(Config(int(s), space.width)) for s in space.states])
    V = np.array([potential_V(spec, weights, int(s)) for s in space.states])
    tilted = space.psi_generator(weights) + sparse.diags(V)
    killed = killed_semigroup(space)
    transformed = KilledSemigroup(tilted)
    rows, passed = [], True
    for t in t_grid:
        left = killed.apply(np.ones(len(space)), t)
        right = psi * transformed.apply(1.0 / psi, t)
        err = float(np.max(np.abs(left - right) / np.maximum(left, 1e-300)))
        ok = err <= tol
        passed &= ok
        rows.append({"t": t, "max_relative_error": err, "pass": ok})
    return CheckReport("feynman_kac", passed, {"C": weights.C}, rows, tol)


def dual_consistency_check(space: StateSpace, tol: float = 1e-12, max_sites: int = 10) -> CheckReport:
    """⟨L f, g⟩_ν = ⟨f, L* g⟩_ν for all pairs of state indicators."""
    spec = space.spec
    if spec.model is not ModelKind.BIRTH_DEATH:
        raise PreconditionError("the dual consistency check is for the birth-death model")
    if spec.width > max_sites:
        raise CapExceeded("dual_check_sites", max_sites, spec.width)
    Q = space.killed_generator.toarray()
    D = space.generator(lambda s: dual_ab_transitions(spec, s)).toarray()
    nu = space.nu
    defect = float(np.abs(nu[:, None] * Q - (nu[:, None] * D).T).max())
    ok = defect <= tol
    return CheckReport("dual_consistency", ok, {"states": len(space)}, [{"max_defect": defect}], tol)


def flat_weights_control(cert: VCertificate) -> CheckReport:
    """The γ ≡ 1 weights must fail the V test with a counterexample."""
    ok = not cert.passed and cert.counterexample is not None
    notes = [] if ok else ["flat weights passed the V test; the certificate is not discriminating"]
    return CheckReport("flat_weights_control", ok, {"direction": cert.direction, "mode": cert.mode}, [cert.as_dict()], notes=notes)


def psi_ratio_check(
    space: StateSpace,
    weights: SiteWeights,
    values: np.ndarray,
    direction: str = "increasing",
    tol: float = 1e-9,
    check: str = "u_over_psi",
) -> CheckReport:
    """Monotonicity of values/ψ along every added particle that stays off the pattern.

    For a killed model ``values`` is u or η ↦ P_η(τ > t); for the birth-death
    model it is the invariant density, increasing against ψ and decreasing
    against the inverse-product ψ′.
    """
    if direction not in ("increasing", "decreasing"):
        raise PreconditionError(f"direction must be increasing or decreasing, got {direction!r}")
    values = np.asarray(values, dtype=float)
    if values.shape != (len(space),):
        raise PreconditionError(f"expected {len(space)} values, got shape {values.shape}")
    psi = np.array([weights.psi(Config(int(s), space.width)) for s in space.states])
    if np.any(psi <= 0):
        raise PreconditionError("ψ vanishes on a state off the pattern")
    ratio = values / psi
    sign = 1.0 if direction == "increasing" else -1.0
    states = space.states
    worst, pairs, violation = np.inf, 0, None
    for k in range(space.width):
        lower = np.flatnonzero(((states >> k) & 1) == 0)
        upper_bits = states[lower] | (1 << k)
        pos = np.minimum(np.searchsorted(states, upper_bits), states.size - 1)
        present = states[pos] == upper_bits
        lower, pos = lower[present], pos[present]
        if not lower.size:
            continue
        pairs += lower.size
        margin = sign * (ratio[pos] - ratio[lower]) / np.maximum(np.abs(ratio[lower]), 1e-300)
        worst = min(worst, float(margin.min()))
        bad = np.flatnonzero(margin < -tol)
        if bad.size:
            j = bad[np.argmin(states[lower[bad]])]
            candidate = {"state": space.text(int(lower[j])), "site": list(space.box.sites[k]), "margin": float(margin[j])}
            if violation is None or candidate["state"] < violation["state"]:
                violation = candidate
    passed = violation is None
    if not passed:
        logger.info("%s is not %s: counterexample at %s", check, direction, violation["state"])
    params = {"direction": direction, "form": weights.form.value, "C": weights.C, "pairs": pairs, "worst_margin": worst}
    rows = [violation] if violation else []
    return CheckReport(check, passed, params, rows, tol)


def survival_ratio_monotone(
    space: StateSpace, weights: SiteWeights, t_grid: Sequence[float], tol: float = 1e-9
) -> CheckReport:
    """η ↦ P_η(τ > t)/ψ(η) increasing at each grid time."""
    semigroup = killed_semigroup(space)
    rows, passed = [], True
    ones = np.ones(len(space))
    for t, alive in zip(sorted(t_grid), semigroup.apply_grid(ones, sorted(t_grid))):
        report = psi_ratio_check(space, weights, np.clip(alive, 0.0, None), tol=tol)
        passed &= report.passed
        rows.append({"t": t, "worst_margin": report.parameters["worst_margin"], "pass": report.passed})
    return CheckReport("survival_over_psi", passed, {"form": weights.form.value, "C": weights.C}, rows, tol)


def density_moments(
    space: StateSpace, density: np.ndarray, powers: Sequence[int] = (1, 2, 3, 4), tol: float = 1e-10
) -> CheckReport:
    """∫ρ^p dν and the L^p norms of an invariant density ρ = dμ/dν.

    Passes when the density has unit mass and the norms are nondecreasing in p.
    """
    nu = space.nu / space.nu.sum()
    density = np.asarray(density, dtype=float)
    rows = []
    for p in sorted(powers):
        moment = float(np.dot(nu, density ** p))
        rows.append({"p": p, "moment": moment, "norm": moment ** (1.0 / p)})
    mass = float(np.dot(nu, density))
    norms = [row["norm"] for row in rows]
    ordered = all(b >= a - tol for a, b in zip(norms, norms[1:]))
    passed = abs(mass - 1.0) <= tol and ordered
    return CheckReport("density_moments", passed, {"mass": mass, "sup": float(density.max())}, rows, tol)
