import os
import sys
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.figures import gap_figure, marginals_figure, profile_figure, survival_figure
from app.report import render_report
from exact.checks import (
    CheckReport,
    check_entropy_bound,
    check_overlap_identity,
    check_survival_ratio,
    default_grid,
    density_moments,
    dual_consistency_check,
    feynman_kac_check,
    flat_weights_control,
    psi_ratio_check,
    sandwich_report,
    survival_ratio_monotone,
)
from exact.monotonicity import psi_monotone, verify_V_monotone
from exact.spectral import dual_principal_ab, principal_dirichlet, survival_profile
from exact.state_space import DistVec, StateSpace
from generators.graph import is_irreducible, rate_matrix_frame
from generators.models import GeneratorSpec, ModelKind, model_weights
from harmonic.walk import return_statistics, summability_check, two_point_bound
from harmonic.weights import flat_weights, reciprocal_harmonic_defect
from hprocess.h_process import (
    SCAN_MULTIPLES,
    boundary_window_check,
    build,
    decoupling_check,
    distinguishing_probe,
    eigenfunction_defect,
    martingale_check,
    simulate_hprocess,
    window_law_scan,
)
from montecarlo.coupling import coupling_trials
from montecarlo.engine import default_workers
from montecarlo.domination import domination_mc, product_sample
from montecarlo.survival import conditioned_sample, lambda_fit, marginals_check, survival_curve, yaglom_compare
from utils.artifacts import ArtifactWriter
from utils.config import RunConfig
from utils.errors import CapExceeded, PreconditionError
from utils.logger import get_logger
from utils.profiler import profile_sites, radial_frame

logger = get_logger(__name__)

ORACLE_STATES = 2 ** 16
FEYNMAN_KAC_STATES = 4096


@dataclass
class StageResult:
    """Everything one subcommand produced."""

    checks: List[CheckReport] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class Orchestrator:
    """Runs one subcommand end to end: compute, check, write artifacts."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.workers = config.workers or default_workers()
        self._spec: Optional[GeneratorSpec] = None
        self._space: Optional[StateSpace] = None
        self.writer: Optional[ArtifactWriter] = None

    # -- shared state -------------------------------------------------------

    @property
    def spec(self) -> GeneratorSpec:
        if self._spec is None:
            self._spec = self.config.spec()
        return self._spec

    @property
    def space(self) -> StateSpace:
        if self._space is None:
            self._space = StateSpace(self.spec, max_states=self.config.caps.states)
            print(f"--- 📦 {len(self._space)} states outside the pattern ---")
        return self._space

    def weights(self, inverse: bool = False):
        return model_weights(self.spec, self.config.C, inverse=inverse)

    def _small(self, limit: int) -> bool:
        try:
            StateSpace(self.spec, max_states=min(limit, self.config.caps.states))
        except CapExceeded:
            return False
        return True

    def _t_grid(self, lam: float) -> List[float]:
        return list(self.config.t_grid) if self.config.t_grid else default_grid(lam)

    def get_tools(self) -> Dict[str, Callable[[], StageResult]]:
        """Subcommand name -> stage method."""
        return {
            "harmonic": self.run_harmonic,
            "verify-psi": self.run_verify_psi,
            "monotone": self.run_monotone,
            "spectrum": self.run_spectrum,
            "sandwich": self.run_sandwich,
            "survival": self.run_survival,
            "yaglom": self.run_yaglom,
            "hprocess": self.run_hprocess,
            "walk": self.run_walk,
            "rates": self.run_rates,
        }

    def run(self, subcommand: str) -> StageResult:
        tools = self.get_tools()
        if subcommand not in tools:
            raise PreconditionError(f"unknown subcommand {subcommand!r}; allowed: {', '.join(tools)}")
        print(f"🚀 Starting {subcommand}...")
        self.writer = ArtifactWriter(self.config.output_dir, self.config.experiment, subcommand, self.config.as_dict())
        result = tools[subcommand]()
        for check in result.checks:
            self.writer.write_json(f"{check.check}.json", check.as_dict())
            if check.rows:
                self.writer.write_csv(f"{check.check}.csv", check.frame())
        status = "pass" if result.passed else "fail"
        self.writer.write_text("report.md", render_report(subcommand, self.config, result.checks, result.summary))
        self.writer.write_manifest(status, [{"check": c.check, "name": c.name or c.check, "pass": c.passed} for c in result.checks])
        for check in result.checks:
            print(f"{'✅' if check.passed else '❌'} {check.label}: {'PASS' if check.passed else 'FAIL'}")
        print(f"--- {'✅' if result.passed else '❌'} {subcommand} complete ({status}) ---")
        return result

    # -- stages ------------------------------------------------------------

    def run_harmonic(self) -> StageResult:
        w = self.weights()
        frame = w.frame()
        self.writer.write_csv("profile.csv", frame)
        self.writer.write_csv("profile_by_radius.csv", radial_frame(profile_sites(frame, ["h", "gamma", "alpha"])))
        self.writer.write_figure("profile.json", profile_figure(frame))
        summary = {
            "C": w.C,
            "form": w.form.value,
            "method": w.profile.method,
            "residual": w.profile.residual,
            "gamma_target": w.gamma_target,
            "reciprocal_harmonic_defect": reciprocal_harmonic_defect(w),
        }
        self.writer.write_json("constants.json", summary)
        return StageResult([], summary)

    def run_verify_psi(self) -> StageResult:
        spec = self.spec
        checks = []
        if spec.model is ModelKind.BIRTH_DEATH:
            pairs = [(self.weights(), "increasing"), (self.weights(inverse=True), "decreasing")]
        else:
            pairs = [(self.weights(), "increasing")]
        for w, direction in pairs:
            cert = verify_V_monotone(spec, w, direction, max_states=self.config.caps.states)
            checks.append(CheckReport(f"V_{direction}", cert.passed, {"C": w.C, "form": w.form.value}, [cert.as_dict()]))
        form = pairs[0][0].form
        control = verify_V_monotone(spec, flat_weights(spec.box, spec.rho, form, spec.pattern), max_states=self.config.caps.states)
        if spec.killing:
            checks.append(flat_weights_control(control))
        summary = {"flat_weights_control": control.as_dict()}
        if spec.killing and self._small(FEYNMAN_KAC_STATES):
            checks.append(feynman_kac_check(self.space, pairs[0][0]))
        if self._small(ORACLE_STATES):
            checks.extend(self._ratio_checks(pairs))
        return StageResult(checks, summary)

    def _ratio_checks(self, pairs) -> List[CheckReport]:
        """u/ψ (and P(τ > t)/ψ) monotone on the exact space."""
        space = self.space
        if self.spec.model is ModelKind.BIRTH_DEATH:
            u = dual_principal_ab(space).u
            names = {"increasing": "u_over_psi", "decreasing": "u_over_psi_prime"}
            return [psi_ratio_check(space, w, u, direction, check=names[direction]) for w, direction in pairs]
        w = pairs[0][0]
        u = principal_dirichlet(space).u
        return [psi_ratio_check(space, w, u), survival_ratio_monotone(space, w, self.config.t_grid or (0.5, 1.0, 2.0))]

    def run_monotone(self) -> StageResult:
        spec, config = self.spec, self.config
        w = self.weights()
        limit = config.caps.generator_sites if config.strategy == "upsets" else config.caps.domination_sites
        cert = psi_monotone(spec, w, config.strategy, max_sites=limit)
        checks = [CheckReport("generator_monotone", cert.passed, {"beta": spec.beta, "strategy": cert.strategy}, [cert.as_dict()])]
        if spec.pattern is not None and spec.pattern.threshold == 2:
            horizon = config.horizon or 5.0
            print(f"--- 🔗 Running {config.trials} coupled pairs ---")
            checks.append(coupling_trials(spec, w, config.trials, horizon, config.seed, config.naive, config.start, self.workers))
        return StageResult(checks, {"coupling_regime": spec.coupling_regime})

    def run_spectrum(self) -> StageResult:
        space = self.space
        if self.spec.model is ModelKind.BIRTH_DEATH:
            invariant = dual_principal_ab(space)
            self.writer.write_csv("u.csv", pd.DataFrame({"state": [space.text(i) for i in range(len(space))], "u": invariant.u}))
            check = CheckReport("dual_invariance", invariant.residual <= 1e-10, invariant.summary(), [], 1e-10)
            connected = CheckReport("irreducible", is_irreducible(self.spec, space.states), {"states": len(space)})
            checks = [connected, check, dual_consistency_check(space), density_moments(space, invariant.u)]
            return StageResult(checks, invariant.summary())
        spectral = principal_dirichlet(space)
        self.writer.write_csv("u.csv", pd.DataFrame({"state": [space.text(i) for i in range(len(space))], "u": spectral.u}))
        grid = self._t_grid(spectral.lam)
        ratio = check_survival_ratio(space, spectral, grid)
        entropy = check_entropy_bound(space, spectral, grid)
        overlap = check_overlap_identity(space, np.ones(len(space)), spectral, [t for t in grid if t > 0] or None)
        self.writer.write_figure("ratio_gap.json", gap_figure(ratio.frame(), "t", "deviation", "Survival ratio against its limit"))
        return StageResult([ratio, entropy, overlap], spectral.summary())

    def run_sandwich(self) -> StageResult:
        space = self.space
        report = sandwich_report(space, self.weights(), self.config.t_grid or (0.0, 1.0, 2.0, 4.0), self.config.caps.domination_sites)
        checks = [report]
        if self.spec.model is ModelKind.BIRTH_DEATH:
            checks.append(dual_consistency_check(space))
        return StageResult(checks, report.parameters)

    def run_survival(self) -> StageResult:
        spec, config = self.spec, self.config
        exact_lam = None
        if self._small(ORACLE_STATES):
            exact_lam = principal_dirichlet(self.space).lam
        if config.t_grid:
            grid = list(config.t_grid)
        else:
            top = config.horizon or (3.0 / exact_lam if exact_lam else 5.0)
            grid = list(np.linspace(0.0, top, 11))
        curve = survival_curve(spec, grid, config.trials, config.seed, self.workers)
        fit = lambda_fit(curve)
        self.writer.write_csv("survival.csv", curve.frame())
        self.writer.write_json("lambda_fit.json", fit.as_dict())
        exact = None
        checks = []
        if exact_lam is not None:
            init = DistVec.nu(self.space).normalize()
            exact = pd.DataFrame({"t": curve.times, "survival": survival_profile(self.space, init, curve.times)})
            band = exact["survival"].to_numpy()
            inside = bool(np.all((band >= curve.ci_lo - 1e-12) & (band <= curve.ci_hi + 1e-12)))
            covered = abs(fit.lam - exact_lam) <= 3 * fit.stderr
            rows = [{"t": t, "estimate": e, "exact": x} for t, e, x in zip(curve.times, curve.estimates, exact["survival"])]
            params = {"lambda_exact": exact_lam, **fit.as_dict(), "curve_within_ci": inside}
            checks.append(CheckReport("lambda_coverage", covered, params, rows))
            middle = float(curve.times[len(curve.times) // 2])
            checks.append(marginals_check(self.space, middle, config.trials, config.seed + 1, self.workers))
        self.writer.write_figure("survival.json", survival_figure(curve.frame(), exact))
        mean, stderr = curve.mean_tau()
        return StageResult(checks, {**fit.as_dict(), "mean_tau": mean, "mean_tau_stderr": stderr})

    def run_yaglom(self) -> StageResult:
        spec, config = self.spec, self.config
        t = config.t
        if t is None:
            t = 2.0 / principal_dirichlet(self.space).lam if self._small(ORACLE_STATES) else 1.0
        w = self.weights()
        sample = conditioned_sample(spec, t, config.trials, config.seed, self.workers, config.method)
        report = yaglom_compare(spec, w, t, config.trials, config.seed, self.workers, config.method, sample=sample)
        self.writer.write_figure("marginals.json", marginals_figure(report.frame()))
        lower = product_sample(w.alpha, len(sample), config.seed + 1, spec.pattern)
        upper = product_sample(np.full(spec.width, spec.rho), len(sample), config.seed + 2, spec.pattern)
        below = replace(domination_mc(lower, sample, spec.box), check="domination_lower")
        above = replace(domination_mc(sample, upper, spec.box), check="domination_upper")
        return StageResult([report, below, above], report.parameters)

    def run_hprocess(self) -> StageResult:
        config = self.config
        hp = build(self.space)
        lam = hp.lam
        grid = [k / lam for k in SCAN_MULTIPLES]
        probe = _probe_name(self.spec)
        window = window_law_scan(hp, config.r)
        reversible = CheckReport("reversibility", hp.reversibility_defect() <= 1e-12 * max(1.0, lam), hp.summary(), [], 1e-12)
        checks = [
            reversible,
            martingale_check(hp, self._t_grid(lam)),
            eigenfunction_defect(hp, self._t_grid(lam)),
            window,
            decoupling_check(hp, probe, probe, grid, endpoint=True),
            decoupling_check(hp, probe, probe, grid, endpoint=False),
            boundary_window_check(hp, config.r, grid),
        ]
        if config.horizon:
            checks.append(simulate_hprocess(hp, config.horizon, config.trials, config.seed, self.workers))
        keyed = {c.check: c.as_dict() for c in checks if c.check.startswith(("prop", "remark"))}
        self.writer.write_json("propositions.json", keyed)
        site, coord, difference = distinguishing_probe(hp)
        summary = {**hp.summary(), "probe": probe, "distinguishing_site": list(coord), "distinguishing_gap": difference}
        self.writer.write_figure("window_law_figure.json", gap_figure(window.frame(), "lambda_t", "max_gap", "Window-law gap against λt"))
        return StageResult(checks, summary)

    def run_walk(self) -> StageResult:
        config = self.config
        d = config.d
        stats = return_statistics(d, config.t_max)
        self.writer.write_json("return_statistics.json", stats.as_dict())
        checks = []
        if d >= 4:
            checks.append(CheckReport("expected_returns_below_quarter", stats.upper < 0.25, stats.as_dict(), [], 0.25))
        summary = stats.as_dict()
        if d >= 2:
            two_point = two_point_bound(d, config.n_grid, config.t_max)
            flags = {"monotone_in_n": two_point.monotone_in_n, "all_below_half": two_point.all_below_half, "chain_holds": two_point.chain_holds}
            if d >= 4:
                checks.append(CheckReport("two_point_bound", two_point.passed, flags, two_point.rows, 0.5))
            else:
                # the bound is only claimed from d = 4 on
                summary["two_point_bound"] = {**flags, "rows": two_point.rows}
                self.writer.write_csv("two_point_bound.csv", pd.DataFrame(two_point.rows))
        if len(set(config.n_grid)) >= 2:
            summability = summability_check(d, config.n_grid, config.C or 1.0, config.rho)
            self.writer.write_csv("summability.csv", summability.frame())
        return StageResult(checks, summary)

    def run_rates(self) -> StageResult:
        spec = self.spec
        frame = rate_matrix_frame(spec, self.space.states)
        self.writer.write_csv("rates.csv", frame)
        summary = {"states": len(self.space), "moves": int(len(frame)), "irreducible": is_irreducible(spec, self.space.states)}
        return StageResult([], summary)


def _probe_name(spec: GeneratorSpec) -> str:
    """Occupation of 0' when the box has it, else the constant function."""
    box = spec.box
    if box.n < 1:
        return "one"
    return f"site{box.index(box.partner)}"
