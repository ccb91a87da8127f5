import argparse
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

load_dotenv()

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.orchestrator import Orchestrator
from utils.config import load_config
from utils.errors import HittingTimesError
from utils.logger import configure_logging, get_logger

logger = get_logger(__name__)

SUBCOMMANDS = (
    "harmonic",
    "verify-psi",
    "monotone",
    "spectrum",
    "sandwich",
    "survival",
    "yaglom",
    "hprocess",
    "walk",
    "rates",
)

# flag -> dotted config key
FLAGS = {
    "model": "model.kind",
    "d": "model.d",
    "n": "model.n",
    "rho": "model.rho",
    "pattern": "model.pattern",
    "beta": "model.beta",
    "a": "model.a",
    "b": "model.b",
    "C": "model.C",
    "experiment": "run.experiment",
    "seed": "run.seed",
    "trials": "run.trials",
    "workers": "run.workers",
    "output_dir": "run.output_dir",
    "t": "run.t",
    "r": "run.r",
    "horizon": "run.horizon",
    "t_max": "run.t_max",
    "strategy": "run.strategy",
    "method": "run.method",
    "start": "run.start",
    "naive": "run.naive",
    "t_grid": "grid.t",
    "n_grid": "grid.n",
    "max_states": "caps.states",
    "generator_sites": "caps.generator_sites",
    "domination_sites": "caps.domination_sites",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="app.py", description="Hitting times of exclusion processes: exact checks and simulation."
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="dotenv-style file with dotted keys, e.g. model.rho = 0.5")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: $LOG_LEVEL or INFO)")

    model = parser.add_argument_group("model")
    model.add_argument("--model", help="ssep, beta-bond or birth-death")
    model.add_argument("--d", type=int)
    model.add_argument("--n", type=int)
    model.add_argument("--rho", type=float)
    model.add_argument("--pattern", help="A1 or A2")
    model.add_argument("--beta", type=float)
    model.add_argument("--a", type=float)
    model.add_argument("--b", type=float)
    model.add_argument("--C", type=float, help="weight constant (default: the model's own)")

    run = parser.add_argument_group("run")
    run.add_argument("--experiment")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--workers", type=int, help="parallel processes (default: available cores)")
    run.add_argument("--output-dir", dest="output_dir")
    run.add_argument("--t", type=float, help="conditioning time")
    run.add_argument("--r", type=float, help="window length")
    run.add_argument("--horizon", type=float)
    run.add_argument("--t-max", dest="t_max", type=int, help="walk series cutoff")
    run.add_argument("--strategy", help="kernel or upsets")
    run.add_argument("--method", help="rejection or fleming-viot")
    run.add_argument("--start", help="random or mismatch")
    run.add_argument("--naive", action="store_const", const="true", help="skip the split coupling")
    run.add_argument("--t-grid", dest="t_grid", help="comma-separated times")
    run.add_argument("--n-grid", dest="n_grid", help="comma-separated box half-widths")

    caps = parser.add_argument_group("caps")
    caps.add_argument("--max-states", dest="max_states", type=int)
    caps.add_argument("--generator-sites", dest="generator_sites", type=int)
    caps.add_argument("--domination-sites", dest="domination_sites", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    overrides = {key: getattr(args, flag) for flag, key in FLAGS.items() if getattr(args, flag) is not None}
    try:
        config = load_config(args.config, overrides)
        result = Orchestrator(config).run(args.subcommand)
    except HittingTimesError as exc:
        print(f"❌ Error during {args.subcommand}: {exc}")
        logger.debug("failure detail", exc_info=True)
        return exc.exit_code
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
