"""
Command-line experiments for blind interference alignment on homogeneous
block fading.

    python cli.py schedule --n 5 --offset 2
    python cli.py simulate --n 5 --offset 2 --realizations 200
    python cli.py pairing --n 6 --k 3
    python cli.py sweep-fig4

Exit codes: 0 success, 1 invalid config, 2 infeasible offset, 3 budget exceeded.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from bia import average_sum_rate, estimate_dof
from fading import ChannelProcess, schedules_for
from pairing import (DEFAULT_BUDGET, BudgetExceeded, OffsetAssignment, lower_bound_sweep,
                     pairing_report, select_pair)
from zpattern import (InfeasibleOffset, decompose_period, effective_dof, plan_periods,
                      unscheduled_slots, validate_plan)

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20140501
DEFAULT_WORKERS = int(os.environ.get("BIA_WORKERS", "1"))

EXIT_OK = 0
EXIT_INVALID_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_BUDGET = 3

COMMANDS = ("schedule", "simulate", "pairing", "sweep-fig4")

# separates the DoF table from the per-SNR rate table in simulate CSV output
RATES_SECTION = "# rates"


class InvalidConfig(ValueError):
    """Raised when flags violate the preconditions of the requested command."""


class _ArgumentParser(argparse.ArgumentParser):
    # argparse would exit with 2, which is reserved for infeasible offsets
    def error(self, message):
        raise InvalidConfig(message)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    n: Optional[int] = None
    offset: Optional[int] = None
    offsets: Optional[Tuple[int, ...]] = None
    k: Optional[int] = None
    periods: int = 1
    snr_db: Tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    dof_low_db: float = 30.0
    dof_high_db: float = 50.0
    realizations: int = 200
    samples: int = 0
    seed: int = DEFAULT_SEED
    fmt: str = "csv"
    out: Optional[str] = None
    rates_out: Optional[str] = None
    budget: int = DEFAULT_BUDGET
    workers: int = DEFAULT_WORKERS
    skip_oracle: bool = False
    baseline: bool = False
    ns: Tuple[int, ...] = (12, 30, 30000)
    k_min: int = 2
    k_max: int = 10
    with_exact: bool = False
    quiet: bool = False
    invocation: Tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def from_args(cls, args: argparse.Namespace, argv: Sequence[str]) -> "ExperimentConfig":
        values = {k: v for k, v in vars(args).items() if k in cls.__dataclass_fields__}
        for key in ("offsets", "snr_db", "ns"):
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        values["invocation"] = tuple(argv)
        return cls(**values)

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise InvalidConfig(f"Unknown command '{self.command}'")
        if self.fmt not in ("csv", "json"):
            raise InvalidConfig(f"Unknown format '{self.fmt}'")
        if self.workers < 1:
            raise InvalidConfig(f"--workers must be at least 1, got {self.workers}")
        if self.budget < 1:
            raise InvalidConfig(f"--budget must be positive, got {self.budget}")
        if self.samples < 0:
            raise InvalidConfig(f"--samples must be non-negative, got {self.samples}")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidConfig(f"--seed must be a 64-bit unsigned integer, got {self.seed}")

        if self.command in ("schedule", "simulate", "pairing"):
            if self.n is None or self.n < 1:
                raise InvalidConfig(f"--n must be a positive integer, got {self.n}")

        if self.command == "schedule":
            self._check_offset(self.offset)
            if self.periods < 1:
                raise InvalidConfig(f"--periods must be at least 1, got {self.periods}")

        elif self.command == "simulate":
            if self.offsets:
                try:
                    OffsetAssignment(self.n, self.offsets)
                except ValueError as e:
                    raise InvalidConfig(str(e)) from e
            else:
                self._check_offset(self.offset)
            if self.realizations < 1:
                raise InvalidConfig(f"--realizations must be at least 1, got {self.realizations}")
            if not self.snr_db:
                raise InvalidConfig("--snr-db grid is empty")
            if not self.dof_high_db > self.dof_low_db >= 30:
                raise InvalidConfig(f"Need --dof-high > --dof-low >= 30 dB, "
                                    f"got {self.dof_low_db} and {self.dof_high_db}")

        elif self.command == "pairing":
            if self.k is None or self.k < 2:
                raise InvalidConfig(f"--k must be at least 2, got {self.k}")

        elif self.command == "sweep-fig4":
            if not self.ns or any(n < 1 for n in self.ns):
                raise InvalidConfig(f"--ns must list positive integers, got {self.ns}")
            if self.k_min < 2 or self.k_max < self.k_min:
                raise InvalidConfig(f"Empty K range {self.k_min}..{self.k_max}")
        return self

    def _check_offset(self, offset: Optional[int]):
        if offset is None or not 0 <= offset < self.n:
            raise InvalidConfig(f"--offset must lie in [0, {self.n}), got {offset}")

    @property
    def show_progress(self) -> bool:
        return not self.quiet


# ============================================================================
# OUTPUT
# ============================================================================

def _header(config: ExperimentConfig) -> str:
    return f"invocation: {' '.join(config.invocation)} seed={config.seed}"


def render_csv(df: pd.DataFrame, config: ExperimentConfig) -> str:
    return f"# {_header(config)}\n" + df.to_csv(index=False, lineterminator="\n")


def render_json(payload: Dict[str, Any], config: ExperimentConfig) -> str:
    document = {"invocation": " ".join(config.invocation), "seed": config.seed}
    document.update(payload)
    return json.dumps(document, indent=2) + "\n"


def write_output(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Saved output to {path}")


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_schedule(config: ExperimentConfig) -> str:
    """Type-Z schedule for the requested periods."""
    plans = plan_periods(config.n, config.offset, config.periods)
    sched1, sched2 = schedules_for(config.n, config.offset)
    for plan in plans:
        report = validate_plan(plan, sched1, sched2)
        if not report:
            raise RuntimeError(f"Plan for period {plan.period} failed {report.failure}: {report.detail}")
    logger.info(f"Scheduled {config.periods} period(s) of {3 * config.n} slots, "
                f"{len(plans) * config.n} type-Z blocks")

    if config.fmt == "json":
        return render_json({
            "unscheduled": list(unscheduled_slots(config.n, config.offset)),
            "effectiveDof": effective_dof(config.n, config.offset, config.periods),
            "plans": [plan.to_dict() for plan in plans],
        }, config)

    rows = [{
        "period": plan.period,
        "family": block.family,
        "orientation": block.orientation.value,
        "n1": block.slots[0],
        "n2": block.slots[1],
        "n3": block.slots[2],
    } for plan in plans for block in plan.blocks]
    return render_csv(pd.DataFrame(rows), config)


def _simulated_offset(config: ExperimentConfig) -> Tuple[int, Optional[Dict[str, int]]]:
    if not config.offsets:
        return config.offset, None
    assignment = OffsetAssignment(config.n, config.offsets)
    pair = select_pair(assignment)
    if pair is None:
        raise InfeasibleOffset(f"No user pair among offsets {config.offsets} reaches "
                               f"tau >= ceil(N/3) for N={config.n}")
    relative = (assignment.offsets[pair.j] - assignment.offsets[pair.i]) % config.n
    logger.info(f"Selected users {pair.i} and {pair.j} (tau={pair.tau})")
    return relative, asdict(pair)


def cmd_simulate(config: ExperimentConfig) -> str:
    """DoF estimate and per-SNR sum rates for one offset."""
    offset, pair = _simulated_offset(config)
    plan = decompose_period(config.n, offset, 0)
    schedules = schedules_for(config.n, offset)
    process = ChannelProcess(config.seed)

    schemes = ["bia"] + (["single_stream"] if config.baseline else [])
    dof_rows, rate_rows = [], []
    for scheme in schemes:
        estimate = estimate_dof(process, schedules, plan, config.dof_low_db, config.dof_high_db,
                                config.realizations, config.seed, scheme=scheme,
                                workers=config.workers, show_progress=config.show_progress)
        logger.info(f"{scheme}: DoF {estimate.dof_mean:.4f} +/- {estimate.dof_stderr:.4f}")
        dof_rows.append(estimate.to_row())
        rate_rows.extend(average_sum_rate(process, schedules, plan, config.snr_db,
                                          config.realizations, config.seed, scheme=scheme,
                                          workers=config.workers,
                                          show_progress=config.show_progress))

    rates = pd.DataFrame(rate_rows)
    if config.rates_out is not None:
        write_output(render_csv(rates, config), config.rates_out)

    if config.fmt == "json":
        payload = {"dof": dof_rows, "rates": rates.to_dict("records")}
        if pair is not None:
            payload["pair"] = pair
        return render_json(payload, config)
    return (render_csv(pd.DataFrame(dof_rows), config)
            + f"\n{RATES_SECTION}\n" + rates.to_csv(index=False, lineterminator="\n"))


def cmd_pairing(config: ExperimentConfig) -> str:
    """Closed form, bound, enumeration and Monte Carlo for one (N, K)."""
    report = pairing_report(config.n, config.k, budget=config.budget,
                            skip_oracle=config.skip_oracle, samples=config.samples,
                            seed=config.seed, workers=config.workers,
                            show_progress=config.show_progress)
    for note in report.notes:
        logger.info(note)
    row = report.to_row()
    if config.fmt == "json":
        return render_json({"report": row, "notes": report.notes}, config)
    return render_csv(pd.DataFrame([row]), config)


def cmd_sweep_fig4(config: ExperimentConfig) -> str:
    """Lower-bound curves over K for every requested N."""
    df = lower_bound_sweep(config.ns, range(config.k_min, config.k_max + 1),
                           with_exact=config.with_exact, samples=config.samples,
                           seed=config.seed, budget=config.budget, workers=config.workers)
    logger.info(f"Swept {len(df)} (N, K) points")
    if config.fmt == "json":
        return render_json({"rows": df.to_dict("records")}, config)
    return render_csv(df, config)


HANDLERS = {
    "schedule": cmd_schedule,
    "simulate": cmd_simulate,
    "pairing": cmd_pairing,
    "sweep-fig4": cmd_sweep_fig4,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="maximum number of enumerated offset tuples")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--verbose", action="store_true")

    parser = _ArgumentParser(description="Blind interference alignment on homogeneous block fading")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", parents=[common], help="type-Z decomposition")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--offset", type=int, required=True)
    p.add_argument("--periods", type=int, default=1)

    p = sub.add_parser("simulate", parents=[common], help="rates and DoF estimate")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--offset", type=int, default=2)
    p.add_argument("--offsets", type=int, nargs="+", default=None,
                   help="K-user offsets; the best feasible pair is simulated")
    p.add_argument("--snr-db", dest="snr_db", type=float, nargs="*",
                   default=list(ExperimentConfig.snr_db))
    p.add_argument("--dof-low", dest="dof_low_db", type=float, default=30.0)
    p.add_argument("--dof-high", dest="dof_high_db", type=float, default=50.0)
    p.add_argument("--realizations", type=int, default=200)
    p.add_argument("--baseline", action="store_true", help="add the single-stream baseline")
    p.add_argument("--rates-out", dest="rates_out", default=None)

    p = sub.add_parser("pairing", parents=[common], help="K-user pairing probabilities")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--skip-oracle", dest="skip_oracle", action="store_true")

    p = sub.add_parser("sweep-fig4", parents=[common], help="lower-bound curves over K")
    p.add_argument("--ns", type=int, nargs="+", default=list(ExperimentConfig.ns))
    p.add_argument("--k-min", dest="k_min", type=int, default=2)
    p.add_argument("--k-max", dest="k_max", type=int, default=10)
    p.add_argument("--with-exact", dest="with_exact", action="store_true")
    p.add_argument("--samples", type=int, default=0)
    return parser


def configure_logging(quiet: bool = False, verbose: bool = False):
    level = logging.WARNING if quiet else logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    root.setLevel(level)
    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter("%(levelname)s - %(module)s - %(message)s"))
    while len(root.handlers) > 0:
        root.handlers.pop()
    root.addHandler(handler)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.quiet, args.verbose)
        config = ExperimentConfig.from_args(args, argv).validate()
        text = HANDLERS[config.command](config)
        write_output(text, config.out)
        return EXIT_OK
    except InfeasibleOffset as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExceeded as e:
        print(f"Error: {e} (use --skip-oracle or raise --budget)", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG


if __name__ == "__main__":
    sys.exit(main())
