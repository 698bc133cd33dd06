"""Command-line front end.

    marginal-screening example1 --n 50,200,500,1000 --reps 100 --seed 7 -o table1.csv
    marginal-screening example2 --p-rule square --n 25,50,100 -o table2b.csv
    marginal-screening custom --structure ar1 --rho 0.5 --beta 1:2,4:-1 --n 100
    marginal-screening moments --example 1 --rho 0.25 --a 3
    marginal-screening validate

The default seed can be overridden with the ``MARGINAL_SCREENING_SEED``
environment variable. Exit status: 0 success, 1 runtime failure, 2 usage
error.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from dataclasses import dataclass, fields

from .harness import (
    DEFAULT_REPLICATIONS, DEFAULT_SEED, Custom, Example1, Example2, ExperimentConfig,
    parse_p_rule, run_experiment,
)
from .model import CovarianceStructure, RegressionModel, marginal_moments
from .screening import RetentionRule

SEED_ENV = "MARGINAL_SCREENING_SEED"
SUBCOMMANDS = ("example1", "example2", "custom", "moments", "validate")
RETENTION_CHOICES = ("top-n", "n-over-log-n", "power", "fixed")
STRUCTURES = ("ar1", "equicorrelated", "identity")

_EXAMPLE_DEFAULTS = {
    "example1": {"rho": 0.25, "a": 3.0, "sigma": 1.0},
    "example2": {"rho": 0.1, "sigma": 1.0, "important_cov": 1.0, "unimportant_cov": 4.0},
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class CliInvocation:
    subcommand: str
    n_values: tuple[int, ...] = ()
    p_rule: str = "linear:2"
    rho: float | None = None
    a: float | None = None
    sigma: float | None = None
    important_cov: float | None = None
    unimportant_cov: float | None = None
    reps: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    retention: str = "top-n"
    theta: float | None = None
    k: int | None = None
    track: tuple[int, ...] | None = None
    structure: str | None = None
    beta: str | None = None
    intercept: float = 0.0
    example: int | None = None
    p: int | None = None
    output: str | None = None
    workers: int | None = None
    format: str = "csv"

    def to_argv(self) -> list[str]:
        """Canonical argv that parses back to this invocation."""
        argv = [self.subcommand]
        if self.subcommand == "validate":
            return argv
        experiment = self.subcommand in ("example1", "example2", "custom")
        defaults = CliInvocation(self.subcommand)
        for f in fields(self):
            if f.name == "subcommand":
                continue
            val = getattr(self, f.name)
            if val is None:
                continue
            if f.name in ("n_values", "track"):
                if not val:
                    continue
                val = ",".join(str(v) for v in val)
            elif f.name in ("seed", "reps"):
                if not experiment:
                    continue
            elif val == getattr(defaults, f.name):
                continue
            argv += [_flag(f.name), str(val) if not isinstance(val, float) else repr(val)]
        return argv


def _flag(name: str) -> str:
    return {"n_values": "--n"}.get(name, "--" + name.replace("_", "-"))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _p_rule(text: str) -> str:
    try:
        return parse_p_rule(text).describe()
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return _seed(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marginal-screening",
        description="Simulate failures of marginal correlation screening.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def experiment_flags(sp):
        sp.add_argument("--n", dest="n_values", type=_int_list, required=True,
                        help="comma-separated sample sizes")
        sp.add_argument("--p-rule", type=_p_rule, default="linear:2",
                        help="linear:<c> (p = c n), square (p = n^2) or fixed:<p>")
        sp.add_argument("--reps", type=_positive_int, default=DEFAULT_REPLICATIONS)
        sp.add_argument("--seed", type=_seed, default=None)
        sp.add_argument("--retention", choices=RETENTION_CHOICES, default="top-n")
        sp.add_argument("--theta", type=float, help="exponent for --retention power")
        sp.add_argument("--k", type=_positive_int, help="size for --retention fixed")
        sp.add_argument("--track", type=_int_list, help="variables to report")
        sp.add_argument("-o", "--output", help="CSV path (stdout if omitted)")
        sp.add_argument("--workers", type=_positive_int,
                        help="worker processes (default: all CPUs)")
        sp.add_argument("--format", choices=("csv",), default="csv")
        sp.add_argument("--sigma", type=float)

    ex1 = sub.add_parser("example1", help="AR(1) design, x1 uncorrelated with y")
    experiment_flags(ex1)
    ex1.add_argument("--rho", type=float)
    ex1.add_argument("--a", type=float)

    ex2 = sub.add_parser("example2", help="equicorrelated design, x1..x4 dominated")
    experiment_flags(ex2)
    ex2.add_argument("--rho", type=float)
    ex2.add_argument("--important-cov", type=float)
    ex2.add_argument("--unimportant-cov", type=float)

    cus = sub.add_parser("custom", help="user-specified sparse model")
    experiment_flags(cus)
    cus.add_argument("--structure", choices=STRUCTURES, required=True)
    cus.add_argument("--rho", type=float)
    cus.add_argument("--beta", required=True, help="sparse coefficients, e.g. 1:2.5,7:-1")
    cus.add_argument("--intercept", type=float, default=0.0)

    mom = sub.add_parser("moments", help="print population Cov/Cor(y, xi)")
    mom.add_argument("--example", type=int, choices=(1, 2), required=True)
    mom.add_argument("--rho", type=float)
    mom.add_argument("--a", type=float)
    mom.add_argument("--sigma", type=float)
    mom.add_argument("--important-cov", type=float)
    mom.add_argument("--unimportant-cov", type=float)
    mom.add_argument("--p", type=_positive_int, default=10)

    sub.add_parser("validate", help="run the built-in invariant checks")
    return parser


def parse_invocation(argv) -> CliInvocation:
    """Parse argv into a :class:`CliInvocation`; argparse exits 2 on bad flags."""
    ns = vars(build_parser().parse_args(argv))
    cmd = ns.pop("subcommand")
    defaults = dict(_EXAMPLE_DEFAULTS.get(cmd, {}))
    if cmd == "moments":
        defaults = dict(_EXAMPLE_DEFAULTS[f"example{ns['example']}"])
        if ns["example"] == 2:
            ns.pop("a", None)
    for key, val in defaults.items():
        if key in ns and ns[key] is None:
            ns[key] = val
    if cmd == "custom" and ns.get("sigma") is None:
        ns["sigma"] = 1.0
    if cmd in ("example1", "example2", "custom") and ns.get("seed") is None:
        ns["seed"] = default_seed()
    known = {f.name for f in fields(CliInvocation)}
    return CliInvocation(cmd, **{k: v for k, v in ns.items() if k in known})


def _parse_beta(text: str) -> dict[int, float]:
    beta = {}
    for item in text.split(","):
        if not item.strip():
            continue
        idx, sep, val = item.partition(":")
        if not sep:
            raise UsageError(f"bad --beta item {item!r}; expected index:value")
        try:
            beta[int(idx)] = float(val)
        except ValueError:
            raise UsageError(f"bad --beta item {item!r}")
    return beta


def _retention(inv: CliInvocation) -> RetentionRule:
    if inv.retention == "power":
        if inv.theta is None:
            raise UsageError("--retention power needs --theta")
        return RetentionRule.power(inv.theta)
    if inv.retention == "fixed":
        if inv.k is None:
            raise UsageError("--retention fixed needs --k")
        return RetentionRule.fixed(inv.k)
    if inv.retention == "n-over-log-n":
        return RetentionRule.n_over_log_n()
    return RetentionRule.top_n()


def _model_spec(inv: CliInvocation):
    if inv.subcommand == "example1":
        return Example1(inv.rho, inv.a, inv.sigma)
    if inv.subcommand == "example2":
        return Example2(inv.rho, inv.sigma, inv.important_cov, inv.unimportant_cov)
    beta = _parse_beta(inv.beta)
    p = max(list(beta) + [1])
    if inv.structure == "identity":
        cov = CovarianceStructure.identity(p)
    elif inv.rho is None:
        raise UsageError(f"--structure {inv.structure} needs --rho")
    elif inv.structure == "ar1":
        cov = CovarianceStructure.ar1(inv.rho, p)
    else:
        cov = CovarianceStructure.equicorrelated(inv.rho, p)
    return Custom(RegressionModel(beta, cov, inv.sigma, inv.intercept))


def build_config(inv: CliInvocation) -> ExperimentConfig:
    try:
        config = ExperimentConfig(
            model_spec=_model_spec(inv),
            n_values=inv.n_values,
            p_rule=parse_p_rule(inv.p_rule),
            retention=_retention(inv),
            replications=inv.reps,
            tracked_variables=inv.track,
            master_seed=inv.seed,
        )
        for n in config.n_values:
            config.model_for(n)
        return config
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc))


def _moments(inv: CliInvocation, out) -> None:
    from .model import example1_model, example2_model

    try:
        if inv.example == 1:
            model = example1_model(inv.p, inv.rho, inv.a, inv.sigma)
        else:
            model = example2_model(inv.p, inv.rho, inv.sigma, inv.important_cov,
                                   inv.unimportant_cov)
    except ValueError as exc:
        raise UsageError(str(exc))
    mom = marginal_moments(model)
    coefs = ", ".join(f"beta{i}={v!r}" for i, v in model.coefficients.items())
    print(f"# {coefs}; Var(y)={mom.var_y:.12g}", file=out)
    print("variable,beta,cov_y_x,cor_y_x", file=out)
    for i in range(model.p):
        b = model.coefficients.get(i + 1, 0.0)
        cov = mom.cov_y_x[i] + 0.0
        print(f"{i + 1},{b:.12g},{cov:.12g},{mom.cor_y_x[i] + 0.0:.12g}", file=out)


def run(inv: CliInvocation, out=None) -> int:
    out = sys.stdout if out is None else out
    if inv.subcommand == "validate":
        from .validation import run_checks

        results = run_checks()
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=out)
        return 0 if all(ok for _, ok, _ in results) else 1
    if inv.subcommand == "moments":
        _moments(inv, out)
        return 0

    config = build_config(inv)
    report = run_experiment(config, workers=inv.workers)
    if inv.output:
        report.write(inv.output, extra={
            "invocation": shlex.join(inv.to_argv()),
            "config": config.describe(),
        })
    else:
        out.write(report.to_csv())
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        inv = parse_invocation(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"marginal-screening: usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(inv)
    except UsageError as exc:
        print(f"marginal-screening: usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        msg = " ".join(str(exc).split())
        print(f"marginal-screening: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


