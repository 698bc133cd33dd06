"""Monte Carlo protocol: replicate, screen, count how often tracked important
variables fail to survive, and persist the aggregated report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .model import (
    AR1, DENSE, EQUICORRELATED, IDENTITY, RegressionModel, example1_model,
    example2_model,
)
from .sampler import DEFAULT_MEMORY_BUDGET, GENERATOR_NAME, RngStream, sample_dataset
from .screening import RetentionRule, marginal_correlations, resolve_k, screen

DEFAULT_SEED = 20140519
DEFAULT_REPLICATIONS = 100

CSV_HEADER = ["example", "n", "p", "variable", "failure_count", "replications",
              "failure_proportion", "mc_se", "seed"]


# -- model specifications -------------------------------------------------

@dataclass(frozen=True)
class Example1:
    """AR(1) design; x1 has zero marginal covariance with y."""

    rho: float = 0.25
    a: float = 3.0
    sigma: float = 1.0
    label = "example1"

    def build(self, p: int) -> RegressionModel:
        return example1_model(p, self.rho, self.a, self.sigma)

    def default_tracked(self) -> tuple[int, ...]:
        return (1,)


@dataclass(frozen=True)
class Example2:
    """Equicorrelated design; x1..x4 are dominated by every null variable."""

    rho: float = 0.1
    sigma: float = 1.0
    important_cov: float = 1.0
    unimportant_cov: float = 4.0
    label = "example2"

    def build(self, p: int) -> RegressionModel:
        return example2_model(p, self.rho, self.sigma, self.important_cov,
                              self.unimportant_cov)

    def default_tracked(self) -> tuple[int, ...]:
        return (1, 2, 3, 4)


@dataclass(frozen=True)
class Custom:
    """A user-supplied model; structured covariances are resized to the p rule."""

    model: RegressionModel
    label = "custom"

    def build(self, p: int) -> RegressionModel:
        if p == self.model.p:
            return self.model
        return self.model.with_p(p)

    def default_tracked(self) -> tuple[int, ...]:
        return tuple(int(i) for i in self.model.support)


# -- dimension rules --------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    c: float = 2.0

    def resolve(self, n: int) -> int:
        return max(1, int(math.floor(self.c * n + 1e-9)))

    def describe(self) -> str:
        c = int(self.c) if float(self.c).is_integer() else self.c
        return f"linear:{c}"


@dataclass(frozen=True)
class Square:
    def resolve(self, n: int) -> int:
        return n * n

    def describe(self) -> str:
        return "square"


@dataclass(frozen=True)
class Fixed:
    p: int

    def resolve(self, n: int) -> int:
        return self.p

    def describe(self) -> str:
        return f"fixed:{self.p}"


def parse_p_rule(text: str):
    """Parse ``linear:<c>``, ``square`` or ``fixed:<p>``."""
    kind, _, arg = text.strip().partition(":")
    if kind == "square" and not arg:
        return Square()
    if kind == "linear" and arg:
        c = float(arg)
        if not c > 0:
            raise ValueError(f"linear factor must be positive, got {arg}")
        return Linear(c)
    if kind == "fixed" and arg:
        p = int(arg)
        if p < 1:
            raise ValueError(f"fixed p must be positive, got {arg}")
        return Fixed(p)
    raise ValueError(f"bad p rule {text!r}; expected linear:<c>, square or fixed:<p>")


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    model_spec: Example1 | Example2 | Custom
    n_values: tuple[int, ...]
    p_rule: Linear | Square | Fixed = field(default_factory=Linear)
    retention: RetentionRule = field(default_factory=RetentionRule)
    replications: int = DEFAULT_REPLICATIONS
    tracked_variables: tuple[int, ...] | None = None
    master_seed: int = DEFAULT_SEED
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.n_values:
            raise ValueError("need at least one sample size")
        if min(self.n_values) < 3:
            raise ValueError("sample sizes must be >= 3")
        if len(set(self.n_values)) != len(self.n_values):
            raise ValueError("duplicate sample sizes")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.tracked_variables is not None:
            tracked = tuple(sorted({int(i) for i in self.tracked_variables}))
            if not tracked or tracked[0] < 1:
                raise ValueError("tracked variables must be positive indices")
            object.__setattr__(self, "tracked_variables", tracked)

    @property
    def tracked(self) -> tuple[int, ...]:
        if self.tracked_variables is not None:
            return self.tracked_variables
        return self.model_spec.default_tracked()

    @property
    def label(self) -> str:
        return self.model_spec.label

    def p_for(self, n: int) -> int:
        return self.p_rule.resolve(n)

    def model_for(self, n: int) -> RegressionModel:
        model = self.model_spec.build(self.p_for(n))
        bad = [i for i in self.tracked if i > model.p]
        if bad:
            raise ValueError(f"tracked variables {bad} exceed p={model.p} at n={n}")
        return model

    def describe(self) -> dict:
        spec = self.model_spec
        if isinstance(spec, Custom):
            spec_desc = {"custom": spec.model.signature()}
        else:
            spec_desc = {spec.label: {k: v for k, v in vars(spec).items()}}
        return {
            "model": spec_desc,
            "n_values": list(self.n_values),
            "p_rule": self.p_rule.describe(),
            "retention": self.retention.describe(),
            "replications": self.replications,
            "tracked": list(self.tracked),
            "master_seed": self.master_seed,
            "generator": GENERATOR_NAME,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def stream_id(n: int, rep_index: int) -> int:
    """64-bit stream id for replication ``rep_index`` at sample size ``n``.

    Keyed on the sample size itself, so editing the n list never moves the
    streams of the sizes that stay.
    """
    digest = hashlib.blake2b(struct.pack("<QQ", n, rep_index), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# -- running ----------------------------------------------------------------

class ReplicationError(RuntimeError):
    def __init__(self, n: int, rep_index: int, cause: BaseException):
        self.n = n
        self.rep_index = rep_index
        super().__init__(f"replication failed at n={n}, rep={rep_index}: "
                         f"{type(cause).__name__}: {cause}")


def _check_tracked(config: ExperimentConfig, model: RegressionModel):
    outside = sorted(set(config.tracked) - set(model.support.tolist()))
    if outside:
        warnings.warn(f"tracked variables {outside} are not in the model support",
                      stacklevel=3)


def _replicate(config, n, rep_index, model, k) -> dict[int, bool]:
    rng = RngStream(config.master_seed, stream_id(n, rep_index))
    data = sample_dataset(model, n, rng, config.memory_budget)
    result = screen(marginal_correlations(data), k)
    tracked = np.asarray(config.tracked)
    hit = np.isin(tracked, result.retained)
    return {int(i): bool(h) for i, h in zip(tracked, hit)}


def run_replication(config: ExperimentConfig, n: int, rep_index: int) -> dict[int, bool]:
    """Survival of each tracked variable in one replication (True = survived)."""
    if not 0 <= rep_index < config.replications:
        raise ValueError(f"rep_index {rep_index} outside [0, {config.replications})")
    try:
        model = config.model_for(n)
        k = resolve_k(config.retention, n, model.p)
        return _replicate(config, n, rep_index, model, k)
    except Exception as exc:
        raise ReplicationError(n, rep_index, exc) from exc


def _failure_counts(config: ExperimentConfig, n: int, reps: range) -> np.ndarray:
    model = config.model_for(n)
    k = resolve_k(config.retention, n, model.p)
    counts = np.zeros(len(config.tracked), dtype=np.int64)
    for r in reps:
        try:
            survived = _replicate(config, n, r, model, k)
        except Exception as exc:
            raise ReplicationError(n, r, exc) from exc
        counts += [not survived[i] for i in config.tracked]
    return counts


def _chunks(replications: int, pieces: int):
    size = max(1, -(-replications // pieces))
    return [range(s, min(s + size, replications)) for s in range(0, replications, size)]


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ReportRow:
    n: int
    p: int
    variable: int
    failure_count: int
    replications: int

    @property
    def failure_proportion(self) -> float:
        return self.failure_count / self.replications

    @property
    def mc_se(self) -> float:
        prop = self.failure_proportion
        return math.sqrt(prop * (1.0 - prop) / self.replications)


@dataclass(frozen=True)
class ExperimentReport:
    example: str
    rows: tuple[ReportRow, ...]
    config_hash: str
    master_seed: int
    generator: str = GENERATOR_NAME
    version: str = __version__
    wall_time: float = 0.0

    def proportion(self, n: int, variable: int) -> float:
        for row in self.rows:
            if row.n == n and row.variable == variable:
                return row.failure_proportion
        raise KeyError((n, variable))

    def row(self, n: int, variable: int) -> ReportRow:
        for row in self.rows:
            if row.n == n and row.variable == variable:
                return row
        raise KeyError((n, variable))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([self.example, r.n, r.p, r.variable, r.failure_count,
                             r.replications, repr(r.failure_proportion), repr(r.mc_se),
                             self.master_seed])
        return buf.getvalue()

    def sidecar(self, extra: dict | None = None) -> str:
        lines = [f"config_hash={self.config_hash}",
                 f"generator={self.generator}",
                 f"version={self.version}",
                 f"master_seed={self.master_seed}",
                 f"wall_time_seconds={self.wall_time:.3f}"]
        for key, val in (extra or {}).items():
            lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    def write(self, path, extra: dict | None = None) -> Path:
        """Write the CSV to ``path`` and the metadata sidecar to ``path.meta``."""
        path = Path(path)
        path.write_text(self.to_csv(), newline="")
        meta = sidecar_path(path)
        meta.write_text(self.sidecar(extra))
        return meta


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, val = line.partition("=")
        out[key] = val
    return out


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Run every replication for every n and aggregate failure proportions.

    Counts are integer sums, so the report does not depend on ``workers`` or
    on scheduling order.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    started = time.perf_counter()
    dims = {}
    for n in config.n_values:
        model = config.model_for(n)
        _check_tracked(config, model)
        dims[n] = model.p

    totals = {n: np.zeros(len(config.tracked), dtype=np.int64) for n in config.n_values}
    if workers == 1:
        for n in config.n_values:
            totals[n] += _failure_counts(config, n, range(config.replications))
    else:
        tasks = [(n, chunk) for n in config.n_values
                 for chunk in _chunks(config.replications, workers * 4)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(n, pool.submit(_failure_counts, config, n, chunk))
                       for n, chunk in tasks]
            for n, fut in futures:
                totals[n] += fut.result()

    rows = tuple(
        ReportRow(n, dims[n], var, int(count), config.replications)
        for n in config.n_values
        for var, count in zip(config.tracked, totals[n])
    )
    return ExperimentReport(config.label, rows, config.config_hash(), config.master_seed,
                            wall_time=time.perf_counter() - started)


# -- independent oracle -----------------------------------------------------

def _oracle_matrix(model: RegressionModel) -> np.ndarray:
    cov = model.covariance
    p = cov.p
    if cov.kind == DENSE:
        return np.array(cov.matrix, dtype=float)
    if cov.kind == IDENTITY:
        return np.eye(p)
    i, j = np.indices((p, p))
    if cov.kind == AR1:
        return np.power(cov.rho, np.abs(i - j))
    if cov.kind == EQUICORRELATED:
        return np.where(i == j, 1.0, cov.rho)
    raise ValueError(cov.kind)


def oracle_failure_probability(model: RegressionModel, n: int, k: int, trials: int,
                               tracked=None, seed: int = 0) -> dict[int, float]:
    """Brute-force estimate of P(variable i is not among the top k |w|).

    Deliberately shares nothing with the fast path: dense Cholesky sampling
    from numpy's default generator, one-pass textbook correlations, and a
    full stable sort with lower-index tie-breaking.
    """
    p = model.p
    if p > 500:
        raise ValueError("oracle is limited to p <= 500")
    tracked = tuple(model.coefficients) if tracked is None else tuple(tracked)
    L = np.linalg.cholesky(_oracle_matrix(model))
    beta = np.zeros(p)
    for i, b in model.coefficients.items():
        beta[i - 1] = b
    gen = np.random.default_rng(seed)
    fails = {i: 0 for i in tracked}
    order_idx = np.arange(p)
    for _ in range(trials):
        X = gen.standard_normal((n, p)) @ L.T
        y = model.intercept + X @ beta + model.noise_sd * gen.standard_normal(n)
        sx, sy = X.sum(axis=0), y.sum()
        num = n * (X * y[:, None]).sum(axis=0) - sx * sy
        den = np.sqrt(n * (X * X).sum(axis=0) - sx**2) * math.sqrt(n * (y @ y) - sy**2)
        w = np.abs(num / den)
        top = set(np.lexsort((order_idx, -w))[:k] + 1)
        for i in tracked:
            fails[i] += i not in top
    return {i: c / trials for i, c in fails.items()}
