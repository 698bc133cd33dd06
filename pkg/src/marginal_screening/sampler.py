"""Reproducible Gaussian sampling for the regression law.

Random numbers come from Philox4x64-10, a counter-based generator. Every
(master_seed, stream_id) pair is a Philox key; inside a stream, each
(channel, block) pair owns a disjoint counter range, so any block can be
regenerated in O(1) without replaying the stream. Standard normals are the
inverse normal CDF of the uniforms, one uniform per variate.

Predictors are produced in blocks of ``BLOCK_COLUMNS`` columns, each block
held transposed (columns x rows). A materialized dataset is exactly the
concatenation of the blocks a streaming dataset regenerates, so both paths
see identical numbers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .model import AR1, DENSE, EQUICORRELATED, CovarianceStructure, RegressionModel

GENERATOR_NAME = "philox4x64-10/inverse-cdf-normal"
BLOCK_COLUMNS = 256
DEFAULT_MEMORY_BUDGET = 200_000_000
MAX_CSV_P = 10_000

PREDICTORS = 0
FACTOR = 1
NOISE = 2

_U64 = (1 << 64) - 1
_TINY = 2.0**-54


@dataclass(frozen=True)
class RngStream:
    """One independent random stream, typically one Monte Carlo replication."""

    master_seed: int
    stream_id: int

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def generator(self, channel: int, block: int = 0) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, block, channel], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def normals(self, channel: int, block: int, size) -> np.ndarray:
        u = self.generator(channel, block).random(size)
        np.maximum(u, _TINY, out=u)
        return ndtri(u, out=u)


class Dataset:
    """n draws of (y, x).

    The predictors are either held in memory or regenerated on demand, block
    by block, from a factory. ``column_blocks`` is the common access path;
    each item is ``(start, block)`` with ``block`` of shape (columns, n).
    """

    def __init__(self, y, X=None, *, p: int | None = None,
                 blocks: Callable[[], Iterator[tuple[int, np.ndarray]]] | None = None):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        self.y = y
        self.n = y.shape[0]
        if (X is None) == (blocks is None):
            raise ValueError("give exactly one of X or blocks")
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.ndim != 2 or X.shape[0] != self.n:
                raise ValueError(f"X has shape {X.shape}, expected ({self.n}, p)")
            if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
                raise ValueError("dataset contains non-finite values")
            self._Xt = X.T
            self.p = X.shape[1]
            self._blocks = None
        else:
            if p is None:
                raise ValueError("a streaming dataset needs p")
            self._Xt = None
            self.p = int(p)
            self._blocks = blocks

    @classmethod
    def _from_transposed(cls, y, Xt) -> "Dataset":
        ds = cls.__new__(cls)
        ds.y, ds.n = y, y.shape[0]
        ds._Xt, ds.p, ds._blocks = Xt, Xt.shape[0], None
        return ds

    @property
    def is_streaming(self) -> bool:
        return self._Xt is None

    @property
    def X(self) -> np.ndarray:
        if self._Xt is None:
            raise MemoryError("streaming dataset: predictors are not held in memory")
        return self._Xt.T

    def column(self, i: int) -> np.ndarray:
        """Predictor column x_i (1-based)."""
        if not 1 <= i <= self.p:
            raise IndexError(f"column {i} out of range for p={self.p}")
        if self._Xt is not None:
            return self._Xt[i - 1]
        for start, block in self._blocks():
            if start <= i - 1 < start + block.shape[0]:
                return block[i - 1 - start]
        raise IndexError(i)

    def column_blocks(self, width: int = BLOCK_COLUMNS) -> Iterator[tuple[int, np.ndarray]]:
        if self._Xt is None:
            yield from self._blocks()
            return
        for start in range(0, self.p, width):
            yield start, self._Xt[start:start + width]


def _block_count(p: int) -> int:
    return -(-p // BLOCK_COLUMNS)


def _predictor_blocks(structure: CovarianceStructure, n: int,
                      rng: RngStream) -> Iterator[tuple[int, np.ndarray]]:
    p = structure.p
    if structure.kind == DENSE:
        z = np.concatenate([
            rng.normals(PREDICTORS, b, (min(BLOCK_COLUMNS, p - b * BLOCK_COLUMNS), n))
            for b in range(_block_count(p))
        ])
        xt = np.linalg.cholesky(structure.matrix) @ z
        for start in range(0, p, BLOCK_COLUMNS):
            yield start, xt[start:start + BLOCK_COLUMNS]
        return

    if structure.kind == EQUICORRELATED:
        rho = structure.rho
        shared = math.sqrt(rho) * rng.normals(FACTOR, 0, n)
        own = math.sqrt(1.0 - rho)
    carry = None
    for b in range(_block_count(p)):
        start = b * BLOCK_COLUMNS
        z = rng.normals(PREDICTORS, b, (min(BLOCK_COLUMNS, p - start), n))
        if structure.kind == AR1:
            z, carry = ar1_filter(z, structure.rho, carry)
        elif structure.kind == EQUICORRELATED:
            z *= own
            z += shared
        yield start, z


def ar1_filter(z: np.ndarray, rho: float, carry: np.ndarray | None = None):
    """Map iid normals (columns x rows) to AR(1) columns in place.

    ``x_1 = z_1`` and ``x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j``; ``carry`` is
    the previous block's last column. Returns ``(x, last column)``.
    """
    if z.shape[0] == 0:
        return z, carry
    z[int(carry is None):] *= math.sqrt(1.0 - rho * rho)
    zi = None if carry is None else (rho * carry)[None, :]
    if zi is None:
        x = lfilter([1.0], [1.0, -rho], z, axis=0)
    else:
        x, _ = lfilter([1.0], [1.0, -rho], z, axis=0, zi=zi)
    return x, x[-1].copy()


def sample_predictors(structure: CovarianceStructure, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. rows from N(0, R) as an n x p array."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xt = np.empty((structure.p, n))
    for start, block in _predictor_blocks(structure, n, rng):
        xt[start:start + block.shape[0]] = block
    return xt.T


def _response(model: RegressionModel, n: int, rng: RngStream, support_columns) -> np.ndarray:
    y = np.full(n, model.intercept)
    for beta, col in zip(model.support_values, support_columns):
        y += beta * col
    if model.noise_sd > 0:
        y += model.noise_sd * rng.normals(NOISE, 0, n)
    return y


def sample_dataset(model: RegressionModel, n: int, rng: RngStream,
                   memory_budget: int = DEFAULT_MEMORY_BUDGET) -> Dataset:
    """Draw n realizations of (y, x).

    When ``n * p`` exceeds ``memory_budget`` the returned dataset is streaming:
    only y and the support columns are computed now, and the predictor blocks
    are regenerated whenever they are iterated.
    """
    if n < 3:
        raise ValueError("n must be >= 3 for sample correlations to be defined")
    structure = model.covariance
    support = model.support

    if n * structure.p <= memory_budget:
        xt = np.empty((structure.p, n))
        for start, block in _predictor_blocks(structure, n, rng):
            xt[start:start + block.shape[0]] = block
        y = _response(model, n, rng, [xt[i - 1] for i in support])
        return Dataset._from_transposed(y, xt)

    wanted = {int(i) - 1 for i in support}
    cols = {}
    last = max(wanted, default=-1)
    for start, block in _predictor_blocks(structure, n, rng):
        if start > last:
            break
        for i in wanted:
            if start <= i < start + block.shape[0]:
                cols[i] = block[i - start].copy()
    y = _response(model, n, rng, [cols[i - 1] for i in support])
    return Dataset(y, p=structure.p,
                   blocks=lambda: _predictor_blocks(structure, n, rng))


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Dump ``y,x1,...,xp`` rows; debugging aid for small p only."""
    if dataset.p > MAX_CSV_P:
        raise ValueError(f"refusing to dump p={dataset.p} > {MAX_CSV_P} columns")
    X = dataset.X if not dataset.is_streaming else np.concatenate(
        [b for _, b in dataset.column_blocks()]).T
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"] + [f"x{i}" for i in range(1, dataset.p + 1)])
        for yk, row in zip(dataset.y, X):
            writer.writerow([repr(float(yk))] + [repr(float(v)) for v in row])
