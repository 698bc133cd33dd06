"""Quick self-checks behind ``marginal-screening validate``.

Each check returns ``(name, ok, detail)``. They are small versions of the
test-suite invariants, sized to finish in a few seconds.
"""

from __future__ import annotations

import numpy as np

from .harness import Example1, ExperimentConfig, run_experiment
from .model import (
    CovarianceStructure, RegressionModel, SingularMatrixError, covariance_entry,
    dense_matrix, example1_model, example2_model, marginal_moments, solve_ar1_beta,
    solve_equi_beta, solve_linear_system, spectral_bound,
)
from .sampler import Dataset, RngStream, ar1_filter, sample_dataset, sample_predictors
from .screening import marginal_correlations, screen, two_sample_t


def _ar1_solution():
    beta = solve_ar1_beta(0.25, 3.0)
    err = max(abs(beta[1] + 0.8), abs(beta[3] - 12.8))
    return err <= 1e-12, f"beta1={beta[1]!r}, beta3={beta[3]!r}"


def _equi_solution():
    beta = solve_equi_beta(0.1)
    want = [-10 / 3] * 4 + [160 / 3]
    err = max(abs(beta[i + 1] - w) for i, w in enumerate(want))
    return err <= 1e-10, f"max error {err:.2e}"


def _moments():
    m1 = marginal_moments(example1_model(20))
    m2 = marginal_moments(example2_model(20))
    err = max(abs(m1.cov_y_x[0]), abs(m1.cov_y_x[1] - 3.0),
              np.max(np.abs(m2.cov_y_x[:4] - 1.0)), np.max(np.abs(m2.cov_y_x[5:] - 4.0)))
    return err <= 1e-10, f"max deviation {err:.2e}"


def _moments_vs_dense():
    rng = np.random.default_rng(1)
    worst = 0.0
    for cov in (CovarianceStructure.ar1(0.6, 60), CovarianceStructure.equicorrelated(0.3, 60),
                CovarianceStructure.identity(60)):
        support = rng.choice(60, size=6, replace=False) + 1
        model = RegressionModel(dict(zip(support.tolist(), rng.normal(size=6))), cov)
        dense = dense_matrix(cov) @ model.beta_vector()
        got = marginal_moments(model).cov_y_x
        worst = max(worst, np.max(np.abs(got - dense)) / np.max(np.abs(dense)))
    return worst <= 1e-10, f"relative error {worst:.2e}"


def _solver():
    A = [[1.0, 0.0625], [0.25, 0.25]]
    x = solve_linear_system(A, [0.0, 3.0])
    try:
        solve_linear_system([[0.0, 0.0], [0.0, 0.0]], [1.0, 1.0])
        singular = False
    except SingularMatrixError:
        singular = True
    ok = np.allclose(x, [-0.8, 12.8], rtol=0, atol=1e-12) and singular
    return ok, f"x={x.tolist()}, singular detected={singular}"


def _spectral():
    eq = CovarianceStructure.equicorrelated(0.1, 100)
    ar = CovarianceStructure.ar1(0.25, 10)
    top = np.linalg.eigvalsh(dense_matrix(ar))[-1]
    ok = abs(spectral_bound(eq) - 10.9) <= 1e-12 and top <= spectral_bound(ar) <= 1.05 * top
    return ok, f"equi={spectral_bound(eq):.6g}, ar1 bound={spectral_bound(ar):.6g} vs {top:.6g}"


def _sampler_covariance():
    worst = 0.0
    for cov in (CovarianceStructure.ar1(0.25, 5), CovarianceStructure.equicorrelated(0.1, 5)):
        X = sample_predictors(cov, 50_000, RngStream(3, 0))
        emp = X.T @ X / X.shape[0]
        pop = np.array([[covariance_entry(cov, i, j) for j in range(1, 6)] for i in range(1, 6)])
        worst = max(worst, np.max(np.abs(emp - pop)))
    return worst <= 0.03, f"max entry deviation {worst:.4f} at 5e4 draws"


def _ar1_recursion():
    z = np.random.default_rng(5).standard_normal((40, 7))
    x, _ = ar1_filter(z.copy(), 0.7)
    chol = np.linalg.cholesky(dense_matrix(CovarianceStructure.ar1(0.7, 40))) @ z
    err = np.max(np.abs(x - chol))
    return err <= 1e-10, f"max difference {err:.2e}"


def _screen_vs_sort():
    rng = np.random.default_rng(7)
    for _ in range(500):
        p = int(rng.integers(1, 60))
        w = rng.choice([-0.5, 0.25, 0.5, 0.75], size=p) if rng.random() < 0.3 \
            else rng.uniform(-1, 1, size=p)
        k = int(rng.integers(1, p + 1))
        oracle = sorted(sorted(range(p), key=lambda i: (-abs(w[i]), i))[:k])
        if screen(w, k).retained.tolist() != [i + 1 for i in oracle]:
            return False, f"mismatch at p={p}, k={k}"
    return True, "500 random cases"


def _t_vs_w():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n, p = 40, 30
        y = (rng.random(n) < 0.5).astype(float)
        y[:2] = [0.0, 1.0]
        X = rng.normal(size=(n, p)) + 0.5 * y[:, None] * rng.normal(size=p)
        ds = Dataset(y, X)
        t = two_sample_t(ds)
        w = marginal_correlations(ds)
        if not np.array_equal(np.argsort(-np.abs(t), kind="stable"),
                              np.argsort(-np.abs(w), kind="stable")):
            return False, "rank order differs"
    return True, "20 random binary datasets"


def _streaming():
    model = example2_model(700)
    rng = RngStream(9, 1)
    full = marginal_correlations(sample_dataset(model, 50, rng))
    stream = marginal_correlations(sample_dataset(model, 50, rng, memory_budget=1000))
    err = np.max(np.abs(full - stream))
    return err <= 1e-9, f"max difference {err:.2e}"


def _determinism():
    cfg = ExperimentConfig(Example1(), (30,), replications=12, master_seed=5)
    a = run_experiment(cfg, workers=1).to_csv()
    b = run_experiment(cfg, workers=1).to_csv()
    return a == b, "repeated run gives identical CSV"


CHECKS = [
    ("ar1 construction", _ar1_solution),
    ("equicorrelation construction", _equi_solution),
    ("population moments", _moments),
    ("moments vs dense R beta", _moments_vs_dense),
    ("pivoting solver", _solver),
    ("spectral bound", _spectral),
    ("sampler covariance", _sampler_covariance),
    ("ar1 recursion = cholesky", _ar1_recursion),
    ("screen = full sort", _screen_vs_sort),
    ("t ranking = |w| ranking", _t_vs_w),
    ("streaming = materialized", _streaming),
    ("determinism", _determinism),
]


def run_checks():
    results = []
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results
