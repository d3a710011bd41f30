"""Verification suites behind the ``oracle-check`` and ``grad-check`` commands."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import oracle
from .nn import HIDDEN_ACTIVATIONS, LOSSES, as_matrix, grad_check_report, mlp_new

GRAD_TOL = 1e-4


@dataclass
class CheckRow:
    check: str
    trials: int
    max_residual: float
    passed: bool
    detail: str = ""

    def csv_row(self) -> str:
        return f"{self.check},{self.trials},{self.max_residual:.6e},{'pass' if self.passed else 'fail'}"


CSV_HEADER = "check,trials,max_residual,pass"


def _row(name: str, residuals: list[float], tol: float, detail: str = "") -> CheckRow:
    worst = max(residuals, default=0.0)
    return CheckRow(name, len(residuals), worst, worst <= tol, detail)


def oracle_checks(trials: int = 1000, support_max: int = 16, seed: int = 0, grid_steps: int = 100) -> list[CheckRow]:
    """Exact-arithmetic checks of the equilibrium identities on random pairs."""
    if support_max < 2:
        raise ValueError("support_max must be at least 2")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(trials):
        k = int(rng.integers(2, support_max + 1))
        sparsity = 0.3 if i % 4 == 3 else 0.0
        pairs.append((oracle.random_dist(rng, k, sparsity), oracle.random_dist(rng, k, sparsity)))

    rows = [
        _row("jsd_identity", [oracle.jsd_identity_residual(p, q) for p, q in pairs], 1e-12),
        _row(
            "kl_decomposition",
            [abs(oracle.value_at_optimal_d(p, q) - oracle.kl_decomposition(p, q)) for p, q in pairs],
            1e-12,
        ),
        _row("value_lower_bound", [max(0.0, -oracle.LOG4 - oracle.value_at_optimal_d(p, q)) for p, q in pairs], 1e-12),
        _row("jsd_symmetry", [abs(oracle.jsd(p, q) - oracle.jsd(q, p)) for p, q in pairs], 0.0),
        _row(
            "jsd_range",
            [max(0.0, -oracle.jsd(p, q), oracle.jsd(p, q) - math.log(2.0)) for p, q in pairs],
            1e-15,
        ),
        _row(
            "dstar_at_equality",
            [float(np.max(np.abs(oracle.optimal_discriminator(p, p) - 0.5))) for p, _ in pairs],
            1e-12,
        ),
        _row("value_at_equality", [abs(oracle.value_at_optimal_d(p, p) + oracle.LOG4) for p, _ in pairs], 1e-15),
    ]

    mn = rng.random((trials, 2))
    rows.append(
        _row(
            "scalar_maximizer_grid",
            [abs(oracle.scalar_maximizer(m, n) - oracle.grid_argmax(m, n)) for m, n in mn],
            1e-5,
        )
    )

    # exhaustive simplex search is costly, so a few targets per support size
    per_k = min(trials, 3)
    residuals, detail = [], ""
    step = 1.0 / grid_steps
    for k in range(2, min(support_max, 4) + 1):
        for _ in range(per_k):
            p_data = oracle.random_dist(rng, k)
            res = oracle.brute_force_min_value(p_data, grid_steps)
            dist = float(np.max(np.abs(res.argmin - p_data)))
            lo_ok = res.value >= -oracle.LOG4 - 1e-12
            hi_ok = res.value <= -oracle.LOG4 + res.delta + 1e-12
            if not (lo_ok and hi_ok):
                dist = math.inf
                detail = f"value {res.value} outside [-log 4, -log 4 + {res.delta}] for {p_data}"
            residuals.append(dist)
    rows.append(_row("grid_minimum", residuals, step + 1e-12, detail))
    return rows


# --- gradient checks ------------------------------------------------------------


def grad_cases() -> list[tuple[str, str, str]]:
    """Every (hidden activation, output activation, loss) combination."""
    cases = [(h, "identity", "quadratic") for h in HIDDEN_ACTIVATIONS]
    cases += [(h, "sigmoid", loss) for h, loss in itertools.product(HIDDEN_ACTIVATIONS, LOSSES[1:])]
    return cases


def _kink_free_batch(net, rng, rows: int, margin: float = 1e-3) -> np.ndarray:
    """Resample inputs until no ReLU pre-activation lies within ``margin`` of 0."""
    for _ in range(100):
        x = rng.normal(size=(rows, net.input_dim))
        a = as_matrix(x)
        ok = True
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            z = a @ w.T + b
            if np.min(np.abs(z)) < margin:
                ok = False
                break
            a = np.maximum(z, 0.0)
        if ok:
            return x
    return x


@dataclass
class GradCheckOutcome:
    case: str
    error: float
    param: str


def grad_checks(trials: int = 100, seed: int = 0, corrupt: bool = False) -> list[GradCheckOutcome]:
    """Randomized small nets (<= 3 layers, <= 8 units) cycling through every case."""
    rng = np.random.default_rng(seed)
    cases = grad_cases()
    out = []
    for i in range(trials):
        hidden, output, loss = cases[i % len(cases)]
        n_layers = int(rng.integers(2, 4))
        sizes = [int(rng.integers(1, 9)) for _ in range(n_layers)]
        if output == "sigmoid":
            sizes[-1] = 1
        net = mlp_new(sizes, hidden, output, seed=int(rng.integers(2**31)))
        for w in net.biases:
            w += rng.normal(scale=0.1, size=w.shape)
        rows = 2 * int(rng.integers(1, 5))
        x = _kink_free_batch(net, rng, rows) if hidden == "relu" else rng.normal(size=(rows, sizes[0]))
        target = rng.normal(size=(rows, sizes[-1])) if loss == "quadratic" else None
        res = grad_check_report(net, x, loss, target, corrupt=corrupt)
        case = f"sizes={'-'.join(map(str, sizes))} hidden={hidden} output={output} loss={loss}"
        out.append(GradCheckOutcome(case, res.max_relative_error, f"{res.worst_param}{list(res.worst_index)}"))
    return out
