"""Exact finite-support checks of the adversarial game's equilibrium theory.

All quantities are in nats.  Conventions: 0 log 0 = 0, and KL(p||q) = inf
whenever p puts mass where q has none.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

LOG4 = math.log(4.0)
SUM_TOL = 1e-12


class OracleError(ValueError):
    pass


def as_dist(probs) -> np.ndarray:
    """Validate a probability vector and return it as a float64 array."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise OracleError(f"distribution must be a nonempty vector, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise OracleError("distribution entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > SUM_TOL:
        raise OracleError(f"distribution sums to {p.sum()!r}, not 1")
    return p


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p, q = as_dist(p), as_dist(q)
    if p.shape != q.shape:
        raise OracleError(f"support mismatch: {p.size} vs {q.size}")
    return p, q


def random_dist(rng: np.random.Generator, k: int, sparsity: float = 0.0) -> np.ndarray:
    """Dirichlet(1) draw; with ``sparsity`` > 0 some entries are zeroed."""
    p = rng.dirichlet(np.ones(k))
    if sparsity > 0 and k > 1:
        keep = rng.random(k) >= sparsity
        keep[rng.integers(k)] = True
        p = np.where(keep, p, 0.0)
        p = p / p.sum()
    return p


def _kl_terms(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl(p, q) -> float:
    p, q = _pair(p, q)
    return _kl_terms(p, q)


def _kl_to_mixture(p: np.ndarray, total: np.ndarray) -> float:
    """KL(p || (p + q) / 2) given total = p + q; finite because total >= p."""
    mask = p > 0
    return float(np.sum(p[mask] * np.log(2.0 * p[mask] / total[mask])))


def jsd(p, q) -> float:
    p, q = _pair(p, q)
    # halving p + q can underflow subnormal entries to 0, so work with the sum
    total = p + q
    return 0.5 * _kl_to_mixture(p, total) + 0.5 * _kl_to_mixture(q, total)


def optimal_discriminator(p_data, p_g) -> np.ndarray:
    """Pointwise p_data / (p_data + p_g); 0.5 where both vanish."""
    p_data, p_g = _pair(p_data, p_g)
    total = p_data + p_g
    out = np.full_like(p_data, 0.5)
    np.divide(p_data, total, out=out, where=total > 0)
    return out


def value_at_optimal_d(p_data, p_g) -> float:
    """Value of the game at the best response, max over D of F(D, G)."""
    p_data, p_g = _pair(p_data, p_g)
    total = p_data + p_g
    real = p_data > 0
    fake = p_g > 0
    # 1 - D* is formed as p_g / total directly to avoid cancellation
    return float(
        np.sum(p_data[real] * np.log(p_data[real] / total[real]))
        + np.sum(p_g[fake] * np.log(p_g[fake] / total[fake]))
    )


def jsd_identity_residual(p_data, p_g) -> float:
    """Residual |value at optimal D - (-log 4 + 2 JSD)|; zero up to rounding."""
    return abs(value_at_optimal_d(p_data, p_g) - (-LOG4 + 2.0 * jsd(p_data, p_g)))


def kl_decomposition(p_data, p_g) -> float:
    """KL(p_data || m) + KL(p_g || m) - log 4 with m the equal mixture."""
    p_data, p_g = _pair(p_data, p_g)
    total = p_data + p_g
    return _kl_to_mixture(p_data, total) + _kl_to_mixture(p_g, total) - LOG4


def scalar_maximizer(m: float, n: float) -> float:
    """argmax over f in [0, 1] of m log f + n log(1 - f)."""
    if m < 0 or n < 0:
        raise OracleError("m and n must be nonnegative")
    if m == 0 and n == 0:
        raise OracleError("(m, n) = (0, 0) has no unique maximizer")
    return m / (m + n)


def scalar_objective(m: float, n: float, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(m > 0, m * np.log(f), 0.0)
        right = np.where(n > 0, n * np.log1p(-f), 0.0)
    return left + right


def grid_argmax(m: float, n: float, points: int = 100_000) -> float:
    """Brute-force maximizer on the closed grid {0, 1/points, ..., 1}."""
    f = np.linspace(0.0, 1.0, points + 1)
    return float(f[int(np.argmax(scalar_objective(m, n, f)))])


def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the K-simplex with coordinates in multiples of 1/steps.

    Rows come out in lexicographic order of their integer compositions.
    """
    rows = []
    for cuts in itertools.combinations(range(steps + k - 1), k - 1):
        prev = -1
        comp = []
        for c in cuts:
            comp.append(c - prev - 1)
            prev = c
        comp.append(steps + k - 2 - prev)
        rows.append(comp)
    grid = np.array(rows, dtype=np.int64)
    # combinations yield reverse-lex compositions in the first coordinate
    order = np.lexsort(grid.T[::-1])
    return grid[order] / steps


def nearest_grid_point(p: np.ndarray, steps: int) -> np.ndarray:
    """Largest-remainder rounding of p onto the 1/steps simplex grid."""
    scaled = p * steps
    base = np.floor(scaled).astype(np.int64)
    short = steps - int(base.sum())
    if short > 0:
        order = np.argsort(-(scaled - base), kind="stable")
        base[order[:short]] += 1
    return base / steps


def value_at_optimal_d_rows(p_data: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Vectorized value_at_optimal_d for one p_data against many candidate p_g rows."""
    pd = np.broadcast_to(p_data, grid.shape)
    total = pd + grid
    with np.errstate(divide="ignore", invalid="ignore"):
        real = np.where(pd > 0, pd * np.log(pd / total), 0.0)
        fake = np.where(grid > 0, grid * np.log(grid / total), 0.0)
    return (real + fake).sum(axis=1)


@dataclass
class MinimumSearch:
    argmin: np.ndarray
    value: float
    delta: float  # H at the grid point nearest p_data, minus (-log 4)
    n_points: int


def brute_force_min_value(p_data, grid_steps: int = 100, max_support: int = 4) -> MinimumSearch:
    """Exhaustively minimize H over a simplex grid of candidate generators.

    Ties resolve to the lexicographically smallest candidate.
    """
    p_data = as_dist(p_data)
    k = p_data.size
    if k > max_support:
        raise OracleError(f"support size {k} too large for grid enumeration (max {max_support})")
    if grid_steps < 10:
        raise OracleError("grid_steps must be at least 10")
    grid = simplex_grid(k, grid_steps)
    values = value_at_optimal_d_rows(p_data, grid)
    best = int(np.argmin(values))
    near = nearest_grid_point(p_data, grid_steps)
    delta = value_at_optimal_d(p_data, near) + LOG4
    return MinimumSearch(grid[best].copy(), float(values[best]), delta, len(grid))
