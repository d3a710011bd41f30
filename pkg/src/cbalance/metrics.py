"""Balance diagnostics on samples and the outcome-prediction step."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import oracle
from .data import SyntheticDataset, sample_noise
from .game import evaluate_game, generate, representation
from .nn import MlpNetwork, as_matrix, backward, forward, mlp_new, sgd_step

MAX_HIST_DIM = 3


def histogram_pair(samples_a, samples_b, bins_per_dim: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Normalized histograms of both samples on one shared grid.

    The grid spans the pooled per-dimension min/max, padded by 1% of the range.
    """
    a, b = as_matrix(samples_a), as_matrix(samples_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    k = a.shape[1]
    if k > MAX_HIST_DIM:
        raise ValueError(
            f"histogram JSD supports at most {MAX_HIST_DIM} dims, got {k}; project first (e.g. x[:, :3])"
        )
    pooled = np.vstack([a, b])
    lo, hi = pooled.min(axis=0), pooled.max(axis=0)
    pad = 0.01 * (hi - lo)
    pad[pad == 0] = 0.5
    edges = [np.linspace(lo[j] - pad[j], hi[j] + pad[j], bins_per_dim + 1) for j in range(k)]
    ha, _ = np.histogramdd(a, bins=edges)
    hb, _ = np.histogramdd(b, bins=edges)
    return ha.ravel() / len(a), hb.ravel() / len(b)


def empirical_jsd(samples_a, samples_b, bins_per_dim: int = 16) -> float:
    p, q = histogram_pair(samples_a, samples_b, bins_per_dim)
    # renormalize so float rounding cannot trip the oracle's sum check
    return oracle.jsd(p / p.sum(), q / q.sum())


@dataclass
class BalanceReport:
    mean_d_real: float
    mean_d_fake: float
    value_fn_estimate: float
    emp_jsd: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def balanced_samples(g, phi, ds: SyntheticDataset, noise_dim: int, rng, conditional: bool = True):
    """Phi(all treated rows) and G(all control rows | fresh noise), cut to <= 3 dims."""
    reprs = representation(phi, ds.treat_pool)
    con = ds.control_pool
    fake = generate(g, con, sample_noise(len(con), noise_dim, rng), conditional)
    return reprs[:, :MAX_HIST_DIM], fake[:, :MAX_HIST_DIM]


def balance_report(
    d: MlpNetwork,
    g: MlpNetwork,
    phi: MlpNetwork | None,
    ds: SyntheticDataset,
    noise_dim: int,
    n_samples: int,
    rng: np.random.Generator,
    conditional: bool = True,
    bins_per_dim: int = 10,
) -> BalanceReport:
    value, mean_real, mean_fake = evaluate_game(
        d, g, phi, ds.treat_pool, ds.control_pool, noise_dim, n_samples, rng, conditional
    )
    reprs, fake = balanced_samples(g, phi, ds, noise_dim, rng, conditional)
    return BalanceReport(mean_real, mean_fake, value, empirical_jsd(reprs, fake, bins_per_dim), n_samples)


# --- prediction step ------------------------------------------------------------


@dataclass
class ItePredictor:
    """Regression head over (representation, treatment indicator)."""

    net: MlpNetwork

    @property
    def repr_dim(self) -> int:
        return self.net.input_dim - 1

    def predict(self, reprs, t) -> np.ndarray:
        r = as_matrix(reprs, self.repr_dim)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(r),)).reshape(-1, 1)
        return forward(self.net, np.hstack([r, t]))[:, 0]


def outcome_mse(pred: ItePredictor, reprs, t, y) -> float:
    r = pred.predict(reprs, t) - np.asarray(y, dtype=np.float64)
    return float(np.mean(r * r))


def fit_outcome_predictor(
    reprs,
    t,
    y,
    epochs: int = 300,
    lr: float = 0.02,
    seed: int = 0,
    hidden: tuple[int, ...] = (16,),
    batch_size: int = 32,
) -> ItePredictor:
    """Least-squares MLP on (repr ++ t) -> y, trained with shuffled minibatch SGD."""
    r = as_matrix(reprs)
    t = np.asarray(t, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if not (len(r) == len(t) == len(y)):
        raise ValueError("reprs, t and y must have the same length")
    if not (np.any(t == 0) and np.any(t == 1)):
        raise ValueError("outcome predictor needs both treatment arms present")
    rng = np.random.default_rng(seed)
    net = mlp_new([r.shape[1] + 1, *hidden, 1], "relu", "identity", seed=int(rng.integers(2**31)))
    inputs = np.hstack([r, t[:, None]])
    targets = y[:, None]
    n = len(inputs)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            out = forward(net, inputs[idx])
            grads = backward(net, (out - targets[idx]) * (2.0 / len(idx)))
            sgd_step(net, grads, lr, "descend")
    return ItePredictor(net)


def estimate_ite(pred: ItePredictor, repr_row) -> np.ndarray | float:
    r = as_matrix(repr_row, pred.repr_dim)
    est = pred.predict(r, 1.0) - pred.predict(r, 0.0)
    return float(est[0]) if np.ndim(repr_row) == 1 else est


def pehe(pred: ItePredictor, ds: SyntheticDataset, phi: MlpNetwork | None) -> float:
    """Root-mean-squared error of estimated vs true ITE over every unit."""
    est = estimate_ite(pred, representation(phi, ds.covariates))
    err = np.atleast_1d(est) - (ds.y1_true - ds.y0_true)
    return float(np.sqrt(np.mean(err * err)))
