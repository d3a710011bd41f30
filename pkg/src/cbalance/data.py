"""Synthetic potential-outcomes data, minibatch/noise samplers, dataset CSV I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

OUTCOME_SPECS = ("linear", "quadratic")
# constant effect offset in the quadratic outcome model
TAU0 = 1.0


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class SyntheticDataset:
    covariates: np.ndarray  # (n, d)
    treatment: np.ndarray  # (n,) int 0/1
    y_factual: np.ndarray
    y0_true: np.ndarray
    y1_true: np.ndarray
    shift: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.covariates = np.asarray(self.covariates, dtype=np.float64)
        self.treatment = np.asarray(self.treatment, dtype=np.int64)
        for name in ("y_factual", "y0_true", "y1_true"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.covariates.shape[0]
        if self.covariates.ndim != 2:
            raise DatasetError("covariates must be a 2-D matrix")
        if any(len(v) != n for v in (self.treatment, self.y_factual, self.y0_true, self.y1_true)):
            raise DatasetError("all dataset columns must have the same length")
        if not np.all(np.isin(self.treatment, (0, 1))):
            raise DatasetError("treatment must be 0/1")
        if not (np.any(self.treatment == 0) and np.any(self.treatment == 1)):
            raise DatasetError("dataset needs at least one treated and one control unit")

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def treat_pool(self) -> np.ndarray:
        return self.covariates[self.treatment == 1]

    @property
    def control_pool(self) -> np.ndarray:
        return self.covariates[self.treatment == 0]

    def factual_consistent(self) -> bool:
        """Exact agreement of y with the selected potential outcome (noise-free data)."""
        chosen = np.where(self.treatment == 1, self.y1_true, self.y0_true)
        return bool(np.array_equal(chosen, self.y_factual))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyntheticDataset):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("covariates", "treatment", "y_factual", "y0_true", "y1_true")
        )


def potential_outcomes(x: np.ndarray, outcome_spec: str) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free (Y0, Y1) for each covariate row."""
    x1 = x[:, 0]
    if outcome_spec == "linear":
        return x1.copy(), 2.0 * x1
    if outcome_spec == "quadratic":
        y0 = x1 * x1
        return y0, y0 + TAU0 + x[:, 1]
    raise ConfigError(f"unknown outcome spec {outcome_spec!r}")


def gen_synthetic(
    n_treat: int,
    n_con: int,
    d: int,
    shift: float = 0.0,
    outcome_spec: str = "linear",
    noise_sd: float = 0.0,
    seed: int = 0,
) -> SyntheticDataset:
    """Control rows ~ N(0, I), treated rows ~ N(shift * 1, I); controls come first.

    Observation noise lands on ``y_factual`` only; ``y0_true``/``y1_true`` stay
    noise-free.  Covariates and noise use separate child streams of ``seed`` so
    changing ``noise_sd`` never moves the covariates or the true effects.
    """
    if n_treat < 2 or n_con < 2:
        raise ConfigError("n_treat and n_con must both be at least 2")
    if d < 1:
        raise ConfigError("d must be at least 1")
    if noise_sd < 0:
        raise ConfigError("noise_sd must be nonnegative")
    if outcome_spec not in OUTCOME_SPECS:
        raise ConfigError(f"outcome spec must be one of {OUTCOME_SPECS}")
    if outcome_spec == "quadratic" and d < 2:
        raise ConfigError("quadratic outcome spec needs d >= 2")
    cov_ss, obs_ss = np.random.SeedSequence(seed).spawn(2)
    cov_rng = np.random.default_rng(cov_ss)
    x_con = cov_rng.standard_normal((n_con, d))
    x_treat = cov_rng.standard_normal((n_treat, d)) + shift
    x = np.vstack([x_con, x_treat])
    t = np.concatenate([np.zeros(n_con, dtype=np.int64), np.ones(n_treat, dtype=np.int64)])
    y0, y1 = potential_outcomes(x, outcome_spec)
    y = np.where(t == 1, y1, y0)
    if noise_sd > 0:
        y = y + np.random.default_rng(obs_ss).normal(0.0, noise_sd, size=len(y))
    return SyntheticDataset(x, t, y, y0, y1, float(shift), int(seed))


def true_ite(ds: SyntheticDataset, i: int) -> float:
    if not 0 <= i < ds.n:
        raise IndexError(f"row {i} out of range for dataset of {ds.n} rows")
    return float(ds.y1_true[i] - ds.y0_true[i])


def sample_minibatch(pool: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``s`` rows uniformly with replacement."""
    if len(pool) == 0:
        raise ValueError("cannot sample from an empty pool")
    if s < 1:
        raise ValueError("minibatch size must be at least 1")
    return pool[rng.integers(0, len(pool), size=s)]


def sample_noise(s: int, noise_dim: int, rng: np.random.Generator) -> np.ndarray:
    if s < 1 or noise_dim < 1:
        raise ValueError("noise batch needs s >= 1 and noise_dim >= 1")
    return rng.standard_normal((s, noise_dim))


# --- CSV ----------------------------------------------------------------------


def _header(d: int) -> list[str]:
    return [f"x{j + 1}" for j in range(d)] + ["t", "y", "y0_true", "y1_true"]


def dataset_to_csv(ds: SyntheticDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_header(ds.dim))
    for i in range(ds.n):
        row = [f"{v:.17g}" for v in ds.covariates[i]]
        row.append(str(int(ds.treatment[i])))
        row.extend(f"{v:.17g}" for v in (ds.y_factual[i], ds.y0_true[i], ds.y1_true[i]))
        w.writerow(row)
    return buf.getvalue()


def save_dataset(ds: SyntheticDataset, path) -> None:
    Path(path).write_text(dataset_to_csv(ds), encoding="utf-8", newline="\n")


def parse_dataset(text: str, source: str = "<string>") -> SyntheticDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DatasetError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    for col in ("t", "y", "y0_true", "y1_true"):
        if col not in header:
            raise DatasetError(f"{source}:1: missing column {col!r}")
    xcols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    d = len(xcols)
    if d == 0:
        raise DatasetError(f"{source}:1: no covariate columns x1..xd")
    if header != _header(d):
        raise DatasetError(f"{source}:1: header must be {','.join(_header(d))}")
    values = []
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 4:
            raise DatasetError(f"{source}:{k}: expected {d + 4} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row])
        except ValueError:
            raise DatasetError(f"{source}:{k}: non-numeric field") from None
    if not values:
        raise DatasetError(f"{source}: no data rows")
    data = np.array(values)
    t = data[:, d]
    if not np.all(np.isin(t, (0.0, 1.0))):
        raise DatasetError(f"{source}: column 't' must be 0 or 1")
    if not np.all(np.isfinite(data)):
        raise DatasetError(f"{source}: non-finite value")
    try:
        ds = SyntheticDataset(data[:, :d], t.astype(np.int64), data[:, d + 1], data[:, d + 2], data[:, d + 3])
    except DatasetError as exc:
        raise DatasetError(f"{source}: {exc}") from None
    return ds


def load_dataset(path) -> SyntheticDataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"), str(path))
