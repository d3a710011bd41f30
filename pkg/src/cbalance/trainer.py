"""Minibatch SGD training of the conditional adversarial representation game.

Each outer iteration runs ``n_disc_steps`` discriminator ascent steps and then
one generator descent step.  Within a step, the same noise rows condition the
real and fake discriminator evaluations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .data import SyntheticDataset, sample_minibatch, sample_noise
from .game import (
    discriminator_input,
    evaluate_game,
    gen_loss,
    gen_loss_grad,
    generate,
    generator_input,
    representation,
)
from .metrics import balanced_samples, empirical_jsd
from .nn import (
    EPS,
    CheckpointError,
    MlpNetwork,
    backward,
    clamp_prob,
    forward,
    load_network,
    mlp_new,
    save_network,
    sgd_step,
)

log = logging.getLogger(__name__)

GEN_LOSS_MODES = ("saturating", "non_saturating")
PHI_MODES = ("identity", "fixed_random", "learned")
CHECKPOINT_FILES = ("d.ckpt", "g.ckpt", "phi.ckpt")
IDENTITY_PHI = "identity\n"


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    n_disc_steps: int = 1
    minibatch_s: int = 64
    iterations: int = 2000
    lr_d: float = 0.05
    lr_g: float = 0.05
    noise_dim: int = 4
    repr_dim: int = 0  # 0 means "same as the covariate dimension"
    gen_loss_mode: str = "non_saturating"
    phi_mode: str = "identity"
    conditional: bool = True
    seed: int = 0
    d_hidden: tuple[int, ...] = (32,)
    g_hidden: tuple[int, ...] = (32,)
    phi_hidden: tuple[int, ...] = (16,)
    hidden_activation: str = "tanh"
    eval_samples: int = 512
    jsd_every: int = 0
    jsd_bins: int = 10
    pred_epochs: int = 200
    pred_lr: float = 0.02

    def resolved(self, d: int) -> "TrainConfig":
        cfg = TrainConfig(**asdict(self))
        if cfg.repr_dim == 0:
            cfg.repr_dim = d
        cfg.validate(d)
        return cfg

    def validate(self, d: int | None = None) -> None:
        for name in ("n_disc_steps", "minibatch_s", "noise_dim", "eval_samples", "jsd_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("iterations", "jsd_every", "pred_epochs", "repr_dim"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.lr_d <= 0 or self.lr_g <= 0 or self.pred_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.gen_loss_mode not in GEN_LOSS_MODES:
            raise ValueError(f"gen_loss_mode must be one of {GEN_LOSS_MODES}")
        if self.phi_mode not in PHI_MODES:
            raise ValueError(f"phi_mode must be one of {PHI_MODES}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise ValueError("hidden_activation must be relu or tanh")
        if any(h < 1 for h in (*self.d_hidden, *self.g_hidden, *self.phi_hidden)):
            raise ValueError("hidden layer widths must be positive")
        if d is not None and self.phi_mode == "identity" and self.repr_dim not in (0, d):
            raise ValueError(f"identity phi needs repr_dim == d ({d}), got {self.repr_dim}")

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}


@dataclass
class Players:
    d: MlpNetwork
    g: MlpNetwork
    phi: MlpNetwork | None  # None is the identity representation

    def copy(self) -> "Players":
        return Players(self.d.copy(), self.g.copy(), None if self.phi is None else self.phi.copy())


def init_players(cfg: TrainConfig, d: int) -> Players:
    """Fresh networks for a resolved config; seeds derive from ``cfg.seed``."""
    s_d, s_g, s_phi = (int(x) for x in np.random.SeedSequence([cfg.seed, 0]).generate_state(3))
    act = cfg.hidden_activation
    rdim = cfg.repr_dim
    d_in = rdim + cfg.noise_dim if cfg.conditional else rdim
    g_in = d + cfg.noise_dim if cfg.conditional else cfg.noise_dim
    disc = mlp_new([d_in, *cfg.d_hidden, 1], act, "sigmoid", seed=s_d)
    gen = mlp_new([g_in, *cfg.g_hidden, rdim], act, "identity", seed=s_g)
    phi = None
    if cfg.phi_mode != "identity":
        phi = mlp_new([d, *cfg.phi_hidden, rdim], act, "identity", seed=s_phi)
    return Players(disc, gen, phi)


@dataclass
class StepStats:
    loss: float
    d_real: np.ndarray | None = None
    d_fake: np.ndarray | None = None


def disc_step(players: Players, con, treat, noise, lr: float, conditional: bool = True) -> StepStats:
    """One ascent step on (1/s) sum [log D(Phi(t)|w) + log(1 - D(G(Con|w)|w))]."""
    s = len(con)
    reprs = representation(players.phi, treat)
    fake = generate(players.g, con, noise, conditional)
    both = np.vstack([discriminator_input(reprs, noise, conditional), discriminator_input(fake, noise, conditional)])
    out = forward(players.d, both)
    d_real, d_fake = out[:s], out[s:]
    p = clamp_prob(out)
    live = (out >= EPS) & (out <= 1.0 - EPS)
    # gradient of the criterion (not the loss) w.r.t. D's output
    up = np.empty_like(out)
    up[:s] = 1.0 / (s * p[:s])
    up[s:] = -1.0 / (s * (1.0 - p[s:]))
    grads = backward(players.d, np.where(live, up, 0.0))
    loss = -float(np.mean(np.log(p[:s])) + np.mean(np.log1p(-p[s:])))
    sgd_step(players.d, grads, lr, "ascend")
    return StepStats(loss, d_real, d_fake)


def gen_step(
    players: Players,
    con,
    noise,
    lr: float,
    mode: str = "non_saturating",
    conditional: bool = True,
    treat=None,
    lr_phi: float | None = None,
) -> StepStats:
    """One descent step for G with D frozen; optionally also for a learned Phi.

    Phi descends (1/s) sum log D(Phi(t)|w), i.e. it works against the real term
    that D is ascending.
    """
    g = players.g
    rdim = g.output_dim
    fake = forward(g, generator_input(np.asarray(con, dtype=np.float64), noise, conditional))
    d_fake = forward(players.d, discriminator_input(fake, noise, conditional))
    loss = gen_loss(d_fake, mode)
    d_grads = backward(players.d, gen_loss_grad(d_fake, mode))
    # D's own parameter grads are dropped; only d/d(input) flows back into G
    g_grads = backward(g, d_grads.inputs[:, :rdim])

    phi_grads = None
    if players.phi is not None and treat is not None:
        reprs = forward(players.phi, treat)
        d_real = forward(players.d, discriminator_input(reprs, noise, conditional))
        s = len(d_real)
        p = clamp_prob(d_real)
        live = (d_real >= EPS) & (d_real <= 1.0 - EPS)
        dr_grads = backward(players.d, np.where(live, 1.0 / (s * p), 0.0))
        phi_grads = backward(players.phi, dr_grads.inputs[:, :rdim])

    sgd_step(g, g_grads, lr, "descend")
    if phi_grads is not None:
        sgd_step(players.phi, phi_grads, lr if lr_phi is None else lr_phi, "descend")
    return StepStats(loss, None, d_fake)


@dataclass
class RunLog:
    records: list[dict] = field(default_factory=list)

    KEYS = ("iter", "disc_loss", "gen_loss", "value_fn", "mean_d_real", "mean_d_fake", "emp_jsd")

    def append(self, **rec) -> None:
        self.records.append({k: rec.get(k) for k in self.KEYS})

    def __len__(self) -> int:
        return len(self.records)

    def column(self, key: str) -> np.ndarray:
        return np.array([np.nan if r[key] is None else r[key] for r in self.records], dtype=np.float64)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8", newline="\n")

    @classmethod
    def read(cls, path) -> "RunLog":
        text = Path(path).read_text(encoding="utf-8")
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


@dataclass
class TrainResult:
    players: Players
    runlog: RunLog
    disc_updates: int = 0
    gen_updates: int = 0


NoiseFn = Callable[[int, int, np.random.Generator], np.ndarray]


def train(
    config: TrainConfig,
    ds: SyntheticDataset,
    players: Players | None = None,
    start_iteration: int = 0,
    noise_fn: NoiseFn = sample_noise,
) -> TrainResult:
    """Run the alternating N-discriminator / 1-generator schedule.

    Passing ``players`` and ``start_iteration`` resumes a run; the sampling
    streams are keyed on (seed, start_iteration) so resumed runs stay
    deterministic.  ``noise_fn`` replaces the noise sampler (test hook).
    """
    cfg = config.resolved(ds.dim)
    if players is None:
        players = init_players(cfg, ds.dim)
    rng = np.random.default_rng([cfg.seed, 1, start_iteration])
    eval_rng = np.random.default_rng([cfg.seed, 2, start_iteration])
    treat_pool, con_pool = ds.treat_pool, ds.control_pool
    s, nd, cond = cfg.minibatch_s, cfg.noise_dim, cfg.conditional
    runlog = RunLog()
    n_disc = n_gen = 0

    for it in range(start_iteration, start_iteration + cfg.iterations):
        for _ in range(cfg.n_disc_steps):
            con = sample_minibatch(con_pool, s, rng)
            treat = sample_minibatch(treat_pool, s, rng)
            w = noise_fn(s, nd, rng)
            dstats = disc_step(players, con, treat, w, cfg.lr_d, cond)
            n_disc += 1
        con = sample_minibatch(con_pool, s, rng)
        w = noise_fn(s, nd, rng)
        treat = sample_minibatch(treat_pool, s, rng) if cfg.phi_mode == "learned" else None
        gstats = gen_step(players, con, w, cfg.lr_g, cfg.gen_loss_mode, cond, treat)
        n_gen += 1

        value, mean_real, mean_fake = evaluate_game(
            players.d, players.g, players.phi, treat_pool, con_pool, nd, cfg.eval_samples, eval_rng, cond
        )
        emp = None
        if cfg.jsd_every and (it + 1) % cfg.jsd_every == 0:
            reprs, fake = balanced_samples(players.g, players.phi, ds, nd, eval_rng, cond)
            emp = empirical_jsd(reprs, fake, cfg.jsd_bins)
        rec = dict(
            iter=it,
            disc_loss=dstats.loss,
            gen_loss=gstats.loss,
            value_fn=value,
            mean_d_real=mean_real,
            mean_d_fake=mean_fake,
            emp_jsd=emp,
        )
        for key, val in rec.items():
            if key != "iter" and val is not None and not math.isfinite(val):
                raise TrainingDiverged(it, key)
        runlog.append(**rec)
        if (it + 1) % 500 == 0:
            log.debug("iter %d value_fn %.4f D(real) %.3f D(fake) %.3f", it, value, mean_real, mean_fake)

    return TrainResult(players, runlog, n_disc, n_gen)


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(players: Players, run_dir) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_network(players.d, run_dir / "d.ckpt")
    save_network(players.g, run_dir / "g.ckpt")
    if players.phi is None:
        (run_dir / "phi.ckpt").write_text(IDENTITY_PHI, encoding="utf-8", newline="\n")
    else:
        save_network(players.phi, run_dir / "phi.ckpt")


def load_checkpoint(run_dir) -> Players:
    run_dir = Path(run_dir)
    for name in CHECKPOINT_FILES:
        if not (run_dir / name).is_file():
            raise FileNotFoundError(f"missing checkpoint {run_dir / name}")
    phi_path = run_dir / "phi.ckpt"
    phi_text = phi_path.read_text(encoding="utf-8")
    if phi_text.strip() == IDENTITY_PHI.strip():
        phi = None
    else:
        phi = load_network(phi_path)
    d, g = load_network(run_dir / "d.ckpt"), load_network(run_dir / "g.ckpt")
    if d.output_activation != "sigmoid" or d.output_dim != 1:
        raise CheckpointError(f"{run_dir / 'd.ckpt'}: discriminator must have one sigmoid output")
    return Players(d, g, phi)
