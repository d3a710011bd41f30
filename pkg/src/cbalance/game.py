"""The conditional adversarial game: losses, network wiring, value estimates.

D scores representations of treated units, G maps control units (plus
noise) into the same representation space.  In conditional mode the noise
row w is concatenated onto the inputs of both D and G; in unconditional mode
G sees only noise and D only the representation, which is the plain GAN game.
"""

from __future__ import annotations

import math

import numpy as np

from .data import sample_minibatch, sample_noise
from .nn import EPS, MlpNetwork, ShapeError, as_matrix, clamp_prob, forward

LOG4 = math.log(4.0)


def representation(phi: MlpNetwork | None, treat_batch) -> np.ndarray:
    """Phi(t); ``phi=None`` is the identity map."""
    x = as_matrix(treat_batch)
    if phi is None:
        return x
    if x.shape[1] != phi.input_dim:
        raise ShapeError(f"representation expects {phi.input_dim} columns, got {x.shape[1]}")
    return forward(phi, x)


def generator_input(con_batch: np.ndarray, noise: np.ndarray, conditional: bool = True) -> np.ndarray:
    return np.hstack([con_batch, noise]) if conditional else noise


def discriminator_input(reprs: np.ndarray, noise: np.ndarray, conditional: bool = True) -> np.ndarray:
    return np.hstack([reprs, noise]) if conditional else reprs


def generate(g: MlpNetwork, con_batch, noise, conditional: bool = True) -> np.ndarray:
    return forward(g, generator_input(np.asarray(con_batch, dtype=np.float64), noise, conditional))


def disc_loss(d_real, d_fake) -> float:
    """-(1/s) sum [log D(real) + log(1 - D(fake))]; descending it ascends the criterion."""
    d_real = clamp_prob(np.asarray(d_real, dtype=np.float64))
    d_fake = clamp_prob(np.asarray(d_fake, dtype=np.float64))
    if d_real.shape[0] != d_fake.shape[0]:
        raise ShapeError("real and fake batches must have the same number of rows")
    return -float(np.mean(np.log(d_real)) + np.mean(np.log1p(-d_fake)))


def gen_loss(d_fake, mode: str = "non_saturating") -> float:
    d_fake = clamp_prob(np.asarray(d_fake, dtype=np.float64))
    if mode == "saturating":
        return float(np.mean(np.log1p(-d_fake)))
    if mode == "non_saturating":
        return -float(np.mean(np.log(d_fake)))
    raise ValueError(f"unknown generator loss mode {mode!r}")


def gen_loss_grad(d_fake: np.ndarray, mode: str) -> np.ndarray:
    """d gen_loss / d d_fake, zero where the clamp is active."""
    s = d_fake.shape[0]
    p = clamp_prob(d_fake)
    live = (d_fake >= EPS) & (d_fake <= 1.0 - EPS)
    if mode == "saturating":
        g = -1.0 / (s * (1.0 - p))
    elif mode == "non_saturating":
        g = -1.0 / (s * p)
    else:
        raise ValueError(f"unknown generator loss mode {mode!r}")
    return np.where(live, g, 0.0)


def evaluate_game(d, g, phi, treat_pool, con_pool, noise_dim, n_samples, rng, conditional=True):
    """Monte-Carlo (F-hat, mean D on real, mean D on fake) with fresh draws per term."""
    treat = sample_minibatch(treat_pool, n_samples, rng)
    w_real = sample_noise(n_samples, noise_dim, rng)
    d_real = forward(d, discriminator_input(representation(phi, treat), w_real, conditional))
    con = sample_minibatch(con_pool, n_samples, rng)
    w_fake = sample_noise(n_samples, noise_dim, rng)
    fake = generate(g, con, w_fake, conditional)
    d_fake = forward(d, discriminator_input(fake, w_fake, conditional))
    value = -disc_loss(d_real, d_fake)
    return value, float(np.mean(d_real)), float(np.mean(d_fake))


def value_function(d, g, phi, treat_pool, con_pool, noise_dim, n_samples, rng, conditional=True) -> float:
    """Estimate E[log D(Phi(t)|w)] + E[log(1 - D(G(Con|w)))]."""
    return evaluate_game(d, g, phi, treat_pool, con_pool, noise_dim, n_samples, rng, conditional)[0]
