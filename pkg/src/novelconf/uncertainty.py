"""MC-dropout network with a logit-variance head.

The network emits ``2C`` outputs per sample: mean logits ``mu`` and log
variances. Predictive probabilities average ``softmax(mu + sigma * eps)`` over
dropout masks and Gaussian logit noise draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calibration
from .metrics import CLIP_HIGH, CLIP_LOW
from .mlp import MlpConfig, MlpModel, TrainConfig, clipped_nll, fit, init
from .predictions import ProbabilitySet, softmax


@dataclass(frozen=True)
class BayesConfig:
    dropout_rate: float = 0.2
    mc_dropout_samples: int = 20
    logit_noise_samples: int = 10
    # where a calibration temperature divides: "mu" (mean logits before noise)
    # or "sample" (each noisy logit draw)
    temperature_target: str = "mu"

    def __post_init__(self):
        if self.mc_dropout_samples < 1 or self.logit_noise_samples < 1:
            raise ValueError("sample counts must be >= 1")
        if self.temperature_target not in ("mu", "sample"):
            raise ValueError("temperature_target must be 'mu' or 'sample'")


def bayes_model_config(input_dim: int, hidden_widths, class_count: int, bayes: BayesConfig,
                       use_batchnorm: bool = True) -> MlpConfig:
    """Aleatoric head, dropout only on the input of the output layer."""
    return MlpConfig(input_dim, tuple(hidden_widths), class_count, dropout_rate=bayes.dropout_rate,
                     use_batchnorm=use_batchnorm, aleatoric_head=True, dropout_layers="last")


def split_head(out: np.ndarray, class_count: int) -> tuple[np.ndarray, np.ndarray]:
    return out[:, :class_count], out[:, class_count:]


def bayes_forward(model: MlpModel, batch, training: bool = False, rng=None, dropout: bool | None = None):
    """Return ``(mu, log_variance, cache)``."""
    if not model.config.aleatoric_head:
        raise ValueError("model has no logit-variance head")
    out, cache = model.forward(batch, training=training, rng=rng, dropout=dropout)
    mu, logvar = split_head(out, model.config.class_count)
    return mu, logvar, cache


def draw_noise(rng: np.random.Generator, samples: int, shape) -> np.ndarray:
    return rng.standard_normal((samples, *shape))


def bayes_loss_and_grad(mu, logvar, labels, eps) -> tuple[float, np.ndarray, np.ndarray]:
    """Clipped NLL of the noise-averaged true-label probability, with gradients.

    ``eps`` has shape ``(S, N, C)``. Rows whose averaged probability falls
    outside the clip range contribute no gradient.
    """
    mu = np.asarray(mu, dtype=np.float64)
    n, c = mu.shape
    s = len(eps)
    sigma = np.exp(0.5 * logvar)
    p = softmax(mu[None] + sigma[None] * eps)
    rows = np.arange(n)
    p_true = p[:, rows, labels]
    avg = p_true.mean(axis=0)
    loss = float(-np.mean(np.log(np.clip(avg, CLIP_LOW, CLIP_HIGH))))
    active = (avg > CLIP_LOW) & (avg < CLIP_HIGH)
    g_avg = np.where(active, -1.0 / (n * avg), 0.0)
    onehot = np.zeros((n, c))
    onehot[rows, labels] = 1.0
    dz = (g_avg / s)[None, :, None] * p_true[..., None] * (onehot[None] - p)
    d_mu = dz.sum(axis=0)
    d_logvar = (dz * eps).sum(axis=0) * 0.5 * sigma
    return loss, d_mu, d_logvar


def bayes_loss(mu, logvar, labels, samples: int, seed) -> float:
    rng = np.random.default_rng(seed)
    eps = draw_noise(rng, samples, np.shape(mu))
    return bayes_loss_and_grad(mu, logvar, np.asarray(labels, dtype=np.int64), eps)[0]


def train_bayesian(model: MlpModel, x, y, x_val, y_val, config: TrainConfig,
                   bayes: BayesConfig = BayesConfig()):
    """Train with the sampled loss; plateau detection uses clipped NLL of ``mu``."""
    if not model.config.aleatoric_head:
        raise ValueError("model has no logit-variance head")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    C = model.config.class_count
    noise_rng = np.random.default_rng([config.seed, 7])

    def loss_fn(out, rows):
        mu, logvar = split_head(out, C)
        eps = draw_noise(noise_rng, bayes.logit_noise_samples, mu.shape)
        loss, d_mu, d_logvar = bayes_loss_and_grad(mu, logvar, y[rows], eps)
        return loss, np.concatenate([d_mu, d_logvar], axis=1)

    return fit(model, x, loss_fn, lambda m: clipped_nll(m.logits(x_val), y_val), config)


@dataclass
class BayesSamples:
    mu: np.ndarray       # (S_d, N, C)
    sigma: np.ndarray    # (S_d, N, C)
    eps: np.ndarray      # (S_d, S_n, N, C)

    def probabilities(self, temperature: float = 1.0, target: str = "mu") -> np.ndarray:
        if target == "mu":
            z = self.mu[:, None] / temperature + self.sigma[:, None] * self.eps
        else:
            z = (self.mu[:, None] + self.sigma[:, None] * self.eps) / temperature
        return softmax(z).mean(axis=(0, 1))


def bayes_samples(model: MlpModel, inputs, config: BayesConfig, seed) -> BayesSamples:
    """Draw S_d dropout masks (batchnorm in eval mode) and S_n noise vectors per mask."""
    rng = np.random.default_rng(seed)
    inputs = np.asarray(inputs, dtype=np.float64)
    mus, sigmas = [], []
    for _ in range(config.mc_dropout_samples):
        mu, logvar, _ = bayes_forward(model, inputs, training=False, rng=rng, dropout=True)
        mus.append(mu)
        sigmas.append(np.exp(0.5 * logvar))
    mu = np.stack(mus)
    eps = rng.standard_normal((config.mc_dropout_samples, config.logit_noise_samples, *mu.shape[1:]))
    return BayesSamples(mu, np.stack(sigmas), eps)


def bayes_predict(model: MlpModel, inputs, config: BayesConfig, seed, labels=None, groups=None,
                  ids=None, temperature: float = 1.0) -> ProbabilitySet:
    inputs = np.asarray(inputs, dtype=np.float64)
    n = len(inputs)
    probs = bayes_samples(model, inputs, config, seed).probabilities(temperature, config.temperature_target)
    return ProbabilitySet(
        probs,
        np.zeros(n, dtype=np.int64) if labels is None else labels,
        ["familiar_test"] * n if groups is None else groups,
        [str(i) for i in range(n)] if ids is None else ids,
    )


def fit_bayes_temperature(samples: BayesSamples, labels, target: str = "mu") -> calibration.FixedTemperature:
    """Temperature minimizing validation NLL with the sampling draws held fixed."""
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(len(labels))

    def objective(t):
        p = samples.probabilities(t, target)[rows, labels]
        return float(-np.mean(np.log(np.clip(p, CLIP_LOW, CLIP_HIGH))))

    return calibration.FixedTemperature(calibration.minimize_temperature(objective))


def new_bayes_model(input_dim: int, hidden_widths, class_count: int, seed: int,
                    bayes: BayesConfig = BayesConfig(), use_batchnorm: bool = True) -> MlpModel:
    return init(bayes_model_config(input_dim, hidden_widths, class_count, bayes, use_batchnorm), seed)
