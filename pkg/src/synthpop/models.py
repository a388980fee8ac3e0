"""The four synthesizers: VAE, WGAN (with a standard-GAN loss variant),
marginal sampler, and uniform sampler.

Real rows are one-hot. During adversarial training the generator's block
softmax is relaxed so critic gradients can reach it: Gumbel-softmax
samples at a low temperature by default, with a straight-through variant
("gumbel_st": hard one-hot fakes, gradients through the soft sample) and a
plain-softmax ablation. Warm soft relaxations let the critic separate real
from fake by output softness alone and collapse the generated support on
long runs, which is why the default temperature is low. Generation always
draws each block categorically from the softmax probabilities.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import nn_core
from .data import (
    CodedTable,
    Schema,
    one_hot_encode,
    schema_from_dict,
    schema_hash,
    schema_to_dict,
)
from .errors import DivergenceError, DomainError
from .evaluation import empirical_joint, srmse
from .nn_core import AdamState, Mlp, adam_step, backward, clip_weights, forward, init_adam
from .sampling import categorical_rows, derive_seed

GUMBEL_EPS = 1e-20
PROB_CLAMP = 1e-12


@dataclass
class TrainConfig:
    """Hyper-parameters for all networks; defaults are conventions, exposed
    precisely because no principled values exist for this task."""

    epochs: int = 200
    batch_size: int = 256
    latent_dim: int = 16
    hidden_vae: tuple[int, ...] = (64, 64)
    hidden_generator: tuple[int, ...] = (64, 64)
    hidden_critic: tuple[int, ...] = (64, 64)
    lr_vae: float = 1e-3
    lr_generator: float = 5e-5
    lr_critic: float = 5e-5
    clip_c: float = 0.01
    n_critic: int = 5
    gumbel_temperature: float = 0.25
    kl_weight: float = 1.0
    relaxation: str = "gumbel"  # or "gumbel_st" (straight-through) / "softmax"
    gan_variant: str = "wgan"  # or "standard"
    seed: int = 0

    def __post_init__(self) -> None:
        self.hidden_vae = tuple(self.hidden_vae)
        self.hidden_generator = tuple(self.hidden_generator)
        self.hidden_critic = tuple(self.hidden_critic)
        for name in ("epochs", "batch_size", "latent_dim", "n_critic"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("lr_vae", "lr_generator", "lr_critic", "clip_c", "gumbel_temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be nonnegative")
        if self.relaxation not in ("gumbel_st", "gumbel", "softmax"):
            raise ValueError(f"unknown relaxation {self.relaxation!r}")
        if self.gan_variant not in ("wgan", "standard"):
            raise ValueError(f"unknown gan variant {self.gan_variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


@dataclass
class VaeModel:
    schema: Schema
    encoder: Mlp  # one-hot width -> 2 * latent_dim, linear
    decoder: Mlp  # latent_dim -> one-hot width, softmax blocks
    latent_dim: int
    kl_weight: float = 1.0


@dataclass
class WganModel:
    schema: Schema
    generator: Mlp  # latent_dim -> one-hot width, softmax blocks
    critic: Mlp  # one-hot width -> 1, linear
    latent_dim: int
    clip_c: float
    n_critic: int


@dataclass
class MarginalModel:
    """Per-variable empirical category frequencies; samples independently."""

    schema: Schema
    frequencies: list[np.ndarray]


@dataclass
class UniformModel:
    """Draws every variable uniformly over its categories."""

    schema: Schema


def new_vae(schema: Schema, config: TrainConfig, rng: np.random.Generator) -> VaeModel:
    width = schema.one_hot_width
    blocks = schema.cardinalities
    encoder = nn_core.build_mlp(
        [width, *config.hidden_vae, 2 * config.latent_dim], "relu", "linear", rng
    )
    decoder = nn_core.build_mlp(
        [config.latent_dim, *config.hidden_vae, width],
        "relu",
        "softmax_blocks",
        rng,
        output_blocks=blocks,
    )
    return VaeModel(schema, encoder, decoder, config.latent_dim, config.kl_weight)


def new_wgan(schema: Schema, config: TrainConfig, rng: np.random.Generator) -> WganModel:
    width = schema.one_hot_width
    generator = nn_core.build_mlp(
        [config.latent_dim, *config.hidden_generator, width],
        "relu",
        "softmax_blocks",
        rng,
        output_blocks=schema.cardinalities,
    )
    critic = nn_core.build_mlp([width, *config.hidden_critic, 1], "relu", "linear", rng)
    return WganModel(schema, generator, critic, config.latent_dim, config.clip_c, config.n_critic)


# --- losses -----------------------------------------------------------------


def gaussian_kl(mu: np.ndarray, log_var: np.ndarray) -> float:
    """Batch-mean KL(N(mu, sigma^2) || N(0, I)), summed over dimensions."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    log_var = np.atleast_2d(np.asarray(log_var, dtype=np.float64))
    per_dim = 0.5 * (mu * mu + np.exp(log_var) - 1.0 - log_var)
    return float(per_dim.sum()) / mu.shape[0]


def gan_losses(d_real, d_fake) -> tuple[float, float]:
    """Standard-GAN losses from discriminator probabilities.

    L_D = -[ln d_real + ln(1 - d_fake)], L_G = ln(1 - d_fake), batch means.
    """
    dr = np.atleast_1d(np.asarray(d_real, dtype=np.float64))
    df = np.atleast_1d(np.asarray(d_fake, dtype=np.float64))
    if np.any(dr < 0.0) or np.any(dr > 1.0) or np.any(df < 0.0) or np.any(df > 1.0):
        raise DomainError("discriminator outputs must be probabilities in [0, 1]")
    dr = np.clip(dr, PROB_CLAMP, 1.0 - PROB_CLAMP)
    df = np.clip(df, PROB_CLAMP, 1.0 - PROB_CLAMP)
    l_d = -float(np.mean(np.log(dr)) + np.mean(np.log(1.0 - df)))
    l_g = float(np.mean(np.log(1.0 - df)))
    return l_d, l_g


def wgan_losses(d_real, d_fake) -> tuple[float, float]:
    """Critic and generator losses from raw critic scores.

    L_D = -[d_real + (1 - d_fake)], L_G = 1 - d_fake, batch means. The
    constant offsets vanish under differentiation, so L_D trains the critic
    exactly like the canonical objective -(d_real - d_fake).
    """
    dr = float(np.mean(np.asarray(d_real, dtype=np.float64)))
    df = float(np.mean(np.asarray(d_fake, dtype=np.float64)))
    return -(dr + (1.0 - df)), 1.0 - df


# --- VAE --------------------------------------------------------------------


@dataclass
class VaeLossResult:
    loss: float
    recon: float
    kl: float
    encoder_grads: list[tuple[np.ndarray, np.ndarray]]
    decoder_grads: list[tuple[np.ndarray, np.ndarray]]


def vae_loss(model: VaeModel, batch: np.ndarray, eps: np.ndarray) -> VaeLossResult:
    """Reconstruction + weighted KL with gradients through mu + sigma * eps."""
    n, latent = batch.shape[0], model.latent_dim
    if eps.shape != (n, latent):
        raise DivergenceError(f"noise shape {eps.shape} != ({n}, {latent})")
    enc_acts = forward(model.encoder, batch)
    mu = enc_acts[-1][:, :latent]
    log_var = enc_acts[-1][:, latent:]
    sigma = np.exp(0.5 * log_var)
    z = mu + sigma * eps
    dec_acts = forward(model.decoder, z)
    blocks = model.schema.cardinalities
    recon, d_logits = nn_core.cross_entropy_blocks(dec_acts[-1], batch, blocks)
    kl = gaussian_kl(mu, log_var)
    loss = recon + model.kl_weight * kl
    if not math.isfinite(loss):
        raise DivergenceError(f"VAE loss diverged: recon={recon}, kl={kl}")

    decoder_grads, dz = backward(model.decoder, dec_acts, d_logits, from_logits=True)
    w = model.kl_weight / n
    d_mu = dz + w * mu
    d_log_var = dz * (0.5 * sigma * eps) + w * 0.5 * (sigma * sigma - 1.0)
    encoder_grads, _ = backward(
        model.encoder, enc_acts, np.concatenate([d_mu, d_log_var], axis=1)
    )
    return VaeLossResult(loss, recon, kl, encoder_grads, decoder_grads)


@dataclass
class VaeEpochStats:
    epoch: int
    loss: float
    recon: float
    kl: float


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    if n <= batch_size:
        yield perm
        return
    for lo in range(0, n, batch_size):
        chunk = perm[lo : lo + batch_size]
        if chunk.size:
            yield chunk


def fit_vae(train: CodedTable, config: TrainConfig) -> tuple[VaeModel, list[VaeEpochStats]]:
    init_rng = np.random.default_rng(derive_seed(config.seed, "vae", "init"))
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, "vae", "shuffle"))
    eps_rng = np.random.default_rng(derive_seed(config.seed, "vae", "eps"))
    model = new_vae(train.schema, config, init_rng)
    enc_state = init_adam(model.encoder, config.lr_vae)
    dec_state = init_adam(model.decoder, config.lr_vae)
    rows = one_hot_encode(train).matrix
    n = rows.shape[0]
    log: list[VaeEpochStats] = []
    for epoch in range(1, config.epochs + 1):
        tot = rec = kl = 0.0
        for batch_idx in _batches(n, config.batch_size, shuffle_rng):
            batch = rows[batch_idx]
            eps = eps_rng.standard_normal((batch.shape[0], config.latent_dim))
            result = vae_loss(model, batch, eps)
            model.encoder, enc_state = adam_step(model.encoder, result.encoder_grads, enc_state)
            model.decoder, dec_state = adam_step(model.decoder, result.decoder_grads, dec_state)
            w = batch.shape[0]
            tot += result.loss * w
            rec += result.recon * w
            kl += result.kl * w
        log.append(VaeEpochStats(epoch, tot / n, rec / n, kl / n))
    return model, log


def vae_sample(model: VaeModel, n: int, seed: int) -> CodedTable:
    """Draw z from the prior, decode, then draw each block categorically."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent_dim))
    probs = forward(model.decoder, z)[-1]
    return _draw_blocks(model.schema, probs, rng)


def _draw_blocks(schema: Schema, probs: np.ndarray, rng: np.random.Generator) -> CodedTable:
    n = probs.shape[0]
    codes = np.empty((n, len(schema.variables)), dtype=np.int64)
    for j, (off, card) in enumerate(zip(schema.offsets, schema.cardinalities)):
        codes[:, j] = categorical_rows(probs[:, off : off + card], rng.random(n))
    return CodedTable(schema, codes)


# --- WGAN -------------------------------------------------------------------


@dataclass
class WganStepLosses:
    critic_loss: float
    generator_loss: float
    d_real: float
    d_fake: float


def _hard_blocks(probs: np.ndarray, blocks: tuple[int, ...]) -> np.ndarray:
    """One-hot argmax of every block."""
    hard = np.zeros_like(probs)
    rows = np.arange(probs.shape[0])
    lo = 0
    for b in blocks:
        hard[rows, lo + np.argmax(probs[:, lo : lo + b], axis=1)] = 1.0
        lo += b
    return hard


def _relaxed_fake(
    generator: Mlp,
    z: np.ndarray,
    blocks: tuple[int, ...],
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], np.ndarray, np.ndarray, float]:
    """Generator forward plus the differentiable relaxation of its output.

    Returns (activations, fake rows for the critic, probabilities for the
    backward pass, scale): pulling a gradient dY back to the generator's
    output logits is softmax_vjp(probs, dY) * scale. The straight-through
    variant shows the critic hard one-hot rows (so it cannot separate real
    from fake by output softness alone) while gradients flow through the
    soft Gumbel-softmax sample.
    """
    acts = forward(generator, z)
    if config.relaxation == "softmax":
        return acts, acts[-1], acts[-1], 1.0
    last = generator.layers[-1]
    logits = acts[-2] @ last.weights.T + last.bias
    u = rng.random(logits.shape)
    noise = -np.log(-np.log(u + GUMBEL_EPS) + GUMBEL_EPS)
    tau = config.gumbel_temperature
    soft = nn_core.softmax_blocks((logits + noise) / tau, blocks)
    if config.relaxation == "gumbel":
        return acts, soft, soft, 1.0 / tau
    return acts, _hard_blocks(soft, blocks), soft, 1.0 / tau


def _critic_score_grads(scores: np.ndarray, is_real: bool, variant: str) -> tuple[np.ndarray, np.ndarray]:
    """(values used by the loss, d loss / d score) for one critic pass."""
    n = scores.shape[0]
    if variant == "wgan":
        sign = -1.0 if is_real else 1.0
        return scores, np.full_like(scores, sign / n)
    p = 1.0 / (1.0 + np.exp(-scores))
    if is_real:
        return p, -(1.0 - p) / n
    return p, p / n


def wgan_train_step(
    model: WganModel,
    real_rows: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator,
    critic_state: AdamState,
    generator_state: AdamState,
) -> tuple[WganModel, AdamState, AdamState, WganStepLosses]:
    """n_critic critic updates on one real batch, then one generator update.

    Critic parameters are clipped into [-clip_c, clip_c] after every critic
    update (wgan variant); the generator update never touches the critic.
    """
    n = real_rows.shape[0]
    blocks = model.schema.cardinalities
    variant = config.gan_variant
    critic = model.critic
    generator = model.generator
    critic_loss = d_real_mean = d_fake_mean = 0.0

    for step in range(config.n_critic):
        z = rng.standard_normal((n, model.latent_dim))
        _, fake, _, _ = _relaxed_fake(generator, z, blocks, config, rng)
        # one critic pass over [real; fake]; weight grads sum over rows anyway
        both_acts = forward(critic, np.concatenate([real_rows, fake], axis=0))
        d_real, g_real = _critic_score_grads(both_acts[-1][:n], True, variant)
        d_fake, g_fake = _critic_score_grads(both_acts[-1][n:], False, variant)
        if variant == "wgan":
            critic_loss, _ = wgan_losses(d_real, d_fake)
        else:
            critic_loss, _ = gan_losses(d_real, d_fake)
        if not math.isfinite(critic_loss):
            raise DivergenceError(f"critic update {step + 1}: non-finite loss")
        grads, _ = backward(critic, both_acts, np.concatenate([g_real, g_fake], axis=0))
        critic, critic_state = adam_step(critic, grads, critic_state)
        if variant == "wgan":
            critic = clip_weights(critic, model.clip_c)
        d_real_mean = float(np.mean(d_real))
        d_fake_mean = float(np.mean(d_fake))

    z = rng.standard_normal((n, model.latent_dim))
    gen_acts, fake, soft_probs, scale = _relaxed_fake(generator, z, blocks, config, rng)
    fake_acts = forward(critic, fake)
    d_fake, _ = _critic_score_grads(fake_acts[-1], False, variant)
    if variant == "wgan":
        _, gen_loss = wgan_losses(np.zeros(1), d_fake)
        dscore = np.full_like(fake_acts[-1], -1.0 / n)
    else:
        _, gen_loss = gan_losses(np.full(1, 0.5), d_fake)
        dscore = -d_fake / n
    if not math.isfinite(gen_loss):
        raise DivergenceError("generator update: non-finite loss")
    _, d_fake_rows = backward(critic, fake_acts, dscore)
    d_logits = nn_core.softmax_blocks_vjp(soft_probs, d_fake_rows, blocks) * scale
    gen_grads, _ = backward(generator, gen_acts, d_logits, from_logits=True)
    generator, generator_state = adam_step(generator, gen_grads, generator_state)

    model = WganModel(
        model.schema, generator, critic, model.latent_dim, model.clip_c, model.n_critic
    )
    losses = WganStepLosses(critic_loss, gen_loss, d_real_mean, d_fake_mean)
    return model, critic_state, generator_state, losses


@dataclass
class WganEpochStats:
    epoch: int
    critic_loss: float
    generator_loss: float
    score_gap: float  # mean d_real - mean d_fake of the epoch's last steps


def fit_wgan(train: CodedTable, config: TrainConfig) -> tuple[WganModel, list[WganEpochStats]]:
    init_rng = np.random.default_rng(derive_seed(config.seed, "wgan", "init"))
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, "wgan", "shuffle"))
    train_rng = np.random.default_rng(derive_seed(config.seed, "wgan", "train"))
    model = new_wgan(train.schema, config, init_rng)
    critic_state = init_adam(model.critic, config.lr_critic)
    generator_state = init_adam(model.generator, config.lr_generator)
    rows = one_hot_encode(train).matrix
    n = rows.shape[0]
    log: list[WganEpochStats] = []
    for epoch in range(1, config.epochs + 1):
        c_tot = g_tot = gap_tot = 0.0
        n_steps = 0
        for batch_idx in _batches(n, config.batch_size, shuffle_rng):
            model, critic_state, generator_state, losses = wgan_train_step(
                model, rows[batch_idx], config, train_rng, critic_state, generator_state
            )
            c_tot += losses.critic_loss
            g_tot += losses.generator_loss
            gap_tot += losses.d_real - losses.d_fake
            n_steps += 1
        log.append(
            WganEpochStats(epoch, c_tot / n_steps, g_tot / n_steps, gap_tot / n_steps)
        )
    return model, log


def wgan_sample(model: WganModel, n: int, seed: int) -> CodedTable:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent_dim))
    probs = forward(model.generator, z)[-1]
    return _draw_blocks(model.schema, probs, rng)


# --- baselines --------------------------------------------------------------


def marginal_fit(train: CodedTable) -> MarginalModel:
    if train.n_rows == 0:
        raise ValueError("cannot fit a marginal model on an empty table")
    freqs = [
        np.bincount(train.codes[:, j], minlength=card).astype(np.float64) / train.n_rows
        for j, card in enumerate(train.schema.cardinalities)
    ]
    return MarginalModel(train.schema, freqs)


def marginal_sample(model: MarginalModel, n: int, seed: int) -> CodedTable:
    rng = np.random.default_rng(seed)
    codes = np.empty((n, len(model.frequencies)), dtype=np.int64)
    for j, freq in enumerate(model.frequencies):
        codes[:, j] = categorical_rows(np.broadcast_to(freq, (n, freq.size)), rng.random(n))
    return CodedTable(model.schema, codes)


def uniform_sample(schema: Schema, n: int, seed: int) -> CodedTable:
    rng = np.random.default_rng(seed)
    codes = np.column_stack(
        [rng.integers(0, card, size=n) for card in schema.cardinalities]
    )
    return CodedTable(schema, codes.reshape(n, len(schema.variables)))


AnyModel = VaeModel | WganModel | MarginalModel | UniformModel


def sample_from(model: AnyModel, n: int, seed: int) -> CodedTable:
    if isinstance(model, VaeModel):
        return vae_sample(model, n, seed)
    if isinstance(model, WganModel):
        return wgan_sample(model, n, seed)
    if isinstance(model, MarginalModel):
        return marginal_sample(model, n, seed)
    if isinstance(model, UniformModel):
        return uniform_sample(model.schema, n, seed)
    raise TypeError(f"not a sampler: {type(model).__name__}")


# --- persistence ------------------------------------------------------------


def model_kind(model: AnyModel) -> str:
    return {
        VaeModel: "vae",
        WganModel: "wgan",
        MarginalModel: "marginal",
        UniformModel: "uniform",
    }[type(model)]


def save_model(model: AnyModel, prefix, config: TrainConfig | None = None) -> list[Path]:
    """Write `<prefix>.json` plus one `.bin` per network; returns the paths."""
    base = Path(prefix)
    base.parent.mkdir(parents=True, exist_ok=True)
    kind = model_kind(model)
    doc = {
        "format": 1,
        "kind": kind,
        "schema": schema_to_dict(model.schema),
        "schema_hash": schema_hash(model.schema),
        "config": config.to_dict() if config is not None else None,
    }
    written: list[Path] = []
    networks: dict[str, Mlp] = {}
    if isinstance(model, VaeModel):
        doc["latent_dim"] = model.latent_dim
        doc["kl_weight"] = model.kl_weight
        networks = {"encoder": model.encoder, "decoder": model.decoder}
    elif isinstance(model, WganModel):
        doc["latent_dim"] = model.latent_dim
        doc["clip_c"] = model.clip_c
        doc["n_critic"] = model.n_critic
        networks = {"generator": model.generator, "critic": model.critic}
    elif isinstance(model, MarginalModel):
        doc["frequencies"] = [f.tolist() for f in model.frequencies]
    for name, net in networks.items():
        path = base.with_name(f"{base.name}.{name}.bin")
        nn_core.save_mlp(net, path)
        written.append(path)
    doc["networks"] = sorted(networks)
    sidecar = base.with_name(base.name + ".json")
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(sidecar)
    return written


def load_model(prefix) -> AnyModel:
    base = Path(prefix)
    with open(base.with_name(base.name + ".json"), encoding="utf-8") as f:
        doc = json.load(f)
    schema = schema_from_dict(doc["schema"])
    kind = doc["kind"]

    def net(name: str) -> Mlp:
        return nn_core.load_mlp(base.with_name(f"{base.name}.{name}.bin"))

    if kind == "vae":
        return VaeModel(schema, net("encoder"), net("decoder"), doc["latent_dim"], doc["kl_weight"])
    if kind == "wgan":
        return WganModel(schema, net("generator"), net("critic"), doc["latent_dim"], doc["clip_c"], doc["n_critic"])
    if kind == "marginal":
        return MarginalModel(schema, [np.asarray(f, dtype=np.float64) for f in doc["frequencies"]])
    if kind == "uniform":
        return UniformModel(schema)
    raise ValueError(f"unknown model kind {kind!r}")


# --- hyper-parameter search -------------------------------------------------


@dataclass
class TrialResult:
    trial: int
    config: TrainConfig
    validation_srmse: float


def random_search(
    train: CodedTable,
    validation: CodedTable,
    kind: str,
    n_trials: int,
    seed: int,
    base: TrainConfig | None = None,
) -> list[TrialResult]:
    """Seeded random search over architectures and learning rates.

    Each trial trains one model and scores the SRMSE of a generated sample
    against the validation set over all variables; results come back sorted
    best-first.
    """
    if kind not in ("vae", "wgan"):
        raise ValueError("random search supports 'vae' and 'wgan'")
    base = base if base is not None else TrainConfig()
    rng = np.random.default_rng(derive_seed(seed, "search", kind))
    all_vars = train.schema.names
    val_hist = empirical_joint(validation, all_vars)
    hidden_choices = ((32, 32), (64, 64), (128, 128), (64,))
    results: list[TrialResult] = []
    for trial in range(n_trials):
        latent = int(rng.choice([4, 8, 16, 32]))
        hidden = hidden_choices[rng.integers(len(hidden_choices))]
        if kind == "vae":
            config = replace(
                base,
                latent_dim=latent,
                hidden_vae=hidden,
                lr_vae=10.0 ** rng.uniform(-4.0, -2.0),
                seed=derive_seed(seed, "search", kind, str(trial)) % 2**32,
            )
            model, _ = fit_vae(train, config)
        else:
            lr = 10.0 ** rng.uniform(-5.0, -3.0)
            config = replace(
                base,
                latent_dim=latent,
                hidden_generator=hidden,
                hidden_critic=hidden,
                lr_generator=lr,
                lr_critic=lr,
                seed=derive_seed(seed, "search", kind, str(trial)) % 2**32,
            )
            model, _ = fit_wgan(train, config)
        sample = sample_from(model, validation.n_rows, derive_seed(seed, "search", kind, str(trial), "sample"))
        score = srmse(empirical_joint(sample, all_vars), val_hist)
        results.append(TrialResult(trial, config, score))
    results.sort(key=lambda r: r.validation_srmse)
    return results
