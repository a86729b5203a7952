"""Variational level generator with categorical decoder heads.

Encoder: per-cell tile one-hots plus start/goal channels run through a
small conv stack, two dense layers, a bottleneck, and linear heads for
(mu, log sigma). Decoder: dense layers fanning out to three heads: a
per-cell tile categorical, a start-cell categorical, and a goal-cell
categorical. Training maximizes the beta-weighted ELBO; sampling masks
the start/goal heads so emitted levels always satisfy the level
invariants (solvability is left to downstream filters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import LevelParams, Tile, make_level, navigable_mask, solvable
from .nn import (
    Adam,
    Conv2d,
    Linear,
    Module,
    Tensor,
    clip,
    log_softmax,
    no_grad,
)
from .wfc import GenerationError


@dataclass(frozen=True)
class LatentGaussian:
    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "log_sigma",
                           np.asarray(self.log_sigma, dtype=np.float64))
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must share a shape")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.log_sigma).all()):
            raise ValueError("latent parameters must be finite")

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


@dataclass
class VaeConfig:
    beta: float = 0.0448
    layout_coeff: float = 0.04
    start_goal_coeff: float = 0.013
    latent_dim: int = 1024
    lr: float = 4e-4
    conv_layers: int = 4
    conv_channels: int = 12
    dense_layers: int = 2
    dense_dim: int = 2048
    bottleneck_dim: int = 256
    decoder_layers: int = 3
    decoder_dim: int = 256
    epochs: int = 200
    batch_size: int = 64
    log_sigma_min: float = -6.0
    log_sigma_max: float = 2.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        for name in ("latent_dim", "conv_layers", "conv_channels", "dense_layers",
                     "dense_dim", "bottleneck_dim", "decoder_layers",
                     "decoder_dim", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.log_sigma_min >= self.log_sigma_max:
            raise ValueError("log sigma clamp range is empty")


def desk_vae_config(**overrides) -> VaeConfig:
    """Shrunk dims for laptop-scale runs; same loss and heads.

    The smaller model needs a longer schedule than the full-size one to
    reach usable reconstruction quality on small datasets.
    """
    base = dict(latent_dim=64, dense_dim=256, bottleneck_dim=64,
                decoder_dim=128, epochs=2400)
    base.update(overrides)
    return VaeConfig(**base)


NUM_TILE_CATEGORIES = 4
INPUT_CHANNELS = NUM_TILE_CATEGORIES + 2  # tiles one-hot + start + goal


class VaeModel(Module):
    """Encoder/decoder pair fixed to one grid shape."""

    def __init__(self, cfg: VaeConfig, height: int, width: int, seed: int = 0):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(21,)))
        self.cfg = cfg
        self.height = height
        self.width = width
        cells = height * width

        chans = [INPUT_CHANNELS] + [cfg.conv_channels] * cfg.conv_layers
        self.enc_convs = [Conv2d(chans[i], chans[i + 1], 3, rng)
                          for i in range(cfg.conv_layers)]
        dims = [cfg.conv_channels * cells] + [cfg.dense_dim] * cfg.dense_layers
        self.enc_dense = [Linear(dims[i], dims[i + 1], rng)
                          for i in range(cfg.dense_layers)]
        self.bottleneck = Linear(cfg.dense_dim, cfg.bottleneck_dim, rng)
        self.mu_head = Linear(cfg.bottleneck_dim, cfg.latent_dim, rng)
        self.log_sigma_head = Linear(cfg.bottleneck_dim, cfg.latent_dim, rng)

        dec_dims = [cfg.latent_dim] + [cfg.decoder_dim] * cfg.decoder_layers
        self.dec_dense = [Linear(dec_dims[i], dec_dims[i + 1], rng)
                          for i in range(cfg.decoder_layers)]
        self.layout_head = Linear(cfg.decoder_dim, cells * NUM_TILE_CATEGORIES, rng)
        self.start_head = Linear(cfg.decoder_dim, cells, rng)
        self.goal_head = Linear(cfg.decoder_dim, cells, rng)

    def encode_batch(self, x) -> tuple[Tensor, Tensor]:
        """(N, 6, H, W) input -> clamped (mu, log_sigma) Tensors."""
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, np.float32))
        if t.data.shape[1:] != (INPUT_CHANNELS, self.height, self.width):
            raise ValueError(
                f"level shape {t.data.shape[1:]} does not match the trained "
                f"model ({INPUT_CHANNELS}, {self.height}, {self.width})")
        for conv in self.enc_convs:
            t = conv(t).relu()
        t = t.reshape(t.data.shape[0], -1)
        for lin in self.enc_dense:
            t = lin(t).relu()
        t = self.bottleneck(t).relu()
        mu = self.mu_head(t)
        log_sigma = clip(self.log_sigma_head(t), self.cfg.log_sigma_min,
                         self.cfg.log_sigma_max)
        return mu, log_sigma

    def decode_batch(self, z: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """z (N, latent) -> log-prob Tensors (layout, start, goal)."""
        t = z
        for lin in self.dec_dense:
            t = lin(t).relu()
        cells = self.height * self.width
        n = t.data.shape[0]
        layout = log_softmax(
            self.layout_head(t).reshape(n, cells, NUM_TILE_CATEGORIES), axis=-1)
        start = log_softmax(self.start_head(t), axis=-1)
        goal = log_softmax(self.goal_head(t), axis=-1)
        return layout, start, goal


@dataclass(frozen=True)
class DecodedHeads:
    """Normalized decoder output distributions as plain arrays."""

    layout_probs: np.ndarray  # (H, W, 4)
    start_probs: np.ndarray  # (H, W)
    goal_probs: np.ndarray  # (H, W)


def level_input(level: LevelParams) -> np.ndarray:
    """(6, H, W) float32 encoding: tile one-hots, start, goal."""
    h, w = level.grid.shape
    x = np.zeros((INPUT_CHANNELS, h, w), dtype=np.float32)
    for t in range(NUM_TILE_CATEGORIES):
        x[t] = level.grid == t
    x[4][level.start] = 1.0
    x[5][level.goal] = 1.0
    return x


def encode(model: VaeModel, level: LevelParams) -> LatentGaussian:
    with no_grad():
        mu, log_sigma = model.encode_batch(level_input(level)[None])
    return LatentGaussian(mu=mu.data[0], log_sigma=log_sigma.data[0])


def decode(model: VaeModel, z) -> DecodedHeads:
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (model.cfg.latent_dim,):
        raise ValueError(f"latent must have shape ({model.cfg.latent_dim},)")
    with no_grad():
        layout, start, goal = model.decode_batch(Tensor(z[None]))
    h, w = model.height, model.width
    return DecodedHeads(
        layout_probs=np.exp(layout.data[0]).reshape(h, w, NUM_TILE_CATEGORIES),
        start_probs=np.exp(start.data[0]).reshape(h, w),
        goal_probs=np.exp(goal.data[0]).reshape(h, w),
    )


def _categorical(rng: np.random.Generator, p: np.ndarray) -> int:
    cdf = np.cumsum(p.astype(np.float64))
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")
               .clip(0, p.size - 1))


def sample_level(heads: DecodedHeads, seed: int) -> LevelParams:
    """Draw a level; start/goal masked onto navigable cells.

    Raises GenerationError when fewer than two navigable cells exist,
    since a valid level needs distinct start and goal.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    h, w, _ = heads.layout_probs.shape
    flat = heads.layout_probs.reshape(-1, NUM_TILE_CATEGORIES).astype(np.float64)
    u = rng.random((flat.shape[0], 1))
    grid = (flat.cumsum(axis=1) > u).argmax(axis=1).astype(np.int8).reshape(h, w)

    nav = navigable_mask(grid)
    if nav.sum() < 2:
        raise GenerationError("sampled layout has fewer than two navigable cells")

    start_p = heads.start_probs.reshape(-1) * nav.reshape(-1)
    if start_p.sum() <= 0.0:
        start_p = nav.reshape(-1).astype(np.float64)
    start_flat = _categorical(rng, start_p)
    start = (start_flat // w, start_flat % w)

    goal_mask = nav.copy().reshape(-1)
    goal_mask[start_flat] = False
    goal_p = heads.goal_probs.reshape(-1) * goal_mask
    if goal_p.sum() <= 0.0:
        goal_p = goal_mask.astype(np.float64)
    goal_flat = _categorical(rng, goal_p)
    goal = (goal_flat // w, goal_flat % w)
    return make_level(grid, start, goal)


def _layout_targets(levels: list[LevelParams]) -> np.ndarray:
    """(N, cells, 4) soft targets; start/goal cells become uniform over
    {MOSS, EMPTY} since the markers hide the tile underneath."""
    n = len(levels)
    h, w = levels[0].grid.shape
    tgt = np.zeros((n, h * w, NUM_TILE_CATEGORIES), dtype=np.float32)
    for i, lv in enumerate(levels):
        flat = lv.grid.reshape(-1)
        tgt[i, np.arange(h * w), flat] = 1.0
        for cell in (lv.start, lv.goal):
            k = cell[0] * w + cell[1]
            tgt[i, k] = 0.0
            tgt[i, k, int(Tile.EMPTY)] = 0.5
            tgt[i, k, int(Tile.MOSS)] = 0.5
    return tgt


def elbo_loss(model: VaeModel, levels, seed: int):
    """Batched negative ELBO with one variational sample per level.

    Returns (loss Tensor, components dict). KL uses the closed form
    0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma).
    """
    levels = list(levels)
    if not levels:
        raise ValueError("elbo_loss needs at least one level")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = np.stack([level_input(lv) for lv in levels])
    mu, log_sigma = model.encode_batch(x)

    eps = rng.standard_normal(mu.data.shape).astype(mu.data.dtype)
    z = mu + log_sigma.exp() * eps
    layout_logp, start_logp, goal_logp = model.decode_batch(z)

    tgt = _layout_targets(levels)
    ce_layout = -(layout_logp * tgt).sum(axis=(1, 2))

    h, w = model.height, model.width
    starts = np.array([lv.start[0] * w + lv.start[1] for lv in levels])
    goals = np.array([lv.goal[0] * w + lv.goal[1] for lv in levels])
    from .nn import gather

    ce_start = -gather(start_logp, starts, axis=-1)
    ce_goal = -gather(goal_logp, goals, axis=-1)

    two_ls = log_sigma * 2.0
    kl = ((mu ** 2) + two_ls.exp() - 1.0 - two_ls).sum(axis=-1) * 0.5

    cfg = model.cfg
    per_level = (ce_layout * cfg.layout_coeff
                 + (ce_start + ce_goal) * cfg.start_goal_coeff
                 + kl * cfg.beta)
    total = per_level.mean()
    if not np.isfinite(total.data):
        raise FloatingPointError("non-finite ELBO loss")
    components = {
        "layout_ce": float(ce_layout.data.mean()),
        "start_ce": float(ce_start.data.mean()),
        "goal_ce": float(ce_goal.data.mean()),
        "kl": float(kl.data.mean()),
        "total": float(total.data),
    }
    return total, components


def kl_closed_form(mu, log_sigma) -> float:
    """Reference KL(N(mu, sigma) || N(0, I)) for tests and reports."""
    mu = np.asarray(mu, dtype=np.float64)
    ls = np.asarray(log_sigma, dtype=np.float64)
    return float(0.5 * (mu ** 2 + np.exp(2 * ls) - 1.0 - 2 * ls).sum())


def interp_gaussian(a: LatentGaussian, b: LatentGaussian, weight: float,
                    slerp: bool = False) -> LatentGaussian:
    """Convex path between latents; sigma always blends linearly."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    sigma = (1.0 - weight) * a.sigma + weight * b.sigma
    if slerp:
        mu = _slerp(a.mu, b.mu, weight)
    else:
        mu = (1.0 - weight) * a.mu + weight * b.mu
    return LatentGaussian(mu=mu, log_sigma=np.log(sigma))


def _slerp(p: np.ndarray, q: np.ndarray, w: float) -> np.ndarray:
    np_, nq = np.linalg.norm(p), np.linalg.norm(q)
    if np_ < 1e-12 or nq < 1e-12:
        return (1.0 - w) * p + w * q
    cos = float(np.clip(np.dot(p, q) / (np_ * nq), -1.0, 1.0))
    omega = np.arccos(cos)
    if omega < 1e-6:
        return (1.0 - w) * p + w * q
    s = np.sin(omega)
    return (np.sin((1.0 - w) * omega) / s) * p + (np.sin(w * omega) / s) * q


def interpolate_pairs(model: VaeModel, levels, m: int = 4, k: int = 2,
                      seed: int = 0, slerp: bool = False) -> list[LatentGaussian]:
    """M level pairs x K interior convex weights -> M*K latent proposals."""
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("interpolation needs at least two levels")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = []
    for _ in range(m):
        i, j = rng.choice(len(levels), size=2, replace=False)
        ga = encode(model, levels[int(i)])
        gb = encode(model, levels[int(j)])
        for step in range(1, k + 1):
            out.append(interp_gaussian(ga, gb, step / (k + 1), slerp=slerp))
    return out


def sample_latent(gaussian: LatentGaussian, rng: np.random.Generator) -> np.ndarray:
    return gaussian.mu + gaussian.sigma * rng.standard_normal(gaussian.mu.shape)


def pretrain(dataset, cfg: VaeConfig, seed: int = 0):
    """Train on the dataset; returns (model, report).

    The report carries the per-epoch loss curve plus reconstruction and
    interpolation solvability rates measured after training.
    """
    levels = list(dataset)
    if not levels:
        raise ValueError("pretrain needs a nonempty dataset")
    h, w = levels[0].grid.shape
    if any(lv.grid.shape != (h, w) for lv in levels):
        raise ValueError("pretraining dataset must share one grid shape")

    ss = np.random.SeedSequence(seed, spawn_key=(22,))
    order_rng = np.random.default_rng(ss.spawn(1)[0])
    model = VaeModel(cfg, h, w, seed=seed)
    opt = Adam(model.parameters(), lr=cfg.lr, eps=1e-8)

    curve = []
    step_seed = 0
    for _ in range(cfg.epochs):
        order = order_rng.permutation(len(levels))
        epoch_losses = []
        for lo in range(0, len(levels), cfg.batch_size):
            batch = [levels[i] for i in order[lo:lo + cfg.batch_size]]
            step_seed += 1
            loss, _ = elbo_loss(model, batch, seed=seed * 100003 + step_seed)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.data))
        curve.append(float(np.mean(epoch_losses)))

    report = {
        "loss_curve": curve,
        "final_loss": curve[-1],
        "recon_solvable_rate": reconstruction_solvability(model, levels),
        "interp_solvable_rate": interpolation_solvability(model, levels,
                                                          seed=seed),
    }
    return model, report


def reconstruction_solvability(model: VaeModel, levels, seed: int = 0) -> float:
    """Fraction of levels whose mean-latent reconstruction is solvable."""
    ok = 0
    for i, lv in enumerate(levels):
        heads = decode(model, encode(model, lv).mu.astype(np.float32))
        try:
            ok += solvable(sample_level(heads, seed=seed * 7919 + i))
        except GenerationError:
            pass
    return ok / len(levels)


def interpolation_solvability(model: VaeModel, levels, m: int = 16, k: int = 2,
                              seed: int = 0) -> float:
    """Fraction of latent-interpolation proposals that decode solvable."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(23,)))
    proposals = interpolate_pairs(model, levels, m=m, k=k, seed=seed)
    ok = 0
    for i, g in enumerate(proposals):
        z = sample_latent(g, rng).astype(np.float32)
        try:
            ok += solvable(sample_level(decode(model, z), seed=seed * 104729 + i))
        except GenerationError:
            pass
    return ok / len(proposals)


def save_vae(path, model: VaeModel) -> None:
    """Weights next to a .json sidecar holding the architecture."""
    import json
    from dataclasses import asdict
    from pathlib import Path

    from .nn.checkpoint import save_tensors

    path = Path(path)
    save_tensors(path, model.state_dict())
    meta = {"config": asdict(model.cfg), "height": model.height,
            "width": model.width}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, indent=2, sort_keys=True))


def load_vae(path) -> VaeModel:
    import json
    from pathlib import Path

    from .nn.checkpoint import load_tensors

    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise FileNotFoundError(f"missing VAE sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    model = VaeModel(VaeConfig(**meta["config"]), meta["height"],
                     meta["width"])
    model.load_state_dict(load_tensors(path))
    return model
