"""Recurrent actor-critic and its PPO training loop.

The model encodes the 5x5 egocentric view with a single 16-channel
conv, the heading with a small affine layer, fuses both into a
recurrent core, and feeds one shared representation h_t to a policy
head and a value head. Everything downstream (probing, scoring) treats
h_t as the agent's representation of the level.

Rollout collection is a pure function of (model, levels, sampler,
seed): every call starts fresh episodes, resamples a level whenever a
worker's episode ends, and bootstraps the trailing truncated piece.
PPO updates re-unroll the stored sequences from their initial hidden
states each epoch.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .env import (
    NUM_ACTIONS,
    NUM_HEADINGS,
    VIEW_CHANNELS,
    VIEW_DEPTH,
    VIEW_WIDTH,
    GridEnv,
)
from .nn import (
    Adam,
    Conv2d,
    GRUCell,
    Linear,
    LSTMCell,
    Module,
    Tensor,
    clip,
    clip_global_norm,
    concat,
    gather,
    log_softmax,
    maximum,
    minimum,
    no_grad,
    save_tensors,
    stack,
)

HEADING_FEATURES = 16  # width of the heading encoder (unstated upstream)
HEAD_WIDTH = 32


class NonFiniteLossError(RuntimeError):
    """Raised when a PPO loss goes NaN/inf; carries a state dump path."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass
class PpoConfig:
    gamma: float = 0.995
    lam: float = 0.95
    horizon: int = 256
    epochs: int = 5
    minibatches: int = 1
    clip_range: float = 0.2
    workers: int = 32
    lr: float = 1e-4
    value_coeff: float = 0.5
    value_clip: bool = True
    entropy_coeff: float = 0.01
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5
    max_steps: int = 250  # per-episode cap inside the environment

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must be in (0, 1], got {self.lam}")
        if self.clip_range <= 0.0:
            raise ValueError("clip range must be positive")
        if self.minibatches != 1:
            raise ValueError("single-minibatch updates only")
        for name in ("horizon", "epochs", "workers", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


class AgentModel(Module):
    """Shared conv+heading encoder, recurrent core, twin heads."""

    def __init__(self, hidden_size: int = 256, core: str = "lstm", seed: int = 0):
        if core not in ("lstm", "gru", "ff"):
            raise ValueError(f"unknown core {core!r}")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
        self.hidden_size = hidden_size
        self.core_type = core
        self.conv = Conv2d(VIEW_CHANNELS, 16, 3, rng)
        self.head_enc = Linear(NUM_HEADINGS, HEADING_FEATURES, rng)
        fused = 16 * VIEW_DEPTH * VIEW_WIDTH + HEADING_FEATURES
        if core == "lstm":
            self.core = LSTMCell(fused, hidden_size, rng)
        elif core == "gru":
            self.core = GRUCell(fused, hidden_size, rng)
        else:
            self.core = Linear(fused, hidden_size, rng)
        self.pi_hidden = Linear(hidden_size, HEAD_WIDTH, rng)
        self.pi_out = Linear(HEAD_WIDTH, NUM_ACTIONS, rng)
        self.v_hidden = Linear(hidden_size, HEAD_WIDTH, rng)
        self.v_out = Linear(HEAD_WIDTH, 1, rng)

    def initial_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        z = np.zeros((batch, self.hidden_size), dtype=np.float32)
        return z, z.copy()

    def step(self, views, headings, state):
        """One time step.

        views: (N, C, H, W) channel-first observation stack.
        state: (h, c) arrays or Tensors; c is ignored by gru/ff cores.
        Returns (logits, values, h_t, (h', c')) as Tensors.
        """
        x = views if isinstance(views, Tensor) else Tensor(np.asarray(views, np.float32))
        d = headings if isinstance(headings, Tensor) else Tensor(np.asarray(headings, np.float32))
        h = state[0] if isinstance(state[0], Tensor) else Tensor(np.asarray(state[0], np.float32))
        c = state[1] if isinstance(state[1], Tensor) else Tensor(np.asarray(state[1], np.float32))

        n = x.data.shape[0]
        feat = self.conv(x).relu().reshape(n, -1)
        dfeat = self.head_enc(d).relu()
        fused = concat([feat, dfeat], axis=1)
        if self.core_type == "lstm":
            h_t, c_t = self.core(fused, h, c)
        elif self.core_type == "gru":
            h_t, c_t = self.core(fused, h), c
        else:
            h_t, c_t = self.core(fused).tanh(), c
        logits = self.pi_out(self.pi_hidden(h_t).relu())
        values = self.v_out(self.v_hidden(h_t).relu()).reshape(n)
        return logits, values, h_t, (h_t, c_t)


def make_agent(hidden_size: int = 256, core: str = "lstm", seed: int = 0) -> AgentModel:
    return AgentModel(hidden_size=hidden_size, core=core, seed=seed)


# --- trajectories -----------------------------------------------------------


@dataclass
class Trajectory:
    """One episode (or trailing truncated piece) on a single level."""

    level_index: int
    views: np.ndarray  # (T, C, H, W) float32
    headings: np.ndarray  # (T, NUM_HEADINGS) float32
    hiddens: np.ndarray  # (T, hidden) h_t fed to the heads at each step
    actions: np.ndarray  # (T,) int64
    log_probs: np.ndarray  # (T,) float32
    values: np.ndarray  # (T,) float32
    rewards: np.ndarray  # (T,) float32
    dones: np.ndarray  # (T,) bool
    bootstrap_value: float  # V of the next state; 0 when the end is terminal

    def __post_init__(self):
        t = self.actions.shape[0]
        if t == 0:
            raise ValueError("empty trajectory")
        for name in ("views", "headings", "hiddens", "log_probs", "values",
                     "rewards", "dones"):
            if getattr(self, name).shape[0] != t:
                raise ValueError(f"trajectory field {name} length mismatch")
        if self.dones[:-1].any():
            raise ValueError("done inside a trajectory body")

    @property
    def length(self) -> int:
        return int(self.actions.shape[0])

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class RolloutBatch:
    """Fixed (horizon, workers) arrays plus the episode slices."""

    views: np.ndarray  # (T, W, C, H, W)
    headings: np.ndarray  # (T, W, NUM_HEADINGS)
    hiddens: np.ndarray  # (T, W, hidden)
    actions: np.ndarray  # (T, W) int64
    log_probs: np.ndarray  # (T, W) float32
    values: np.ndarray  # (T, W) float32
    rewards: np.ndarray  # (T, W) float32
    dones: np.ndarray  # (T, W) bool
    level_indices: np.ndarray  # (T, W) int64
    h0: np.ndarray  # (W, hidden) core state at segment start
    c0: np.ndarray  # (W, hidden)
    bootstrap: np.ndarray  # (W,) value of the state after the last step
    trajectories: list[Trajectory] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return int(self.actions.shape[0])

    @property
    def workers(self) -> int:
        return int(self.actions.shape[1])


def _obs_view(obs) -> np.ndarray:
    # env views are (H, W, C); conv wants (C, H, W)
    return np.transpose(obs.view, (2, 0, 1))


def _sample_actions(rng: np.random.Generator, logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random((logits.shape[0], 1))
    return np.minimum((p.cumsum(axis=1) > u).argmax(axis=1), NUM_ACTIONS - 1)


def collect_rollouts(model: AgentModel, levels, sampler, horizon: int,
                     seed: int, workers: int = 32,
                     max_steps: int = 250) -> RolloutBatch:
    """Run `workers` parallel episode streams for `horizon` steps.

    `sampler(rng) -> index into levels` is consulted at every episode
    start. Hidden state is carried within an episode and zeroed at each
    boundary; the trailing unfinished piece gets a bootstrap value.
    """
    levels = list(levels)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hs = model.hidden_size

    envs, states, obses, lvl = [], [], [], np.zeros(workers, dtype=np.int64)
    for w in range(workers):
        idx = int(sampler(rng))
        if not 0 <= idx < len(levels):
            raise ValueError(f"sampler returned level index {idx} outside 0..{len(levels) - 1}")
        lvl[w] = idx
        env = GridEnv(levels[idx], max_steps=max_steps)
        st, ob = env.reset(int(rng.integers(1 << 31)))
        envs.append(env)
        states.append(st)
        obses.append(ob)

    h = np.zeros((workers, hs), dtype=np.float32)
    c = np.zeros((workers, hs), dtype=np.float32)
    out_views = np.zeros((horizon, workers, VIEW_CHANNELS, VIEW_DEPTH, VIEW_WIDTH), np.float32)
    out_head = np.zeros((horizon, workers, NUM_HEADINGS), np.float32)
    out_hid = np.zeros((horizon, workers, hs), np.float32)
    out_act = np.zeros((horizon, workers), np.int64)
    out_logp = np.zeros((horizon, workers), np.float32)
    out_val = np.zeros((horizon, workers), np.float32)
    out_rew = np.zeros((horizon, workers), np.float32)
    out_done = np.zeros((horizon, workers), bool)
    out_lvl = np.zeros((horizon, workers), np.int64)
    h0, c0 = h.copy(), c.copy()

    for t in range(horizon):
        views_t = np.stack([_obs_view(o) for o in obses])
        head_t = np.stack([o.heading for o in obses])
        with no_grad():
            logits, values, h_t, (h2, c2) = model.step(views_t, head_t, (h, c))
            logp_all = log_softmax(logits, axis=-1).data
        acts = _sample_actions(rng, logits.data)
        out_views[t], out_head[t], out_hid[t] = views_t, head_t, h_t.data
        out_act[t] = acts
        out_logp[t] = logp_all[np.arange(workers), acts]
        out_val[t] = values.data
        out_lvl[t] = lvl
        h, c = h2.data.copy(), c2.data.copy()
        for w in range(workers):
            st, ob, r, done = envs[w].step(states[w], int(acts[w]))
            out_rew[t, w], out_done[t, w] = r, done
            if done:
                idx = int(sampler(rng))
                if not 0 <= idx < len(levels):
                    raise ValueError(
                        f"sampler returned level index {idx} outside 0..{len(levels) - 1}")
                lvl[w] = idx
                envs[w] = GridEnv(levels[idx], max_steps=max_steps)
                st, ob = envs[w].reset(int(rng.integers(1 << 31)))
                h[w] = 0.0
                c[w] = 0.0
            states[w], obses[w] = st, ob

    views_t = np.stack([_obs_view(o) for o in obses])
    head_t = np.stack([o.heading for o in obses])
    with no_grad():
        _, tail_values, _, _ = model.step(views_t, head_t, (h, c))
    bootstrap = np.where(out_done[-1], 0.0, tail_values.data).astype(np.float32)

    batch = RolloutBatch(
        views=out_views, headings=out_head, hiddens=out_hid, actions=out_act,
        log_probs=out_logp, values=out_val, rewards=out_rew, dones=out_done,
        level_indices=out_lvl, h0=h0, c0=c0, bootstrap=bootstrap,
    )
    batch.trajectories = _slice_trajectories(batch)
    return batch


def _slice_trajectories(batch: RolloutBatch) -> list[Trajectory]:
    out = []
    for w in range(batch.workers):
        start = 0
        for t in range(batch.horizon):
            if batch.dones[t, w]:
                out.append(_piece(batch, w, start, t + 1, 0.0))
                start = t + 1
        if start < batch.horizon:
            out.append(_piece(batch, w, start, batch.horizon,
                              float(batch.bootstrap[w])))
    return out


def _piece(batch, w, a, b, bootstrap):
    return Trajectory(
        level_index=int(batch.level_indices[a, w]),
        views=batch.views[a:b, w],
        headings=batch.headings[a:b, w],
        hiddens=batch.hiddens[a:b, w],
        actions=batch.actions[a:b, w],
        log_probs=batch.log_probs[a:b, w],
        values=batch.values[a:b, w],
        rewards=batch.rewards[a:b, w],
        dones=batch.dones[a:b, w],
        bootstrap_value=bootstrap,
    )


# --- advantage estimation ---------------------------------------------------


def gae_arrays(rewards, values, dones, bootstrap, gamma: float, lam: float):
    """Generalized advantage estimation over (T,) or (T, W) arrays.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    with V_T taken from `bootstrap`. Returns (advantages, targets).
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    nxt = np.atleast_1d(np.asarray(bootstrap, dtype=np.float64))
    if r.ndim == 1:
        r, v, d = r[:, None], v[:, None], d[:, None]
    horizon = r.shape[0]
    adv = np.zeros_like(r)
    carry = np.zeros(r.shape[1], dtype=np.float64)
    v_next = nxt
    for t in range(horizon - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * v_next * live - v[t]
        carry = delta + gamma * lam * live * carry
        adv[t] = carry
        v_next = v[t]
    targets = adv + v
    if np.asarray(rewards).ndim == 1:
        return adv[:, 0], targets[:, 0]
    return adv, targets


def gae(trajectory: Trajectory, gamma: float, lam: float):
    return gae_arrays(trajectory.rewards, trajectory.values, trajectory.dones,
                      trajectory.bootstrap_value, gamma, lam)


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    flat = adv.astype(np.float64)
    std = flat.std()
    if std < 1e-12:
        return np.zeros_like(flat)
    return (flat - flat.mean()) / std


# --- PPO update -------------------------------------------------------------


def _unroll(model: AgentModel, batch: RolloutBatch):
    """Re-run the core over the whole segment from the stored h0/c0."""
    h = Tensor(batch.h0.copy())
    c = Tensor(batch.c0.copy())
    logits_steps, value_steps = [], []
    for t in range(batch.horizon):
        logits, values, _, (h, c) = model.step(batch.views[t], batch.headings[t], (h, c))
        logits_steps.append(logits)
        value_steps.append(values)
        live = (1.0 - batch.dones[t].astype(np.float32))[:, None]
        h = h * live
        c = c * live
    return stack(logits_steps, axis=0), stack(value_steps, axis=0)


def ppo_loss(model: AgentModel, batch: RolloutBatch, cfg: PpoConfig,
             advantages: np.ndarray, targets: np.ndarray):
    """Clipped-surrogate total loss over one full-batch epoch.

    Returns (total loss Tensor, diagnostics dict).
    """
    logits_all, values_all = _unroll(model, batch)
    logp_all = log_softmax(logits_all, axis=-1)
    logp_act = gather(logp_all, batch.actions, axis=-1)

    adv = advantages.astype(np.float32)
    ratio = (logp_act - batch.log_probs).exp()
    clipped = clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range)
    policy_loss = -minimum(ratio * adv, clipped * adv).mean()

    tgt = targets.astype(np.float32)
    if cfg.value_clip:
        v_clip = clip(values_all - batch.values,
                      -cfg.clip_range, cfg.clip_range) + batch.values
        value_loss = maximum((values_all - tgt) ** 2, (v_clip - tgt) ** 2).mean()
    else:
        value_loss = ((values_all - tgt) ** 2).mean()

    entropy = -(logp_all.exp() * logp_all).sum(axis=-1).mean()
    total = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy

    with no_grad():
        gap = batch.log_probs - logp_act.data
        diag = {
            "policy_loss": float(policy_loss.data),
            "value_loss": float(value_loss.data),
            "entropy": float(entropy.data),
            "total_loss": float(total.data),
            "approx_kl": float(gap.mean()),
            "clip_fraction": float((np.abs(ratio.data - 1.0) > cfg.clip_range).mean()),
        }
    return total, diag


def ppo_update(model: AgentModel, opt: Adam, batch: RolloutBatch,
               cfg: PpoConfig, dump_dir: str | None = None) -> dict:
    """cfg.epochs full-batch passes, each re-unrolled from stored state."""
    adv_raw, targets = gae_arrays(batch.rewards, batch.values, batch.dones,
                                  batch.bootstrap, cfg.gamma, cfg.lam)
    adv = normalize_advantages(adv_raw)
    diag = {}
    for _ in range(cfg.epochs):
        total, diag = ppo_loss(model, batch, cfg, adv, targets)
        if not np.isfinite(total.data):
            path = _dump_state(model, diag, dump_dir)
            raise NonFiniteLossError(
                f"non-finite PPO loss {float(total.data)!r}; state dumped to {path}",
                dump_path=path)
        opt.zero_grad()
        total.backward()
        diag["grad_norm"] = clip_global_norm(model.parameters(), cfg.max_grad_norm)
        opt.step()
    diag["mean_advantage"] = float(adv.mean())
    diag["mean_return"] = float(batch.rewards.sum() / max(1, len(batch.trajectories)))
    return diag


def _dump_state(model: AgentModel, diag: dict, dump_dir: str | None) -> str | None:
    if dump_dir is None:
        return None
    os.makedirs(dump_dir, exist_ok=True)
    path = os.path.join(dump_dir, "nonfinite_state.llta")
    save_tensors(path, model.state_dict())
    with open(os.path.join(dump_dir, "nonfinite_diag.json"), "w") as fh:
        json.dump({k: float(v) for k, v in diag.items()}, fh, indent=2)
    return path


# --- evaluation -------------------------------------------------------------


def evaluate(model: AgentModel, levels, episodes_per_level: int, seed: int,
             max_steps: int = 250, deterministic: bool = False):
    """Mean return and solved rate per level; never updates parameters.

    Episodes for all (level, episode) pairs run in lockstep with a
    shared seeded rng; solved means the goal tile was reached.
    """
    levels = list(levels)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pairs = [(i, e) for i in range(len(levels)) for e in range(episodes_per_level)]
    n = len(pairs)
    envs, states, obses = [], [], []
    for i, _ in pairs:
        env = GridEnv(levels[i], max_steps=max_steps)
        st, ob = env.reset(int(rng.integers(1 << 31)))
        envs.append(env)
        states.append(st)
        obses.append(ob)
    h = np.zeros((n, model.hidden_size), dtype=np.float32)
    c = np.zeros_like(h)
    returns = np.zeros(n)
    solved = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    for _ in range(max_steps + 1):
        if not active.any():
            break
        views_t = np.stack([_obs_view(o) for o in obses])
        head_t = np.stack([o.heading for o in obses])
        with no_grad():
            logits, _, _, (h2, c2) = model.step(views_t, head_t, (h, c))
        if deterministic:
            acts = logits.data.argmax(axis=1)
        else:
            acts = _sample_actions(rng, logits.data)
        h, c = h2.data, c2.data
        for k in range(n):
            if not active[k]:
                continue
            st, ob, r, done = envs[k].step(states[k], int(acts[k]))
            states[k], obses[k] = st, ob
            returns[k] += r
            if done:
                active[k] = False
                solved[k] = r > 0.0

    per_level_return = np.zeros(len(levels))
    per_level_solved = np.zeros(len(levels))
    for k, (i, _) in enumerate(pairs):
        per_level_return[i] += returns[k] / episodes_per_level
        per_level_solved[i] += solved[k] / episodes_per_level
    return per_level_return, per_level_solved
