"""Training orchestration: replay updates plus generative phases.

One driver covers every method. Buffer-based methods draw levels from
the replay distribution and refresh scores each update; generative
methods interleave proposal evaluation (no gradient updates) on their
own cadence. The probe trains on dedicated uniform rollouts once per
update, and per-update metrics land in metrics.csv when a run directory
is set.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .agent import (
    PpoConfig,
    collect_rollouts,
    evaluate,
    gae,
    make_agent,
    ppo_update,
)
from .buffer import (
    ORIGIN_GENERATED,
    ORIGIN_TRAIN,
    BufferEntry,
    LevelBuffer,
    SamplingConfig,
    eta_schedule,
    score_positive_value_loss,
    score_value_loss,
)
from .designers import METHODS, ProposalContext, method_defaults, propose
from .env import bfs_distances
from .metrics import gen_gap, gen_gap_bound, jsd, tile_distance_histogram
from .nn import Adam
from .nn.checkpoint import save_tensors
from .probe import (
    ReprBuffer,
    make_probe,
    mi_estimate,
    probe_accuracy,
    probe_train_step,
    score_mi,
)

METRICS_COLUMNS = (
    "update", "train_return", "test_return", "gen_gap", "shift_gap",
    "mi_estimate", "probe_acc", "bound", "jsd", "moss_density",
    "lava_density", "path_len",
)

TRAIN_LOG_COLUMNS = (
    "update", "mean_return", "policy_loss", "value_loss", "entropy",
    "total_loss", "approx_kl", "clip_fraction", "grad_norm",
    "generated_fraction", "eta",
)

PROBE_LOG_COLUMNS = ("update", "mi_estimate", "mi_estimate_raw",
                     "probe_accuracy", "chance")


@dataclass
class DriverConfig:
    method: str = "uniform"
    total_updates: int = 1000
    seed: int = 0

    # agent + PPO
    hidden_size: int = 256
    core: str = "lstm"
    workers: int = 32
    horizon: int = 256
    max_steps: int = 250
    gamma: float = 0.995
    lam: float = 0.95
    ppo_epochs: int = 5
    clip_range: float = 0.2
    lr: float = 1e-4
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-5

    # replay buffer
    rho: float = 0.3
    temperature: float = 0.1
    secondary_temperature: float = 1.0
    capacity_mode: str = "split"
    generated_capacity: int = 512
    total_capacity: int = 1024
    replay_rate: float | None = None  # None -> method default
    scoring: str | None = None  # None -> method default
    smi_sign: float = 1.0

    # generative phase
    generative_every: int = 10
    pairs: int = 4
    interpolations: int = 2
    slerp: bool = False
    proposal_episodes: int = 3
    gen_batch: int = 4

    # probe
    probe_every: int = 1
    probe_lr: float = 1e-3
    probe_batch: int = 256
    probe_workers: int = 4
    probe_horizon: int = 16
    repr_capacity: int = 4096

    # evaluation + metrics
    eval_every: int = 50
    eval_subset: int = 32  # 0 = full sets
    eval_episodes_per_level: int = 1
    metrics_window: int = 1000
    dump_buffer_every: int = 0
    checkpoint_every: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.total_updates < 1:
            raise ValueError("total_updates must be >= 1")
        if self.scoring not in (None, "none", "value_loss",
                                "positive_value_loss", "mi"):
            raise ValueError(f"unknown scoring rule {self.scoring!r}")
        if self.replay_rate is not None and not 0.0 <= self.replay_rate <= 1.0:
            raise ValueError("replay_rate must lie in [0, 1]")
        if self.generative_every < 1 or self.probe_every < 0:
            raise ValueError("cadences must be positive")
        if self.smi_sign not in (1.0, -1.0):
            raise ValueError("smi_sign must be +1 or -1")

    def ppo_config(self) -> PpoConfig:
        return PpoConfig(
            gamma=self.gamma, lam=self.lam, horizon=self.horizon,
            epochs=self.ppo_epochs, clip_range=self.clip_range,
            workers=self.workers, lr=self.lr, value_coeff=self.value_coeff,
            entropy_coeff=self.entropy_coeff,
            max_grad_norm=self.max_grad_norm, adam_eps=self.adam_eps,
            max_steps=self.max_steps,
        )

    def resolved(self) -> dict:
        """Method defaults merged with explicit overrides."""
        d = method_defaults(self.method)
        return {
            "replay_rate": d["replay_rate"] if self.replay_rate is None
            else self.replay_rate,
            "scoring": d["scoring"] if self.scoring is None else self.scoring,
            "generative": d["generative"],
            "filter_solved": d["filter_solved"],
        }


@dataclass(frozen=True)
class Schedule:
    eta: float
    probe: bool
    evaluate: bool
    generative: bool


def schedule(update_index: int, cfg: DriverConfig) -> Schedule:
    """Cadence decisions for a 0-based replay-update index."""
    if not 0 <= update_index < cfg.total_updates:
        raise ValueError("update index outside the configured budget")
    denom = max(cfg.total_updates - 1, 1)
    eta = eta_schedule(min(update_index, denom), denom)
    probe = cfg.probe_every > 0 and update_index % cfg.probe_every == 0
    eval_due = cfg.eval_every > 0 and (
        update_index % cfg.eval_every == 0
        or update_index == cfg.total_updates - 1)
    generative = (update_index + 1) % cfg.generative_every == 0
    return Schedule(eta=eta, probe=probe, evaluate=eval_due,
                    generative=generative)


@dataclass
class TrainResult:
    model: object
    probe: object
    buffer: LevelBuffer | None
    metrics_rows: list
    train_log_rows: list
    probe_rows: list
    report: dict
    run_dir: str | None


def _format_cell(v) -> str:
    if isinstance(v, int):
        return str(v)
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return "nan"
    return f"{float(v):.6f}"


def _write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def _level_stats(level) -> dict:
    d = bfs_distances(level.grid, level.start)[level.goal]
    return {
        "hist": tile_distance_histogram(level),
        "moss": float((level.grid == 2).mean()),
        "lava": float((level.grid == 3).mean()),
        "path": float(d),
    }


def evaluate_levels(model, levels, episodes: int, seed: int,
                    cfg: DriverConfig) -> list[dict]:
    """Evaluation-only rollouts per level: scores, solved flag, return.

    Never takes gradient steps; one collect pass per level with
    ``episodes`` parallel workers.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(60,))
    out = []
    for i, level in enumerate(levels):
        batch = collect_rollouts(
            model, [level], sampler=lambda rng: 0, horizon=cfg.max_steps,
            seed=int(ss.spawn(1)[0].generate_state(1)[0] + i),
            workers=episodes, max_steps=cfg.max_steps)
        advs = np.concatenate(
            [gae(t, cfg.gamma, cfg.lam)[0] for t in batch.trajectories])
        solved = any(t.dones[-1] and t.rewards[-1] > 0
                     for t in batch.trajectories)
        returns = [t.total_return for t in batch.trajectories]
        out.append({
            "value_loss": score_value_loss(advs),
            "positive_value_loss": score_positive_value_loss(advs),
            "solved": solved,
            "mean_return": float(np.mean(returns)),
        })
    return out


def generative_phase(model, buffer: LevelBuffer, method: str,
                     ctx: ProposalContext, cfg: DriverConfig, seed: int,
                     require_solved: bool) -> dict:
    """Propose, score via evaluation rollouts, admit. No weight updates."""
    proposals = propose(method, ctx)
    stats = evaluate_levels(model, proposals, cfg.proposal_episodes, seed, cfg)
    admitted = 0
    solved_flags = []
    for level, st in zip(proposals, stats):
        entry = BufferEntry(
            level=level, origin=ORIGIN_GENERATED, score=st["value_loss"],
            secondary_score=st["value_loss"], solved_once=st["solved"])
        solved_flags.append(st["solved"])
        if buffer.admit_generated(entry, require_solved=require_solved):
            admitted += 1
    return {
        "proposed": len(proposals),
        "admitted": admitted,
        "solved": solved_flags,
    }


def _score_replayed(buffer: LevelBuffer, trajectories, cfg: DriverConfig,
                    scoring: str, probe, num_train: int) -> None:
    """Overwrite scores for every level replayed this update."""
    by_level: dict[int, list] = {}
    for t in trajectories:
        by_level.setdefault(t.level_index, []).append(t)
    for idx, trajs in by_level.items():
        advs = np.concatenate([gae(t, cfg.gamma, cfg.lam)[0] for t in trajs])
        secondary = score_value_loss(advs)
        entry = buffer.entries[idx]
        if scoring == "value_loss":
            buffer.update_score(idx, secondary, secondary)
        elif scoring == "positive_value_loss":
            buffer.update_score(idx, score_positive_value_loss(advs), secondary)
        elif scoring == "mi" and entry.origin == ORIGIN_TRAIN and idx < num_train:
            h = np.concatenate([t.hiddens for t in trajs])
            buffer.update_score(idx, score_mi(probe, h, idx, cfg.smi_sign),
                                secondary)
        else:
            buffer.update_secondary_score(idx, secondary)
        if any(t.dones[-1] and t.rewards[-1] > 0 for t in trajs):
            buffer.mark_solved(idx)


def train(cfg: DriverConfig, train_levels, test_levels=None,
          vae_model=None) -> TrainResult:
    """Run the configured method end to end.

    Gradient updates happen only on replay iterations; proposal
    evaluation and probe training never touch the agent weights. All
    randomness forks from the master seed, so a (config, seed) pair
    pins every artifact byte.
    """
    train_levels = list(train_levels)
    if not train_levels:
        raise ValueError("train requires a nonempty training set")
    test_levels = list(test_levels) if test_levels else []
    resolved = cfg.resolved()
    if cfg.method == "iced" and vae_model is None:
        raise ValueError("method 'iced' needs a pretrained VAE model")

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = asdict(cfg)
        payload["resolved"] = resolved
        (out_dir / "config.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True))

    ss = np.random.SeedSequence(cfg.seed, spawn_key=(61,))
    (seed_model, seed_probe, s_rollout, s_branch, s_proposal, s_probe_roll,
     s_probe_train, s_eval, s_buffer, s_dr) = ss.spawn(10)
    rollout_rng = np.random.default_rng(s_rollout)
    branch_rng = np.random.default_rng(s_branch)
    proposal_rng = np.random.default_rng(s_proposal)
    probe_roll_rng = np.random.default_rng(s_probe_roll)
    probe_train_rng = np.random.default_rng(s_probe_train)
    eval_rng = np.random.default_rng(s_eval)
    buffer_rng = np.random.default_rng(s_buffer)
    dr_rng = np.random.default_rng(s_dr)

    model = make_agent(cfg.hidden_size, cfg.core,
                       seed=int(seed_model.generate_state(1)[0]))
    opt = Adam(model.parameters(), lr=cfg.lr, eps=cfg.adam_eps)
    ppo_cfg = cfg.ppo_config()

    num_train = len(train_levels)
    grid_size = train_levels[0].grid.shape[0]
    probe = make_probe(max(num_train, 2), cfg.hidden_size,
                       seed=int(seed_probe.generate_state(1)[0]),
                       lr=cfg.probe_lr)
    repr_buffer = ReprBuffer(cfg.hidden_size, cfg.repr_capacity)
    chance = 1.0 / num_train

    sampling = SamplingConfig(
        rho=cfg.rho, temperature=cfg.temperature,
        secondary_temperature=cfg.secondary_temperature,
        replay_rate=resolved["replay_rate"],
        generated_capacity=cfg.generated_capacity,
        capacity_mode=cfg.capacity_mode, total_capacity=cfg.total_capacity)

    if cfg.method == "dr":
        buffer = None
    elif cfg.method in ("rplr", "accel"):
        # UED methods never see the curated set; they seed their buffer
        # with their own generator's output
        seeds = [int(dr_rng.integers(1 << 31)) for _ in range(cfg.workers)]
        buffer = LevelBuffer(_dr_batch(grid_size, seeds), sampling)
    else:
        buffer = LevelBuffer(train_levels, sampling)

    window = deque(maxlen=cfg.metrics_window)
    ref_hist = np.mean([tile_distance_histogram(lv) for lv in train_levels],
                       axis=0)
    stats_cache: dict[int, dict] = {}

    def cached_stats(key, level):
        if key not in stats_cache:
            stats_cache[key] = _level_stats(level)
        return stats_cache[key]

    eval_train_idx = _eval_subset(num_train, cfg.eval_subset, eval_rng)
    eval_test_idx = _eval_subset(len(test_levels), cfg.eval_subset, eval_rng)

    metrics_rows, train_log_rows, probe_rows = [], [], []
    admissions_total, proposals_total = 0, 0
    last = {
        "test_return": float("nan"), "gen_gap": float("nan"),
        "shift_gap": float("nan"), "train_eval_return": float("nan"),
        "mi": float("nan"), "mi_raw": float("nan"), "acc": float("nan"),
    }
    t_start = time.time()
    update = 0

    try:
        while update < cfg.total_updates:
            sch = schedule(update, cfg)

            if cfg.method in ("rplr", "accel") and \
                    branch_rng.random() >= resolved["replay_rate"]:
                # generate branch: evaluate fresh proposals, no update
                ctx = ProposalContext(
                    seed=int(proposal_rng.integers(1 << 31)),
                    count=cfg.gen_batch, grid_size=grid_size, buffer=buffer,
                    train_levels=train_levels, vae_model=vae_model,
                    pairs=cfg.pairs, interpolations=cfg.interpolations,
                    slerp=cfg.slerp)
                rep = generative_phase(
                    model, buffer, cfg.method, ctx, cfg,
                    seed=int(proposal_rng.integers(1 << 31)),
                    require_solved=resolved["filter_solved"])
                admissions_total += rep["admitted"]
                proposals_total += rep["proposed"]
                continue

            # --- replay iteration -------------------------------------
            if cfg.method == "dr":
                seeds = [int(dr_rng.integers(1 << 31))
                         for _ in range(cfg.workers)]
                levels = _dr_batch(grid_size, seeds)
                sampler = _uniform_sampler(len(levels))
                origins = [ORIGIN_GENERATED] * len(levels)
            elif cfg.method == "uniform":
                levels = train_levels
                sampler = _uniform_sampler(num_train)
                origins = [ORIGIN_TRAIN] * num_train
            else:
                levels = [e.level for e in buffer.entries]
                origins = [e.origin for e in buffer.entries]
                if cfg.method in ("iced", "iced-el"):
                    eta = sch.eta
                    sampler = lambda rng: buffer.sample(rng, 1, eta=eta)[0]
                else:
                    sampler = _full_sampler(buffer)

            batch = collect_rollouts(
                model, levels, sampler, cfg.horizon,
                seed=int(rollout_rng.integers(1 << 31)),
                workers=cfg.workers, max_steps=cfg.max_steps)

            gen_count = sum(origins[t.level_index] == ORIGIN_GENERATED
                            for t in batch.trajectories)
            gen_fraction = gen_count / len(batch.trajectories)

            if buffer is not None and resolved["scoring"] != "none":
                _score_replayed(buffer, batch.trajectories, cfg,
                                resolved["scoring"], probe, num_train)

            for t in batch.trajectories:
                key = (id(levels), t.level_index) if cfg.method == "dr" \
                    else t.level_index
                st = dict(cached_stats(key, levels[t.level_index]))
                st["generated"] = origins[t.level_index] == ORIGIN_GENERATED
                window.append(st)
            if cfg.method == "dr":
                stats_cache.clear()

            diag = ppo_update(model, opt, batch, ppo_cfg,
                              dump_dir=str(out_dir) if out_dir else None)
            update += 1

            # --- probe refresh ----------------------------------------
            if sch.probe:
                pbatch = collect_rollouts(
                    model, train_levels, _uniform_sampler(num_train),
                    cfg.probe_horizon,
                    seed=int(probe_roll_rng.integers(1 << 31)),
                    workers=cfg.probe_workers, max_steps=cfg.max_steps)
                h = np.concatenate([t.hiddens for t in pbatch.trajectories])
                labels = np.concatenate(
                    [np.full(t.length, t.level_index)
                     for t in pbatch.trajectories])
                est = mi_estimate(probe, h, labels)
                acc = probe_accuracy(probe, h, labels)
                last.update(mi=est.clamped, mi_raw=est.raw, acc=acc)
                repr_buffer.add(h, labels)
                sh, sl = repr_buffer.sample(probe_train_rng, cfg.probe_batch)
                probe_train_step(probe, sh, sl)
                probe_rows.append({
                    "update": update, "mi_estimate": est.clamped,
                    "mi_estimate_raw": est.raw, "probe_accuracy": acc,
                    "chance": chance,
                })

            # --- generative phase (alternating methods) ---------------
            if sch.generative and resolved["generative"] \
                    and cfg.method in ("iced", "iced-el"):
                before = _param_digest(model)
                ctx = ProposalContext(
                    seed=int(proposal_rng.integers(1 << 31)),
                    count=cfg.pairs * cfg.interpolations,
                    grid_size=grid_size, buffer=buffer,
                    train_levels=train_levels, vae_model=vae_model,
                    pairs=cfg.pairs, interpolations=cfg.interpolations,
                    slerp=cfg.slerp)
                rep = generative_phase(
                    model, buffer, cfg.method, ctx, cfg,
                    seed=int(proposal_rng.integers(1 << 31)),
                    require_solved=resolved["filter_solved"])
                admissions_total += rep["admitted"]
                proposals_total += rep["proposed"]
                if _param_digest(model) != before:
                    raise RuntimeError(
                        "agent weights changed during a generative phase")

            # --- held-out evaluation ----------------------------------
            if sch.evaluate:
                seed_e = int(eval_rng.integers(1 << 31))
                tr_ret, _ = evaluate(
                    model, [train_levels[i] for i in eval_train_idx],
                    cfg.eval_episodes_per_level, seed_e,
                    max_steps=cfg.max_steps)
                last["train_eval_return"] = float(tr_ret.mean())
                if eval_test_idx.size:
                    te_ret, _ = evaluate(
                        model, [test_levels[i] for i in eval_test_idx],
                        cfg.eval_episodes_per_level, seed_e + 1,
                        max_steps=cfg.max_steps)
                    last["test_return"] = float(te_ret.mean())
                    last["gen_gap"] = gen_gap(tr_ret, te_ret)

            train_return = diag["mean_return"]
            if np.isfinite(last["train_eval_return"]):
                # replay returns are the P_Lambda-weighted sample
                last["shift_gap"] = train_return - last["train_eval_return"]

            hists = [st["hist"] for st in window]
            paths = np.array([st["path"] for st in window])
            finite = np.isfinite(paths)
            metrics_rows.append({
                "update": update,
                "train_return": train_return,
                "test_return": last["test_return"],
                "gen_gap": last["gen_gap"],
                "shift_gap": last["shift_gap"],
                "mi_estimate": last["mi"],
                "probe_acc": last["acc"],
                "bound": gen_gap_bound(last["mi"], num_train, d=1.0)
                if np.isfinite(last["mi"]) else float("nan"),
                "jsd": jsd(np.mean(hists, axis=0), ref_hist),
                "moss_density": float(np.mean([st["moss"] for st in window])),
                "lava_density": float(np.mean([st["lava"] for st in window])),
                "path_len": float(paths[finite].mean()) if finite.any()
                else float("nan"),
            })
            train_log_rows.append({
                "update": update, "mean_return": train_return,
                "policy_loss": diag["policy_loss"],
                "value_loss": diag["value_loss"],
                "entropy": diag["entropy"],
                "total_loss": diag["total_loss"],
                "approx_kl": diag["approx_kl"],
                "clip_fraction": diag["clip_fraction"],
                "grad_norm": diag["grad_norm"],
                "generated_fraction": gen_fraction,
                "eta": sch.eta,
            })

            if out_dir:
                if cfg.dump_buffer_every and buffer is not None \
                        and update % cfg.dump_buffer_every == 0:
                    buffer.dump(out_dir / f"buffer_{update:06d}.json")
                if cfg.checkpoint_every and update % cfg.checkpoint_every == 0:
                    save_tensors(out_dir / f"agent_{update:06d}.llta",
                                 {k: p.data for k, p in
                                  model.parameters().items()})
    except Exception as exc:
        if out_dir:
            save_tensors(out_dir / "agent_aborted.llta",
                         {k: p.data for k, p in model.parameters().items()})
            (out_dir / "abort.json").write_text(json.dumps({
                "update": update, "error": f"{type(exc).__name__}: {exc}",
            }, indent=2))
        raise

    final_acc, final_mi = _final_probe_eval(
        model, probe, train_levels, cfg,
        seed=int(ss.spawn(1)[0].generate_state(1)[0]))

    report = {
        "method": cfg.method,
        "seed": cfg.seed,
        "updates": update,
        "final_train_return": metrics_rows[-1]["train_return"],
        "final_test_return": metrics_rows[-1]["test_return"],
        "final_probe_accuracy": final_acc,
        "final_mi_estimate": final_mi,
        "last_window_probe_accuracy": last["acc"],
        "proposals": proposals_total,
        "admissions": admissions_total,
        "buffer_size": len(buffer) if buffer is not None else 0,
        "generated_in_buffer": len(buffer.generated_indices)
        if buffer is not None else 0,
        "wall_time_s": round(time.time() - t_start, 3),
    }

    if out_dir:
        _write_csv(out_dir / "metrics.csv", METRICS_COLUMNS, metrics_rows)
        _write_csv(out_dir / "train_log.csv", TRAIN_LOG_COLUMNS,
                   train_log_rows)
        _write_csv(out_dir / "probe.csv", PROBE_LOG_COLUMNS, probe_rows)
        if buffer is not None:
            buffer.dump(out_dir / "buffer_final.json")
        save_tensors(out_dir / "agent_final.llta",
                     {k: p.data for k, p in model.parameters().items()})
        save_tensors(out_dir / "probe_final.llta",
                     {k: np.asarray(v) for k, v in
                      probe.state_dict().items()})
        (out_dir / "report.json").write_text(json.dumps(report, indent=2,
                                                        sort_keys=True))

    return TrainResult(model=model, probe=probe, buffer=buffer,
                       metrics_rows=metrics_rows,
                       train_log_rows=train_log_rows, probe_rows=probe_rows,
                       report=report,
                       run_dir=str(out_dir) if out_dir else None)


def _dr_batch(grid_size: int, seeds) -> list:
    from .designers import dr_generate

    return [dr_generate(grid_size, s) for s in seeds]


def _uniform_sampler(n: int):
    return lambda rng: int(rng.integers(n))


def _full_sampler(buffer: LevelBuffer):
    def sampler(rng):
        p = buffer.sampling_distribution_full()
        idx = int(rng.choice(len(p), p=p))
        buffer.counter += 1
        buffer.entries[idx].stamp = buffer.counter
        return idx

    return sampler


def _final_probe_eval(model, probe, train_levels, cfg: DriverConfig,
                      seed: int):
    """Class-balanced probe reading: four episodes on every level."""
    children = np.random.SeedSequence(seed, spawn_key=(62,)).spawn(
        len(train_levels))
    h_parts, label_parts = [], []
    for i, level in enumerate(train_levels):
        batch = collect_rollouts(
            model, [level], lambda rng: 0, cfg.probe_horizon,
            seed=int(children[i].generate_state(1)[0]), workers=4,
            max_steps=cfg.max_steps)
        for t in batch.trajectories:
            h_parts.append(t.hiddens)
            label_parts.append(np.full(t.length, i))
    h = np.concatenate(h_parts)
    labels = np.concatenate(label_parts)
    return probe_accuracy(probe, h, labels), mi_estimate(probe, h,
                                                         labels).clamped


def _eval_subset(n: int, cap: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.array([], dtype=np.int64)
    if cap and n > cap:
        return np.sort(rng.choice(n, size=cap, replace=False))
    return np.arange(n)


def _param_digest(model) -> bytes:
    import hashlib

    h = hashlib.sha256()
    for name in sorted(model.parameters()):
        h.update(name.encode())
        h.update(model.parameters()[name].data.tobytes())
    return h.digest()
