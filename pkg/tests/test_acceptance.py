"""Acceptance suite: one test per criterion, one pass/fail line each.

Each criterion is a single test function, so the verbose run report
reads as ten pass/fail lines. Slow directional experiments carry the
``slow`` marker but still run by default.
"""

import time

import numpy as np
import pytest
from scipy import stats

from levellab import env
from levellab.agent import (
    PpoConfig,
    collect_rollouts,
    evaluate,
    gae_arrays,
    make_agent,
    ppo_loss,
    ppo_update,
)
from levellab.buffer import (
    ORIGIN_GENERATED,
    BufferEntry,
    LevelBuffer,
    SamplingConfig,
    rank_prioritization,
)
from levellab.driver import DriverConfig, train
from levellab.env import Tile, full_distance_map, make_level
from levellab.metrics import gen_gap, jsd, shift_gap
from levellab.nn import Adam
from levellab.probe import (
    make_probe,
    mi_estimate,
    probe_accuracy,
    probe_train_step,
)
from levellab.vae import (
    VaeConfig,
    VaeModel,
    desk_vae_config,
    elbo_loss,
    kl_closed_form,
    pretrain,
)
from levellab.wfc import GenConfig, collapse_symbols, generate_dataset, \
    get_pattern, satisfies_adjacency

DESK_DATASET_SEED = 42


@pytest.fixture(scope="session")
def desk_levels():
    return generate_dataset(GenConfig(size=9, seed=DESK_DATASET_SEED), 64)


@pytest.fixture(scope="session")
def desk_vae(desk_levels):
    return pretrain(desk_levels, desk_vae_config(), seed=0)


def report(criterion, detail):
    print(f"[criterion {criterion}] PASS: {detail}")


# -------------------------------------------------------------------- 1


def test_criterion_01_distribution_correctness():
    t0 = time.time()
    levels = generate_dataset(GenConfig(size=7, seed=1), 3)
    cfg = SamplingConfig(rho=0.3, temperature=0.1, generated_capacity=4)
    buf = LevelBuffer(levels, cfg)
    rng = np.random.default_rng(0)
    for i, s in enumerate((0.4, 0.9, 0.2)):
        buf.update_score(i, s, secondary_score=s / 2)
    for s in (0.6, 0.8):
        entry = BufferEntry(level=levels[0], origin=ORIGIN_GENERATED,
                            score=s, secondary_score=s, solved_once=True)
        assert buf.admit_generated(entry)

    for eta in (0.0, 0.25, 0.5, 1.0):
        p = buf.sampling_distribution(eta)
        assert abs(p.sum() - 1.0) <= 1e-9, f"eta={eta}: sum {p.sum()}"
        assert (p >= 0).all()
    full = buf.sampling_distribution_full()
    assert abs(full.sum() - 1.0) <= 1e-9

    # support contract: no generated mass before the schedule opens
    p0 = buf.sampling_distribution(0.0)
    gen_mass = p0[buf.generated_mask()].sum()
    assert gen_mass == 0.0, f"eta=0 leaked {gen_mass} onto generated levels"
    p1 = buf.sampling_distribution(1.0)
    assert p1[buf.generated_mask()].sum() > 0.0

    # empirical draw matches P (one call computes P once, then draws)
    eta = 0.5
    expected = buf.sampling_distribution(eta)
    draws = buf.sample(rng, 100_000, eta=eta)
    counts = np.bincount(draws, minlength=len(buf.entries))
    chi = stats.chisquare(counts, expected * 100_000)
    assert chi.pvalue > 0.01, f"chi-square p={chi.pvalue}"
    assert time.time() - t0 < 10.0
    report(1, f"sums exact, eta-0 support clean, chi2 p={chi.pvalue:.3f}")


# -------------------------------------------------------------------- 2


def test_criterion_02_oracle_equivalence():
    t0 = time.time()

    # rank prioritization against a from-scratch oracle
    scores = np.array([0.4, 0.9, 0.2, 0.7, 0.9])
    tau = 0.3
    got = rank_prioritization(scores, tau)
    order = sorted(range(5), key=lambda i: (-scores[i], i))
    ranks = np.empty(5)
    for rank_pos, idx in enumerate(order, start=1):
        ranks[idx] = rank_pos
    weights = (1.0 / ranks) ** (1.0 / tau)
    oracle = weights / weights.sum()
    assert np.abs(got - oracle).max() <= 1e-9

    # GAE against nested discounted sums
    gamma, lam = 0.9, 0.8
    rewards = np.array([1.0, 0.0, 0.5, 2.0])
    values = np.array([0.3, 0.1, 0.7, 0.2])
    dones = np.array([False, True, False, False])
    bootstrap = 0.4
    nxt = np.array([values[1], 0.0, values[3], bootstrap])
    deltas = rewards + gamma * nxt * ~dones - values
    adv_oracle = np.zeros(4)
    for t in range(4):
        acc, w = 0.0, 1.0
        for k in range(t, 4):
            acc += w * deltas[k]
            if dones[k]:
                break
            w *= gamma * lam
        adv_oracle[t] = acc
    adv, targets = gae_arrays(rewards, values, dones, bootstrap, gamma, lam)
    assert np.abs(adv - adv_oracle).max() <= 1e-9
    assert np.abs(targets - (adv_oracle + values)).max() <= 1e-9

    # KL closed form: exact hand values and high-resolution quadrature
    assert kl_closed_form(np.zeros(3), np.zeros(3)) == 0.0
    assert kl_closed_form(np.array([1.0]), np.array([0.0])) == 0.5
    mu, log_sigma = 0.7, -0.3
    x = np.linspace(-14.0, 14.0, 2_000_001)
    sigma = np.exp(log_sigma)
    q = np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    p = np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)
    integrand = np.where(q > 0, q * (np.log(q + 1e-300) - np.log(p + 1e-300)), 0.0)
    quad = np.trapezoid(integrand, x)
    assert kl_closed_form(np.array([mu]), np.array([log_sigma])) == \
        pytest.approx(quad, abs=1e-9)

    # JSD against an explicit-loop oracle
    p_hist = np.array([0.5, 0.25, 0.25, 0.0])
    q_hist = np.array([0.25, 0.25, 0.25, 0.25])
    m = 0.5 * (p_hist + q_hist)

    def kl_term(a, b):
        return sum(ai * np.log(ai / bi) for ai, bi in zip(a, b) if ai > 0)

    oracle_jsd = 0.5 * kl_term(p_hist, m) + 0.5 * kl_term(q_hist, m)
    assert jsd(p_hist, q_hist) == pytest.approx(oracle_jsd, abs=1e-9)
    assert jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == \
        pytest.approx(np.log(2), abs=1e-12)

    # GenGap / ShiftGap are plain arithmetic
    assert gen_gap([1.0, 0.5], [0.25, 0.25]) == pytest.approx(0.5, abs=1e-12)
    p_dist = np.array([0.2, 0.8])
    rets = np.array([1.0, 0.0])
    assert shift_gap(p_dist, rets, [0.5, 0.5]) == \
        pytest.approx(0.2 * 1.0 - 0.5, abs=1e-12)
    assert time.time() - t0 < 10.0
    report(2, "rank, GAE, KL, JSD, GenGap/ShiftGap all match oracles")


# -------------------------------------------------------------------- 3


def fd_check(params, loss_value, analytic_grads, eps=1e-5, rel=1e-3,
             abs_tol=1e-7, per_param=3):
    checked = 0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = analytic_grads[name].reshape(-1)
        for i in dict.fromkeys([0, flat.size // 2, flat.size - 1][:per_param]):
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_value()
            flat[i] = keep - eps
            down = loss_value()
            flat[i] = keep
            fd = (up - down) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=rel, abs=abs_tol), \
                f"{name}[{i}]: analytic {grad[i]} vs fd {fd}"
            checked += 1
    return checked


def test_criterion_03_gradient_integrity():
    t0 = time.time()

    # PPO surrogate on a tiny recurrent agent
    grid = np.array([[0, 1, 1], [0, 1, 1], [0, 0, 0]], dtype=np.int64)
    level = make_level(grid, (0, 0), (2, 2))
    model = make_agent(8, seed=3)
    for p in model.parameters().values():
        p.data = p.data.astype(np.float64)
    cfg = PpoConfig(horizon=2, workers=2, max_steps=10)
    batch = collect_rollouts(make_agent(8, seed=3), [level], lambda r: 0, 2,
                             seed=7, workers=2, max_steps=10)
    rng = np.random.default_rng(11)
    adv = rng.normal(size=(2, 2))
    tgt = batch.values + rng.normal(0.0, 0.5, size=(2, 2))

    def ppo_loss_value():
        total, _ = ppo_loss(model, batch, cfg, adv, tgt)
        return float(total.data.reshape(()))

    total, _ = ppo_loss(model, batch, cfg, adv, tgt)
    for p in model.parameters().values():
        p.grad = None
    total.backward()
    grads = {k: p.grad for k, p in model.parameters().items()}
    n_ppo = fd_check(model.parameters(), ppo_loss_value, grads)

    # VAE ELBO on a 3x3 toy
    toy_cfg = VaeConfig(latent_dim=4, conv_layers=1, conv_channels=3,
                        dense_layers=1, dense_dim=8, bottleneck_dim=4,
                        decoder_layers=1, decoder_dim=8)
    vae = VaeModel(toy_cfg, 3, 3, seed=5)
    for p in vae.parameters().values():
        p.data = p.data.astype(np.float64)
    toy_levels = [
        make_level(np.array([[0, 1, 0], [0, 0, 0], [2, 0, 0]]), (0, 0), (2, 2)),
        make_level(np.array([[0, 0, 0], [1, 1, 0], [0, 0, 0]]), (0, 0), (2, 0)),
    ]

    def elbo_value():
        loss, _ = elbo_loss(vae, toy_levels, seed=9)
        return float(loss.data.reshape(()))

    loss, _ = elbo_loss(vae, toy_levels, seed=9)
    for p in vae.parameters().values():
        p.grad = None
    loss.backward()
    vgrads = {k: p.grad for k, p in vae.parameters().items()}
    n_vae = fd_check(vae.parameters(), elbo_value, vgrads)

    assert n_ppo >= 30 and n_vae >= 30
    assert time.time() - t0 < 60.0
    report(3, f"{n_ppo} PPO and {n_vae} ELBO partials match FD at rel 1e-3")


# -------------------------------------------------------------------- 4


def bfs_reachable(grid, source):
    nav = env.navigable_mask(grid)
    seen = np.zeros_like(nav)
    stack = [source]
    seen[source] = True
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (r + dr, c + dc)
            if (0 <= n[0] < nav.shape[0] and 0 <= n[1] < nav.shape[1]
                    and nav[n] and not seen[n]):
                seen[n] = True
                stack.append(n)
    return seen


def test_criterion_04_cmdp_validity():
    t0 = time.time()
    levels = generate_dataset(GenConfig(size=9, seed=2), 10_000)
    assert len(levels) == 10_000
    for i, lv in enumerate(levels):
        assert set(np.unique(lv.grid)) <= {0, 1, 2, 3}, i
        nav = env.navigable_mask(lv.grid)
        assert nav[lv.start] and nav[lv.goal] and lv.start != lv.goal, i
        reach = bfs_reachable(lv.grid, lv.start)
        # one navigable component, which also proves solvability
        assert (reach == nav).all(), f"level {i}: disconnected navigable set"

    # symbol-level adjacency rules hold for fresh collapses
    for k in range(200):
        pat = get_pattern(("caverns", "pillars", "maze", "shelves")[k % 4])
        symbols = collapse_symbols(pat, 9, seed=k)
        assert satisfies_adjacency(pat, symbols), f"collapse {k}"

    # context-tile correlation signs, pooled over 200 levels
    moss, moss_d, lava, lava_d = [], [], [], []
    for lv in levels[:200]:
        base = lv.grid.copy()
        base[base == Tile.MOSS] = Tile.EMPTY
        base[base == Tile.LAVA] = Tile.WALL
        dist = full_distance_map(base, lv.goal)
        dn = dist / dist[np.isfinite(dist)].max()
        nav = base == Tile.EMPTY
        moss += list((lv.grid[nav] == Tile.MOSS).astype(float))
        moss_d += list(dn[nav])
        wall = base == Tile.WALL
        lava += list((lv.grid[wall] == Tile.LAVA).astype(float))
        lava_d += list(dn[wall])
    rm, pm = stats.pearsonr(moss, moss_d)
    rl, pl = stats.pearsonr(lava, lava_d)
    assert rm < 0 and pm < 0.01, f"moss corr {rm} p {pm}"
    assert rl > 0 and pl < 0.01, f"lava corr {rl} p {pl}"
    assert time.time() - t0 < 120.0
    report(4, f"10k levels valid; moss r={rm:.3f} lava r={rl:.3f}, "
              f"both p<0.01")


# -------------------------------------------------------------------- 5


def test_criterion_05_learning_sanity():
    t0 = time.time()
    grid = np.array([[0, 1, 1], [0, 1, 1], [0, 0, 0]], dtype=np.int64)
    level = make_level(grid, (0, 0), (2, 2))
    model = make_agent(32, seed=0)
    cfg = PpoConfig(horizon=64, workers=8, max_steps=30, lr=3e-4)
    opt = Adam(model.parameters(), lr=cfg.lr, eps=cfg.adam_eps)
    rng = np.random.default_rng(1)
    reached = None
    for update in range(1, 201):
        batch = collect_rollouts(model, [level], lambda r: 0, cfg.horizon,
                                 seed=int(rng.integers(1 << 31)),
                                 workers=cfg.workers, max_steps=cfg.max_steps)
        ppo_update(model, opt, batch, cfg)
        if update % 10 == 0:
            _, solved = evaluate(model, [level], 20,
                                 seed=int(rng.integers(1 << 31)),
                                 max_steps=cfg.max_steps, deterministic=True)
            if float(np.mean(solved)) >= 0.95:
                reached = update
                break
    assert reached is not None, "never hit 0.95 solved within 200 updates"
    assert time.time() - t0 < 300.0
    report(5, f"solved rate >=0.95 at update {reached} "
              f"({time.time() - t0:.0f}s)")


# -------------------------------------------------------------------- 6


def test_criterion_06_probe_behavior():
    rng = np.random.default_rng(0)

    # separable case: one-hot representations, two levels
    probe = make_probe(2, 4, seed=1)
    h = np.zeros((400, 4), dtype=np.float32)
    labels = np.tile([0, 1], 200)
    h[labels == 0, 0] = 1.0
    h[labels == 1, 1] = 1.0
    for _ in range(300):
        probe_train_step(probe, h, labels)
    assert probe_accuracy(probe, h, labels) == 1.0

    # identical representations: accuracy within binomial CI of chance
    probe = make_probe(2, 4, seed=2)
    h_same = np.ones((400, 4), dtype=np.float32)
    labels = rng.permutation(np.tile([0, 1], 200))
    for _ in range(100):
        probe_train_step(probe, h_same, labels)
    acc = probe_accuracy(probe, h_same, labels)
    ci = 1.96 * np.sqrt(0.25 / 400)
    assert abs(acc - 0.5) <= ci, f"acc {acc} outside chance CI +-{ci:.3f}"

    # exact endpoints for the two trivial classifiers
    probe = make_probe(2, 2, seed=3)
    probe.weight.data[:] = 0.0
    probe.bias.data[:] = 0.0
    h2 = rng.normal(size=(64, 2)).astype(np.float32)
    labels2 = np.tile([0, 1], 32)
    est = mi_estimate(probe, h2, labels2)
    assert est.raw == 0.0, f"uniform classifier raw {est.raw}"

    probe.weight.data[:] = np.array([[50.0, -50.0], [-50.0, 50.0]],
                                    dtype=np.float32)
    h_sep = np.zeros((64, 2), dtype=np.float32)
    h_sep[labels2 == 0, 0] = 1.0
    h_sep[labels2 == 1, 1] = 1.0
    est = mi_estimate(probe, h_sep, labels2)
    assert est.raw == np.log(2), f"perfect classifier raw {est.raw}"
    report(6, "separable 1.0, chance within CI, endpoints exact")


# -------------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_07_directional_probe_accuracy():
    t0 = time.time()
    levels = generate_dataset(GenConfig(size=9, seed=100), 32)

    def final_probe_acc(method, seed):
        cfg = DriverConfig(
            method=method, total_updates=1000, seed=seed, hidden_size=64,
            workers=4, horizon=32, max_steps=64, probe_workers=4,
            probe_horizon=24, probe_batch=256, eval_every=0,
            generative_every=10**9, metrics_window=200)
        return train(cfg, levels).report["final_probe_accuracy"]

    wins = 0
    pairs = []
    for seed in range(5):
        uni = final_probe_acc("uniform", seed)
        plr = final_probe_acc("plr", seed)
        pairs.append((plr, uni))
        wins += plr < uni
    assert wins >= 4, f"value-loss sampling lower in only {wins}/5: {pairs}"
    assert time.time() - t0 < 7200.0
    report(7, f"probe accuracy lower under value-loss sampling in {wins}/5 "
              f"seeds {[(round(a, 3), round(b, 3)) for a, b in pairs]}")


# -------------------------------------------------------------------- 8


@pytest.mark.slow
def test_criterion_08_iced_pipeline(desk_levels, desk_vae):
    t0 = time.time()
    vae_model, _ = desk_vae
    cfg = DriverConfig(
        method="iced", total_updates=500, seed=5, hidden_size=64,
        workers=4, horizon=32, max_steps=64, probe_workers=2,
        probe_horizon=16, probe_batch=128, eval_every=0,
        generative_every=10, pairs=4, interpolations=2,
        proposal_episodes=3, metrics_window=200)
    res = train(cfg, desk_levels, vae_model=vae_model)

    assert res.report["admissions"] >= 1, "no generated level admitted"
    for i in res.buffer.generated_indices:
        assert res.buffer.entries[i].solved_once, \
            f"admitted entry {i} was never solved"
    # weight invariance across generative phases is enforced in the
    # driver itself (a mismatch raises), so a finished run certifies it

    fracs = np.array([r["generated_fraction"] for r in res.train_log_rows])
    etas = np.array([r["eta"] for r in res.train_log_rows])
    early = fracs[etas <= 0.25].mean()
    late = fracs[etas >= 0.75].mean()
    assert late > early, (
        f"generated rollout fraction flat: early {early:.4f} late {late:.4f}")
    assert time.time() - t0 < 1800.0
    report(8, f"admissions {res.report['admissions']}, all solved-once, "
              f"weights stable, generated fraction {early:.3f}->{late:.3f}")


# -------------------------------------------------------------------- 9


@pytest.mark.slow
def test_criterion_09_vae_generation_quality(desk_vae):
    t0 = time.time()
    _, rep = desk_vae
    recon = rep["recon_solvable_rate"]
    interp = rep["interp_solvable_rate"]
    assert recon >= 0.60, f"reconstruction solvability {recon}"
    assert interp >= 0.50, f"interpolation solvability {interp}"
    assert time.time() - t0 < 1200.0
    report(9, f"reconstruction {recon:.3f} >= 0.60, "
              f"interpolation {interp:.3f} >= 0.50")


# ------------------------------------------------------------------- 10


def test_criterion_10_determinism(tmp_path):
    levels = generate_dataset(GenConfig(size=7, seed=9), 8)
    blobs = []
    for name in ("first", "second"):
        out = tmp_path / name
        cfg = DriverConfig(
            method="plr", total_updates=12, seed=3, hidden_size=16,
            workers=2, horizon=16, max_steps=24, probe_workers=2,
            probe_horizon=8, probe_batch=32, eval_every=6, eval_subset=4,
            generative_every=10**9, out_dir=str(out))
        train(cfg, levels, test_levels=levels[:3])
        blobs.append((out / "metrics.csv").read_bytes())
    assert blobs[0] == blobs[1], "metrics.csv differs between identical runs"
    report(10, f"byte-identical metrics.csv ({len(blobs[0])} bytes)")
