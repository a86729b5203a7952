import numpy as np
import pytest

from levellab.env import Tile, make_level, navigable_mask, validate_level
from levellab.vae import (
    DecodedHeads,
    LatentGaussian,
    VaeConfig,
    VaeModel,
    _layout_targets,
    decode,
    desk_vae_config,
    elbo_loss,
    encode,
    interp_gaussian,
    interpolate_pairs,
    kl_closed_form,
    pretrain,
    sample_level,
)
from levellab.wfc import GenerationError


def tiny_cfg(**kw):
    base = dict(latent_dim=4, conv_layers=1, conv_channels=3, dense_layers=1,
                dense_dim=8, bottleneck_dim=4, decoder_layers=1, decoder_dim=8,
                epochs=3, batch_size=4)
    base.update(kw)
    return VaeConfig(**base)


def open_level(h=5, w=5, start=(0, 0), goal=None):
    if goal is None:
        goal = (h - 1, w - 1)
    return make_level(np.zeros((h, w), dtype=np.int8), start, goal)


def random_training_levels(rng, count, h=6, w=6):
    out = []
    while len(out) < count:
        g = np.zeros((h, w), dtype=np.int8)
        for _ in range(rng.integers(3, 9)):
            r, c = rng.integers(0, h), rng.integers(0, w)
            g[r, c] = rng.choice([Tile.WALL, Tile.MOSS, Tile.LAVA])
        nav = np.argwhere(navigable_mask(g))
        if len(nav) < 2:
            continue
        i, j = rng.choice(len(nav), 2, replace=False)
        try:
            out.append(make_level(g, tuple(nav[i]), tuple(nav[j])))
        except ValueError:
            continue
    return out


def test_kl_closed_form_hand_cases():
    assert kl_closed_form(np.zeros(3), np.zeros(3)) == 0.0
    # unit mean, unit sigma: 0.5 * (1 + 1 - 1 - 0) = 0.5 per dim
    assert kl_closed_form([1.0], [0.0]) == pytest.approx(0.5, abs=1e-12)
    assert kl_closed_form([1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)

    rng = np.random.default_rng(0)
    for _ in range(200):
        mu = rng.normal(size=4) * 3
        ls = rng.normal(size=4)
        assert kl_closed_form(mu, ls) >= 0.0

    # zero exactly when mu=0 and sigma=1; any perturbation is positive
    assert kl_closed_form([0.1, 0, 0], [0, 0, 0]) > 0
    assert kl_closed_form([0, 0, 0], [0.1, 0, 0]) > 0
    assert kl_closed_form([0, 0, 0], [-0.1, 0, 0]) > 0


def test_latent_gaussian_validation():
    g = LatentGaussian(mu=np.zeros(3), log_sigma=np.zeros(3))
    assert np.allclose(g.sigma, 1.0)
    with pytest.raises(ValueError, match="shape"):
        LatentGaussian(mu=np.zeros(3), log_sigma=np.zeros(2))
    with pytest.raises(ValueError, match="finite"):
        LatentGaussian(mu=np.array([np.nan, 0.0]), log_sigma=np.zeros(2))
    with pytest.raises(ValueError, match="finite"):
        LatentGaussian(mu=np.zeros(2), log_sigma=np.array([np.inf, 0.0]))


def test_config_validation_and_desk_preset():
    with pytest.raises(ValueError, match="beta"):
        VaeConfig(beta=-0.1)
    with pytest.raises(ValueError, match="latent_dim"):
        VaeConfig(latent_dim=0)
    with pytest.raises(ValueError, match="clamp"):
        VaeConfig(log_sigma_min=2.0, log_sigma_max=2.0)

    full = VaeConfig()
    assert full.beta == pytest.approx(0.0448)
    assert full.layout_coeff == pytest.approx(0.04)
    assert full.start_goal_coeff == pytest.approx(0.013)
    assert full.latent_dim == 1024
    assert full.dense_dim == 2048
    assert full.bottleneck_dim == 256
    assert full.lr == pytest.approx(4e-4)

    desk = desk_vae_config()
    assert desk.latent_dim == 64
    assert desk.dense_dim == 256
    assert desk.bottleneck_dim == 64
    assert desk.beta == full.beta


def test_decoder_heads_normalize():
    rng = np.random.default_rng(1)
    model = VaeModel(tiny_cfg(), 5, 5, seed=3)
    for _ in range(20):
        z = rng.normal(size=4).astype(np.float32) * 2
        heads = decode(model, z)
        assert heads.layout_probs.shape == (5, 5, 4)
        assert np.abs(heads.layout_probs.sum(axis=-1) - 1.0).max() < 1e-6
        assert abs(heads.start_probs.sum() - 1.0) < 1e-6
        assert abs(heads.goal_probs.sum() - 1.0) < 1e-6
        assert (heads.layout_probs >= 0).all()
        assert (heads.start_probs >= 0).all()
        assert (heads.goal_probs >= 0).all()


def test_encode_clamps_log_sigma():
    model = VaeModel(tiny_cfg(), 5, 5, seed=0)
    lv = open_level()
    model.log_sigma_head.b.data[:] = 50.0
    assert (encode(model, lv).log_sigma == 2.0).all()
    model.log_sigma_head.b.data[:] = -50.0
    assert (encode(model, lv).log_sigma == -6.0).all()


def test_encode_rejects_shape_mismatch():
    model = VaeModel(tiny_cfg(), 5, 5, seed=0)
    with pytest.raises(ValueError, match="does not match"):
        encode(model, open_level(h=4, w=5, goal=(3, 4)))
    with pytest.raises(ValueError, match="latent"):
        decode(model, np.zeros(7, dtype=np.float32))


def test_sample_level_validity_fuzz():
    rng = np.random.default_rng(11)
    produced = 0
    for i in range(10_000):
        layout = rng.dirichlet(np.full(4, 0.7), size=25).reshape(5, 5, 4)
        heads = DecodedHeads(
            layout_probs=layout,
            start_probs=rng.dirichlet(np.ones(25)).reshape(5, 5),
            goal_probs=rng.dirichlet(np.ones(25)).reshape(5, 5),
        )
        try:
            lv = sample_level(heads, seed=i)
        except GenerationError:
            continue
        produced += 1
        validate_level(lv)
        assert lv.start != lv.goal
        nav = navigable_mask(lv.grid)
        assert nav[lv.start] and nav[lv.goal]
    assert produced > 5_000


def test_sample_level_failure_and_masking():
    wall_only = np.zeros((4, 4, 4))
    wall_only[:, :, int(Tile.WALL)] = 1.0
    uniform = np.full((4, 4), 1 / 16)
    with pytest.raises(GenerationError, match="navigable"):
        sample_level(DecodedHeads(wall_only, uniform, uniform), seed=0)

    # exactly one navigable cell: cannot place distinct start and goal
    one_open = wall_only.copy()
    one_open[2, 2] = [1.0, 0.0, 0.0, 0.0]
    with pytest.raises(GenerationError, match="navigable"):
        sample_level(DecodedHeads(one_open, uniform, uniform), seed=0)

    # marker heads pile all mass on a wall cell; masking must redirect
    layout = np.zeros((4, 4, 4))
    layout[:, :, int(Tile.WALL)] = 1.0
    layout[0, 0] = [1.0, 0.0, 0.0, 0.0]
    layout[3, 3] = [0.0, 0.0, 1.0, 0.0]
    spiky = np.zeros((4, 4))
    spiky[1, 1] = 1.0  # wall cell
    for seed in range(200):
        lv = sample_level(DecodedHeads(layout, spiky, spiky), seed=seed)
        assert {lv.start, lv.goal} == {(0, 0), (3, 3)}


def test_sample_level_deterministic():
    rng = np.random.default_rng(5)
    heads = DecodedHeads(
        layout_probs=rng.dirichlet(np.ones(4), size=25).reshape(5, 5, 4),
        start_probs=rng.dirichlet(np.ones(25)).reshape(5, 5),
        goal_probs=rng.dirichlet(np.ones(25)).reshape(5, 5),
    )
    a = sample_level(heads, seed=42)
    b = sample_level(heads, seed=42)
    assert (a.grid == b.grid).all() and a.start == b.start and a.goal == b.goal


def test_layout_targets_uniform_on_markers():
    g = np.zeros((3, 3), dtype=np.int8)
    g[1, 1] = Tile.WALL
    g[0, 1] = Tile.MOSS
    lv = make_level(g, (0, 0), (2, 2))
    tgt = _layout_targets([lv])[0]

    marker = np.zeros(4)
    marker[int(Tile.EMPTY)] = 0.5
    marker[int(Tile.MOSS)] = 0.5
    assert np.array_equal(tgt[0 * 3 + 0], marker)
    assert np.array_equal(tgt[2 * 3 + 2], marker)

    wall = np.zeros(4)
    wall[int(Tile.WALL)] = 1.0
    assert np.array_equal(tgt[1 * 3 + 1], wall)
    moss = np.zeros(4)
    moss[int(Tile.MOSS)] = 1.0
    assert np.array_equal(tgt[0 * 3 + 1], moss)
    assert np.allclose(tgt.sum(axis=-1), 1.0)


def test_elbo_kl_component_matches_reference():
    model = VaeModel(tiny_cfg(), 5, 5, seed=2)
    levels = random_training_levels(np.random.default_rng(3), 3, h=5, w=5)
    _, comps = elbo_loss(model, levels, seed=9)
    ref = np.mean([kl_closed_form(encode(model, lv).mu, encode(model, lv).log_sigma)
                   for lv in levels])
    assert comps["kl"] == pytest.approx(ref, rel=1e-4)


def test_elbo_loss_rejects_empty_and_nonfinite():
    model = VaeModel(tiny_cfg(), 5, 5, seed=0)
    with pytest.raises(ValueError, match="at least one"):
        elbo_loss(model, [], seed=0)
    model.mu_head.w.data[0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="ELBO"):
        elbo_loss(model, [open_level()], seed=0)


def test_elbo_gradients_match_finite_differences():
    g = np.zeros((3, 3), dtype=np.int8)
    g[1, 1] = Tile.LAVA
    g[0, 2] = Tile.MOSS
    lv = make_level(g, (0, 0), (2, 2))

    model = VaeModel(tiny_cfg(), 3, 3, seed=4)
    params = model.parameters()
    for p in params.values():
        p.data = p.data.astype(np.float64)

    def loss_value():
        total, _ = elbo_loss(model, [lv], seed=5)
        return float(total.data)

    total, _ = elbo_loss(model, [lv], seed=5)
    for p in params.values():
        p.zero_grad()
    total.backward()

    eps = 1e-5
    checked = 0
    rng = np.random.default_rng(6)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        idx = rng.choice(flat.size, size=min(3, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_value()
            flat[i] = orig - eps
            down = loss_value()
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-3, abs=1e-7), name
            checked += 1
    assert checked >= 30


def test_memorization_round_trip():
    """Overfit four levels; argmax reconstruction should match layouts."""
    levels = random_training_levels(np.random.default_rng(7), 4)
    cfg = VaeConfig(latent_dim=16, conv_layers=2, conv_channels=8,
                    dense_layers=1, dense_dim=64, bottleneck_dim=16,
                    decoder_layers=2, decoder_dim=64, epochs=800,
                    batch_size=4, lr=2e-3)
    model, report = pretrain(levels, cfg, seed=0)
    assert report["final_loss"] < report["loss_curve"][0]

    navigable = {int(Tile.EMPTY), int(Tile.MOSS)}
    for lv in levels:
        heads = decode(model, encode(model, lv).mu.astype(np.float32))
        am = heads.layout_probs.argmax(axis=-1)
        ok = 0
        for r in range(6):
            for c in range(6):
                if (r, c) in (lv.start, lv.goal):
                    # marker cells train against uniform {EMPTY, MOSS}
                    ok += int(am[r, c]) in navigable
                else:
                    ok += am[r, c] == lv.grid[r, c]
        assert ok / 36 >= 0.95

    mus = [encode(model, lv).mu for lv in levels]
    for i in range(len(mus)):
        for j in range(i + 1, len(mus)):
            assert np.abs(mus[i] - mus[j]).max() > 1e-2


def test_interp_gaussian_endpoints_and_sigma_path():
    rng = np.random.default_rng(8)
    a = LatentGaussian(rng.normal(size=6), rng.normal(size=6) * 0.3)
    b = LatentGaussian(rng.normal(size=6), rng.normal(size=6) * 0.3)

    assert np.allclose(interp_gaussian(a, b, 0.0).mu, a.mu)
    assert np.allclose(interp_gaussian(a, b, 0.0).sigma, a.sigma)
    assert np.allclose(interp_gaussian(a, b, 1.0).mu, b.mu)
    assert np.allclose(interp_gaussian(a, b, 1.0).sigma, b.sigma)

    mid = interp_gaussian(a, b, 0.5)
    assert np.allclose(mid.mu, 0.5 * (a.mu + b.mu))
    assert np.allclose(mid.sigma, 0.5 * (a.sigma + b.sigma))

    q = interp_gaussian(a, b, 0.25)
    assert np.allclose(q.sigma, 0.75 * a.sigma + 0.25 * b.sigma)

    with pytest.raises(ValueError, match="weight"):
        interp_gaussian(a, b, 1.5)


def test_slerp_keeps_unit_norm():
    e0 = np.zeros(4)
    e0[0] = 1.0
    e1 = np.zeros(4)
    e1[1] = 1.0
    a = LatentGaussian(e0, np.zeros(4))
    b = LatentGaussian(e1, np.zeros(4))
    mid = interp_gaussian(a, b, 0.5, slerp=True)
    assert np.linalg.norm(mid.mu) == pytest.approx(1.0, abs=1e-9)
    # the chord cuts inside the sphere
    lin = interp_gaussian(a, b, 0.5, slerp=False)
    assert np.linalg.norm(lin.mu) == pytest.approx(np.sqrt(0.5), abs=1e-9)
    # endpoints still exact under slerp
    assert np.allclose(interp_gaussian(a, b, 0.0, slerp=True).mu, e0)
    assert np.allclose(interp_gaussian(a, b, 1.0, slerp=True).mu, e1)


def test_interpolate_pairs_counts_and_determinism():
    model = VaeModel(tiny_cfg(), 5, 5, seed=1)
    levels = random_training_levels(np.random.default_rng(9), 5, h=5, w=5)

    props = interpolate_pairs(model, levels, m=4, k=2, seed=3)
    assert len(props) == 8
    again = interpolate_pairs(model, levels, m=4, k=2, seed=3)
    for p, q in zip(props, again):
        assert np.array_equal(p.mu, q.mu)

    assert len(interpolate_pairs(model, levels, m=3, k=5, seed=0)) == 15
    with pytest.raises(ValueError, match="two levels"):
        interpolate_pairs(model, levels[:1], m=1, k=1, seed=0)


def test_pretrain_loss_decreases_and_is_deterministic():
    levels = random_training_levels(np.random.default_rng(10), 4, h=5, w=5)
    cfg = tiny_cfg(epochs=40, lr=2e-3)
    model, report = pretrain(levels, cfg, seed=1)
    curve = np.array(report["loss_curve"])
    assert len(curve) == 40
    assert curve[-1] < curve[0]
    # smoothed trend heads down even if single epochs wobble
    smooth = np.convolve(curve, np.ones(5) / 5, mode="valid")
    assert smooth[-1] < smooth[0]
    assert 0.0 <= report["recon_solvable_rate"] <= 1.0
    assert 0.0 <= report["interp_solvable_rate"] <= 1.0

    _, report2 = pretrain(levels, cfg, seed=1)
    assert report["loss_curve"] == report2["loss_curve"]


def test_pretrain_input_validation():
    with pytest.raises(ValueError, match="nonempty"):
        pretrain([], tiny_cfg(), seed=0)
    mixed = [open_level(), open_level(h=4, w=5, goal=(3, 4))]
    with pytest.raises(ValueError, match="shape"):
        pretrain(mixed, tiny_cfg(), seed=0)
