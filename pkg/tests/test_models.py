"""Tests for networks, clustering, losses, and the model bundle."""

import numpy as np
import pytest

from csrecon.autodiff import grad, tensor
from csrecon.models import (
    Critic,
    Decoder,
    Encoder,
    MeansGenerator,
    ModelBundle,
    ModelError,
    Standardizer,
    TrainConfig,
    critic_loss_cluster,
    embed_path,
    generator_loss,
    gradient_penalty,
    image_features,
    kl_gaussian,
    kmeans,
    pick_means,
    project_4d,
    project_4d_tensor,
    sample_states,
)


# ----------------------------------------------------------------- config


def test_config_profiles_and_roundtrip():
    paper = TrainConfig.paper()
    assert paper.batch == 512 and paper.latent_dim == 512 and paper.n_critic == 5
    assert paper.k_means_per_cluster == 4 and paper.sigma_gauss == 0.025
    desk = TrainConfig.desk(seed=7)
    assert desk.batch < paper.batch and desk.latent_dim < paper.latent_dim
    assert desk.seed == 7
    assert TrainConfig.from_dict(desk.to_dict()) == desk


def test_config_validation():
    for bad in (
        dict(lr=0.0),
        dict(lambda_gp=-1.0),
        dict(sigma_gauss=-0.1),
        dict(clusters=0),
        dict(k_means_per_cluster=0),
        dict(batch=0),
        dict(smooth_max_eps=0.0),
    ):
        with pytest.raises(ModelError):
            TrainConfig(**bad)


# ----------------------------------------------------------------- kmeans


def test_kmeans_separated_blobs():
    rng = np.random.default_rng(0)
    a = rng.normal(0.0, 0.1, size=(40, 2))
    b = rng.normal(5.0, 0.1, size=(60, 2))
    pts = np.concatenate([a, b])
    assign, centers = kmeans(pts, 2, seed=3)
    # each blob lands in exactly one cluster
    assert len(set(assign[:40])) == 1 and len(set(assign[40:])) == 1
    assert assign[0] != assign[40]
    got = {tuple(np.round(c, 1)) for c in centers}
    want = {tuple(np.round(a.mean(axis=0), 1)), tuple(np.round(b.mean(axis=0), 1))}
    assert got == want


def test_kmeans_deterministic_and_duplicate_points():
    pts = np.concatenate([np.zeros((10, 2)), np.full((1, 2), 8.0)])
    assign, centers = kmeans(pts, 2, seed=0)
    assert len(set(assign[:10])) == 1 and assign[10] != assign[0]
    a1, c1 = kmeans(np.random.default_rng(4).normal(size=(50, 2)), 3, seed=9)
    a2, c2 = kmeans(np.random.default_rng(4).normal(size=(50, 2)), 3, seed=9)
    assert np.array_equal(a1, a2) and np.array_equal(c1, c2)


def test_kmeans_all_identical_points():
    # degenerate input exercises the empty-cluster reseed without crashing
    pts = np.ones((8, 2))
    assign, centers = kmeans(pts, 2, seed=1)
    assert assign.shape == (8,)
    assert np.allclose(centers, 1.0)


def test_kmeans_too_few_points():
    with pytest.raises(ModelError):
        kmeans(np.zeros((2, 2)), 3)


# ----------------------------------------------------------- standardizer


def test_standardizer_roundtrip_and_moments():
    rng = np.random.default_rng(5)
    pts = rng.normal([2.0, -1.0], [3.0, 0.5], size=(500, 2))
    std = Standardizer.fit(pts)
    z = std.forward(pts)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-12)
    assert np.allclose(std.inverse(z), pts, atol=1e-12)


def test_standardizer_rejects_flat_axis():
    pts = np.stack([np.arange(5.0), np.full(5, 2.0)], axis=1)
    with pytest.raises(ModelError):
        Standardizer.fit(pts)


# ---------------------------------------------------------- image features


def test_image_features_shape_and_quadrant_order():
    img = np.zeros((48, 48, 3))
    img[:24, :24, 0] = 1.0  # top-left quadrant of the obstacle channel
    v = image_features(img)
    assert v.shape == (576,)
    assert np.all(v[:144] == 1.0) and np.all(v[144:] == 0.0)
    # bottom-right quadrant maps to the last block
    img2 = np.zeros((48, 48, 3))
    img2[24:, 24:, 0] = 1.0
    v2 = image_features(img2)
    assert np.all(v2[432:] == 1.0) and np.all(v2[:432] == 0.0)


def test_image_features_pools_2x2():
    img = np.zeros((48, 48, 3))
    img[0, 0, 0] = 1.0  # one hot pixel -> pooled cell value 0.25
    v = image_features(img)
    assert v[0] == 0.25 and np.all(v[1:] == 0.0)


def test_image_features_rejects_bad_shapes():
    with pytest.raises(ModelError):
        image_features(np.zeros((48, 48)))
    with pytest.raises(ModelError):
        image_features(np.zeros((46, 48, 3)))


# -------------------------------------------------------------------- kl


def test_kl_reference_values():
    zero = kl_gaussian(tensor(np.zeros((3, 4))), tensor(np.ones((3, 4))))
    assert abs(zero.item()) < 1e-12
    one = kl_gaussian(tensor(np.ones((1, 1))), tensor(np.ones((1, 1))))
    assert abs(one.item() - 1.0) < 1e-12


def test_kl_shape_of_the_sigma_well():
    # the regularizer sigma^2 - log(sigma) bottoms out at sigma = 1/sqrt(2),
    # slightly below zero; shrinking sigma further strictly raises the value
    mu = np.zeros((1, 1))

    def at(s):
        return kl_gaussian(tensor(mu), tensor(np.full((1, 1), s))).item()

    bottom = 0.5 + 0.5 * np.log(2.0) - 1.0
    assert abs(at(1.0 / np.sqrt(2.0)) - bottom) < 1e-12
    vals = [at(s) for s in (0.7, 0.5, 0.25, 0.1)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    rng = np.random.default_rng(2)
    for _ in range(20):
        sigma = rng.uniform(0.05, 3.0, size=(4, 3))
        total = kl_gaussian(tensor(rng.normal(size=(4, 3))), tensor(sigma)).item()
        assert total >= bottom * sigma.shape[1] - 1e-12


# ----------------------------------------------------------- vae networks


def test_encoder_outputs_positive_sigma():
    rng = np.random.default_rng(0)
    enc = Encoder.build(rng, 10, 8, 3)
    mu, sigma = enc(rng.normal(size=(5, 10)))
    assert mu.shape == (5, 3) and sigma.shape == (5, 3)
    assert np.all(sigma.data > 0)


def test_decoder_shape():
    rng = np.random.default_rng(1)
    dec = Decoder.build(rng, 3, 8, 10)
    out = dec(rng.normal(size=(4, 3)))
    assert out.shape == (4, 10)


# --------------------------------------------------- critic and generator


def test_critic_condition_is_live():
    rng = np.random.default_rng(3)
    critic = Critic.build(rng, 2, 16, 4)
    x = rng.normal(size=(6, 2))
    c1 = rng.normal(size=(6, 4))
    c2 = c1 + 1.0
    s1 = critic(x, c1)
    s2 = critic(x, c2)
    assert s1.shape == (6, 1)
    assert not np.allclose(s1.data, s2.data)


def test_generator_means_layout():
    rng = np.random.default_rng(4)
    gen = MeansGenerator.build(rng, 5, 16, 3, out_dim=2)
    z = rng.normal(size=(7, 5))
    means = gen(z)
    assert means.shape == (7, 6)
    for k in range(3):
        blk = gen.mean_k(means, k)
        assert np.array_equal(blk.data, means.data[:, 2 * k : 2 * k + 2])


def test_pick_means_selects_and_routes_gradient():
    rng = np.random.default_rng(5)
    gen = MeansGenerator.build(rng, 5, 16, 4, out_dim=2)
    means = tensor(rng.normal(size=(6, 8)))
    means.requires_grad = True
    picks = np.array([0, 3, 1, 2, 0, 3])
    x = pick_means(gen, means, picks)
    for i, k in enumerate(picks):
        assert np.array_equal(x.data[i], means.data[i, 2 * k : 2 * k + 2])
    (g,) = grad(x.sum(), [means])
    expect = np.zeros((6, 8))
    for i, k in enumerate(picks):
        expect[i, 2 * k : 2 * k + 2] = 1.0
    assert np.array_equal(g.data, expect)


def test_sample_states_spread_matches_sigma():
    rng = np.random.default_rng(6)
    gen = MeansGenerator.build(rng, 3, 8, 1, out_dim=2)
    z = np.tile(rng.normal(size=(1, 3)), (4000, 1))
    means = gen(tensor(z))
    states = sample_states(gen, means, np.random.default_rng(0), 0.025)
    spread = (states.data - means.data[:, :2]).std()
    assert abs(spread - 0.025) < 0.002
    exact = sample_states(gen, means, np.random.default_rng(0), 0.0)
    assert np.array_equal(exact.data, means.data[:, :2])


# ------------------------------------------------------------------ losses


def _critic_numpy(critic, x, cond):
    """Independent forward + input-gradient of the projection critic."""
    w1, b1 = critic.l1.w.data, critic.l1.b.data
    w2, b2 = critic.l2.w.data, critic.l2.b.data
    wh, bh = critic.head.w.data, critic.head.b.data
    wp, bp = critic.proj.w.data, critic.proj.b.data
    a1 = np.tanh(x @ w1 + b1)
    h = np.tanh(a1 @ w2 + b2)
    p = cond @ wp + bp
    score = h @ wh + bh + (h * p).sum(axis=1, keepdims=True)
    dh = (wh.T + p) * (1.0 - h * h)
    dx = (dh @ w2.T) * (1.0 - a1 * a1) @ w1.T
    return score, dx


def test_gradient_penalty_matches_numpy_oracle():
    rng = np.random.default_rng(7)
    critic = Critic.build(rng, 2, 12, 3)
    real = rng.normal(size=(9, 2))
    fake = tensor(rng.normal(size=(9, 2)))
    cond = rng.normal(size=(9, 3))
    pen = gradient_penalty(critic, real, fake, cond, np.random.default_rng(11), 10.0)
    t = np.random.default_rng(11).uniform(0.0, 1.0, size=(9, 1))
    x_hat = t * real + (1.0 - t) * fake.data
    _, dx = _critic_numpy(critic, x_hat, cond)
    norms = np.sqrt((dx * dx).sum(axis=1) + 1e-12)
    expect = 10.0 * ((norms - 1.0) ** 2).mean()
    assert abs(pen.item() - expect) < 1e-10


def test_critic_loss_numpy_replication():
    """Replicate every term of the cluster critic loss independently."""
    rng = np.random.default_rng(8)
    cfg = TrainConfig.desk(latent_dim=3, smooth_max_eps=0.01)
    gen = MeansGenerator.build(rng, 3, 8, cfg.k_means_per_cluster)
    critic = Critic.build(rng, 2, 10, 3)
    real = rng.normal(size=(12, 2))
    z_np = rng.normal(size=(12, 3))
    loss = critic_loss_cluster(critic, gen, real, tensor(z_np), cfg, np.random.default_rng(21))

    # replay the rng draws in the same order: picks, gauss noise, chord t
    rng2 = np.random.default_rng(21)
    picks = rng2.integers(cfg.k_means_per_cluster, size=12)
    noise = rng2.normal(0.0, cfg.sigma_gauss, size=(12, 2))
    t = rng2.uniform(0.0, 1.0, size=(12, 1))

    w1, b1 = gen.l1.w.data, gen.l1.b.data
    w2, b2 = gen.l2.w.data, gen.l2.b.data
    wo, bo = gen.out.w.data, gen.out.b.data
    means = np.tanh(np.tanh(z_np @ w1 + b1) @ w2 + b2) @ wo + bo
    fake = np.stack([means[i, 2 * k : 2 * k + 2] for i, k in enumerate(picks)]) + noise

    f_fake, _ = _critic_numpy(critic, fake, z_np)
    f_real, _ = _critic_numpy(critic, real, z_np)
    x_hat = t * real + (1.0 - t) * fake
    _, dx = _critic_numpy(critic, x_hat, z_np)
    norms = np.sqrt((dx * dx).sum(axis=1) + 1e-12)
    gp = cfg.lambda_gp * ((norms - 1.0) ** 2).mean()

    acc = _critic_numpy(critic, means[:, 0:2], z_np)[0]
    for k in range(1, cfg.k_means_per_cluster):
        s = _critic_numpy(critic, means[:, 2 * k : 2 * k + 2], z_np)[0]
        acc = 0.5 * (acc + s + np.sqrt((acc - s) ** 2 + cfg.smooth_max_eps**2))
    expect = f_fake.mean() - f_real.mean() + gp - acc.mean()
    assert abs(loss.item() - expect) < 1e-9


def test_critic_loss_single_mean_cancellation():
    # with one mean and no gaussian spread, fake == the mean, so the
    # smooth-max pull cancels the fake term: loss = gp - mean f(real)
    rng = np.random.default_rng(9)
    cfg = TrainConfig.desk(latent_dim=3, k_means_per_cluster=1, sigma_gauss=0.0)
    gen = MeansGenerator.build(rng, 3, 8, 1)
    critic = Critic.build(rng, 2, 10, 3)
    real = rng.normal(size=(8, 2))
    z = tensor(rng.normal(size=(8, 3)))
    loss = critic_loss_cluster(critic, gen, real, z, cfg, np.random.default_rng(33))
    rng2 = np.random.default_rng(33)
    rng2.integers(1, size=8)  # pick draw consumed even for k=1
    means = gen(z)
    fake = gen.mean_k(means, 0)
    gp = gradient_penalty(critic, real, fake, z, rng2, cfg.lambda_gp)
    f_real = critic(real, z).mean()
    assert abs(loss.item() - (gp.item() - f_real.item())) < 1e-10


def test_generator_loss_extra_critics():
    rng = np.random.default_rng(10)
    cfg = TrainConfig.desk(latent_dim=3)
    gen = MeansGenerator.build(rng, 3, 8, cfg.k_means_per_cluster)
    critic = Critic.build(rng, 2, 10, 3)
    other = Critic.build(rng, 2, 10, 3)
    z = tensor(rng.normal(size=(6, 3)))

    plain = generator_loss(critic, gen, z, cfg, np.random.default_rng(1))
    with_one = generator_loss(critic, gen, z, cfg, np.random.default_rng(1), (other,))
    assert abs(plain.item() - with_one.item()) > 1e-12

    # duplicated critics are averaged, so [c] and [c, c] agree
    two_same = generator_loss(critic, gen, z, cfg, np.random.default_rng(1), (other, other))
    assert abs(with_one.item() - two_same.item()) < 1e-12

    # the extra term changes the generator gradient, not just the value
    g_plain = grad(generator_loss(critic, gen, z, cfg, np.random.default_rng(1)), gen.params)
    g_extra = grad(
        generator_loss(critic, gen, z, cfg, np.random.default_rng(1), (other,)), gen.params
    )
    assert any(not np.allclose(a.data, b.data) for a, b in zip(g_plain, g_extra))


# --------------------------------------------------------- 4d embedding


def test_embed_project_roundtrip():
    rng = np.random.default_rng(11)
    angles = rng.uniform(-np.pi, np.pi, size=(50, 2))
    emb = embed_path(angles)
    assert emb.shape == (50, 4)
    assert np.allclose(project_4d(emb), angles, atol=1e-12)
    assert np.allclose(embed_path(project_4d(emb)), emb, atol=1e-12)


def test_embed_reference_and_wrap():
    assert np.allclose(embed_path(np.zeros((1, 2))), [[0.0, 1.0, 0.0, 1.0]])
    lo = embed_path(np.array([[-np.pi, -np.pi]]))
    hi = embed_path(np.array([[np.pi, np.pi]]))
    assert np.allclose(lo, hi, atol=1e-12)


def test_project_rejects_zero_norm():
    with pytest.raises(ModelError):
        project_4d(np.zeros((1, 4)))
    with pytest.raises(ModelError):
        embed_path(np.zeros((3, 3)))


def test_project_tensor_matches_numpy_and_differentiates():
    rng = np.random.default_rng(12)
    angles = rng.uniform(-3.0, 3.0, size=(8, 2))
    emb = embed_path(angles)
    v = tensor(emb)
    v.requires_grad = True
    out = project_4d_tensor(v)
    assert np.allclose(out.data, angles, atol=1e-12)
    (g,) = grad(out.sum(), [v])
    h = 1e-6
    for idx in [(0, 0), (3, 2), (7, 1)]:
        bumped = emb.copy()
        bumped[idx] += h
        fd = (project_4d(bumped).sum() - angles.sum()) / h
        assert abs(g.data[idx] - fd) < 1e-5


# ------------------------------------------------------------------ bundle


def test_bundle_save_load_roundtrip(tmp_path):
    cfg = TrainConfig.desk(latent_dim=4, enc_hidden=8, gen_hidden=6, critic_hidden=6)
    std = Standardizer((0.1, -0.2), (1.5, 2.0))
    bundle = ModelBundle.build(cfg, 576, std, seed=2)
    stem = tmp_path / "bundle"
    bundle.save(stem)
    loaded = ModelBundle.load(stem)
    assert loaded.config == cfg
    assert loaded.standardizer == std
    assert loaded.feature_dim == 576
    assert len(loaded.clusters) == cfg.clusters
    a = bundle.param_set()
    b = loaded.param_set()
    assert a.names() == b.names()
    for name in a.names():
        assert np.array_equal(
            a[name].data.astype(np.float32), b[name].data.astype(np.float32)
        )


def test_bundle_load_rejects_other_manifests(tmp_path):
    from csrecon.nn import ParamSet
    from csrecon.autodiff import Tensor

    ps = ParamSet()
    ps.register("w", Tensor(np.zeros((2, 2)), requires_grad=True))
    ps.save(tmp_path / "raw", hyper={"bundle_format": "something-else"}, seed=0)
    with pytest.raises(ModelError):
        ModelBundle.load(tmp_path / "raw")
