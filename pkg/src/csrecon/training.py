"""Training loops: VAE, cluster WGAN-GP, global WGAN-GP, path generator.

Every loop draws all randomness from numpy SeedSequence spawns, so a
(dataset, config, seed) triple reproduces training bit for bit. Non-finite
losses surface as TrainingError immediately.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import grad, tensor
from .models import (
    ClusterModel,
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
    image_features,
    kl_gaussian,
    kmeans,
    project_4d,
    project_4d_tensor,
)
from .nn import Adam, reparameterize
from .scene import CsDataset


class TrainingError(RuntimeError):
    """Training diverged or its inputs were unusable."""


def _check_finite(loss, where: str):
    v = loss.item()
    if not np.isfinite(v):
        raise TrainingError(f"non-finite loss in {where}")
    return v


def dataset_features(dataset: CsDataset) -> np.ndarray:
    """Encoder input matrix, one row per scenario."""
    return np.stack([image_features(e.image) for e in dataset.entries])


# --------------------------------------------------------------------- vae


def train_vae(dataset: CsDataset, cfg: TrainConfig, seed=None):
    """Train encoder and decoder on scenario images.

    Loss per batch: pixel MSE of the reconstructed feature vector plus
    beta_kl times the analytic KL to the unit Gaussian. Returns
    (encoder, decoder, per-epoch loss curve).
    """
    feats = dataset_features(dataset)
    n, dim = feats.shape
    base = np.random.SeedSequence(cfg.seed if seed is None else seed)
    init_rng, batch_rng, noise_rng = (np.random.default_rng(s) for s in base.spawn(3))

    enc = Encoder.build(init_rng, dim, cfg.enc_hidden, cfg.latent_dim)
    dec = Decoder.build(init_rng, cfg.latent_dim, cfg.enc_hidden, dim)
    params = enc.params + dec.params
    opt = Adam(params, lr=cfg.lr)

    m = min(cfg.batch, n)
    curve = []
    for _ in range(cfg.vae_epochs):
        order = batch_rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, m):
            idx = order[lo : lo + m]
            x = tensor(feats[idx])
            mu, sigma = enc(x)
            z = reparameterize(mu, sigma, noise_rng.standard_normal(mu.shape))
            recon = dec(z)
            loss = ((recon - x) ** 2).mean() + cfg.beta_kl * kl_gaussian(mu, sigma)
            epoch_losses.append(_check_finite(loss, "train_vae"))
            opt.step(grad(loss, params))
        curve.append(float(np.mean(epoch_losses)))
    return enc, dec, curve


def encode_scenarios(encoder: Encoder, dataset: CsDataset):
    """Frozen posterior parameters per scenario, as plain arrays."""
    feats = dataset_features(dataset)
    mu, sigma = encoder(tensor(feats))
    return mu.data.copy(), sigma.data.copy()


# ---------------------------------------------------------- wgan utilities


def pooled_free_samples(dataset: CsDataset):
    """Stack all free configurations; returns (points, scenario_index)."""
    pts, scen = [], []
    for i, e in enumerate(dataset.entries):
        pts.append(np.asarray(e.free, dtype=float))
        scen.append(np.full(len(e.free), i))
    if not pts:
        raise TrainingError("dataset holds no scenarios")
    return np.concatenate(pts), np.concatenate(scen)


def _batch_indices(rng, size, m):
    if size >= m:
        return rng.choice(size, size=m, replace=False)
    warnings.warn(f"cluster holds {size} < batch {m} samples; sampling with replacement")
    return rng.choice(size, size=m, replace=True)


def _draw_z(mu, sigma, scen_idx, rng, perturb=0.0):
    noise = rng.standard_normal((len(scen_idx), mu.shape[1]))
    return tensor(mu[scen_idx] + (sigma[scen_idx] + perturb) * noise)


@dataclass
class WganCurves:
    critic: list
    generator: list


def _train_pair(
    gen,
    critic,
    data_std,
    scen_idx,
    mu,
    sigma,
    cfg: TrainConfig,
    rng,
    extra_critics=(),
    tag="wgan",
    include_pull=True,
):
    """n_critic critic steps per generator step, over cfg.epochs passes."""
    opt_c = Adam(critic.params, lr=cfg.lr)
    opt_g = Adam(gen.params, lr=cfg.lr)
    m = cfg.batch
    steps_per_epoch = max(1, len(data_std) // m)
    curves = WganCurves([], [])
    for _ in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            for _ in range(cfg.n_critic):
                idx = _batch_indices(rng, len(data_std), m)
                z = _draw_z(mu, sigma, scen_idx[idx], rng)
                loss_c = critic_loss_cluster(
                    critic, gen, data_std[idx], z, cfg, rng,
                    include_pull=include_pull,
                )
                curves.critic.append(_check_finite(loss_c, f"{tag} critic"))
                opt_c.step(grad(loss_c, critic.params))
            idx = _batch_indices(rng, len(data_std), m)
            z = _draw_z(mu, sigma, scen_idx[idx], rng)
            loss_g = generator_loss(critic, gen, z, cfg, rng, extra_critics)
            curves.generator.append(_check_finite(loss_g, f"{tag} generator"))
            opt_g.step(grad(loss_g, gen.params))
    return curves


# ------------------------------------------------------------ multi wgan


def train_multiwgan(dataset: CsDataset, encoder: Encoder, cfg: TrainConfig, seed=None):
    """Per-cluster Gaussian-means WGAN-GP training.

    Pools standardized free samples, k-means partitions them into
    cfg.clusters groups, then trains one (generator, critic) pair per
    cluster with the encoder frozen. Returns (cluster models, standardizer,
    assignments, curves per cluster).
    """
    pts, scen = pooled_free_samples(dataset)
    std = Standardizer.fit(pts)
    pts_std = std.forward(pts)

    base = np.random.SeedSequence(cfg.seed if seed is None else seed)
    km_seed, *cluster_seeds = base.spawn(1 + cfg.clusters)
    assign, _ = kmeans(pts_std, cfg.clusters, seed=km_seed)
    mu, sigma = encode_scenarios(encoder, dataset)

    clusters, curves = [], []
    for j in range(cfg.clusters):
        rng = np.random.default_rng(cluster_seeds[j])
        mask = assign == j
        if not np.any(mask):
            raise TrainingError(f"k-means produced an empty cluster {j}")
        gen = MeansGenerator.build(rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster)
        critic = Critic.build(rng, 2, cfg.critic_hidden, cfg.latent_dim)
        curves.append(
            _train_pair(
                gen, critic, pts_std[mask], scen[mask], mu, sigma, cfg, rng,
                tag=f"cluster{j}",
            )
        )
        clusters.append(ClusterModel(gen, critic, j))
    return clusters, std, assign, curves


def train_global(
    dataset: CsDataset,
    encoder: Encoder,
    clusters,
    cfg: TrainConfig,
    include_local=True,
    seed=None,
):
    """Whole-dataset WGAN-GP (one cluster, no Gaussian spread).

    The generator loss optionally adds the frozen per-cluster critics'
    mean scores, weighted 1/l, steering the global generator toward
    regions the local critics rate as real. The critic here trains on the
    plain WGAN-GP objective, without the smooth-max pull used by the
    cluster stage.
    """
    pts, scen = pooled_free_samples(dataset)
    std = Standardizer.fit(pts)
    pts_std = std.forward(pts)
    cfg0 = replace(cfg, sigma_gauss=0.0, clusters=1)
    base = np.random.SeedSequence(cfg.seed if seed is None else seed)
    (pair_seed,) = base.spawn(1)
    rng = np.random.default_rng(pair_seed)
    mu, sigma = encode_scenarios(encoder, dataset)
    gen = MeansGenerator.build(rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster)
    critic = Critic.build(rng, 2, cfg.critic_hidden, cfg.latent_dim)
    extra = tuple(cm.critic for cm in clusters) if include_local else ()
    curves = _train_pair(
        gen, critic, pts_std, scen, mu, sigma, cfg0, rng, extra_critics=extra,
        tag="global", include_pull=False,
    )
    return gen, critic, std, curves


# ---------------------------------------------------------------- sampling


def sample_cs_states(
    bundle: ModelBundle, image: np.ndarray, n: int, sigma_perturb=0.0, seed=0,
    source="clusters",
):
    """Generate n CS states for a scenario image.

    Encodes the image, draws latent conditions z ~ N(mu, (sigma + perturb)^2),
    queries the generators, spreads each mean by sigma_gauss, and
    unstandardizes back to the angle square. source picks the cluster union
    or the global generator.
    """
    if n < 1:
        raise ModelError("n must be >= 1")
    if source == "clusters":
        gens = [cm.generator for cm in bundle.clusters]
    elif source == "global":
        gens = [bundle.global_generator]
    else:
        raise ModelError(f"unknown source {source!r}")
    if not gens:
        raise ModelError("bundle holds no generators for this source")

    cfg = bundle.config
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    feats = image_features(image)
    mu_t, sigma_t = bundle.encoder(tensor(feats.reshape(1, -1)))
    mu, sigma = mu_t.data[0], sigma_t.data[0]

    per_round = len(gens) * cfg.k_means_per_cluster
    rounds = -(-n // per_round)
    out = []
    for _ in range(rounds):
        noise = rng.standard_normal(len(mu))
        z = (mu + (sigma + sigma_perturb) * noise).reshape(1, -1)
        for g in gens:
            means = g(tensor(z)).data.reshape(cfg.k_means_per_cluster, 2)
            spread = (
                rng.normal(0.0, cfg.sigma_gauss, size=means.shape)
                if cfg.sigma_gauss > 0
                else 0.0
            )
            out.append(means + spread)
    states = np.concatenate(out)[:n]
    return bundle.standardizer.inverse(states)


# ------------------------------------------------------------ path model


@dataclass
class PathModel:
    """4-D waypoint generator with its critic and angle standardizer."""

    generator: MeansGenerator
    critic: Critic
    config: TrainConfig


def train_path_generator(
    paths,
    path_scenarios,
    dataset: CsDataset,
    encoder: Encoder,
    cfg: TrainConfig,
    cs_clusters=None,
    cs_standardizer: Standardizer = None,
    seed=None,
):
    """WGAN-GP over path waypoints embedded on the 4-D angle manifold.

    paths is a list of (n_i, 2) angle paths; path_scenarios gives each
    path's scenario index into the dataset. When cs_clusters is supplied,
    the frozen CS critics score the generator's projected angles (after
    standardizing with cs_standardizer), added to the generator loss.
    """
    if len(paths) != len(path_scenarios):
        raise TrainingError("paths and path_scenarios lengths differ")
    if not paths:
        raise TrainingError("no paths to train on")
    wp, scen = [], []
    for path, s in zip(paths, path_scenarios):
        emb = embed_path(np.asarray(path, float))
        wp.append(emb)
        scen.append(np.full(len(emb), int(s)))
    wp = np.concatenate(wp)
    scen = np.concatenate(scen)

    base = np.random.SeedSequence(cfg.seed if seed is None else seed)
    (pair_seed,) = base.spawn(1)
    rng = np.random.default_rng(pair_seed)
    mu, sigma = encode_scenarios(encoder, dataset)
    gen = MeansGenerator.build(
        rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster, out_dim=4
    )
    critic = Critic.build(rng, 4, cfg.critic_hidden, cfg.latent_dim)

    extra = ()
    if cs_clusters:
        if cs_standardizer is None:
            raise TrainingError("cs_standardizer required with cs_clusters")
        off = tensor(np.array(cs_standardizer.mean).reshape(1, 2))
        sc = tensor(np.array(cs_standardizer.scale).reshape(1, 2))

        def wrap(cs_critic):
            def scored(x4, z):
                ang = project_4d_tensor(x4)
                return cs_critic((ang - off) / sc, z)

            return scored

        extra = tuple(wrap(cm.critic) for cm in cs_clusters)

    curves = _train_pair(
        gen, critic, wp, scen, mu, sigma, cfg, rng, extra_critics=extra, tag="path"
    )
    return PathModel(gen, critic, cfg), curves


def sample_path_states(
    model: PathModel, encoder: Encoder, image: np.ndarray, n: int,
    sigma_perturb=0.0, seed=0,
):
    """Sample waypoint suggestions as angles, via the 4-D generator."""
    cfg = model.config
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    feats = image_features(image)
    mu_t, sigma_t = encoder(tensor(feats.reshape(1, -1)))
    mu, sigma = mu_t.data[0], sigma_t.data[0]
    rounds = -(-n // cfg.k_means_per_cluster)
    out = []
    for _ in range(rounds):
        noise = rng.standard_normal(len(mu))
        z = (mu + (sigma + sigma_perturb) * noise).reshape(1, -1)
        means = model.generator(tensor(z)).data.reshape(cfg.k_means_per_cluster, 4)
        if cfg.sigma_gauss > 0:
            means = means + rng.normal(0.0, cfg.sigma_gauss, size=means.shape)
        out.append(means)
    emb = np.concatenate(out)[:n]
    return project_4d(emb)


# ----------------------------------------------------------- joint variant


def train_multiwgan_joint(dataset: CsDataset, cfg: TrainConfig, seed=None):
    """Joint VAE + WGAN-GP training (the documented failure mode).

    The encoder trains inside the adversarial loop instead of beforehand:
    generator steps also minimize reconstruction + KL through a decoder.
    Kept runnable for reproducing the negative result; expect poor
    reconstructions compared to the two-stage pipeline.
    """
    feats = dataset_features(dataset)
    pts, scen = pooled_free_samples(dataset)
    std = Standardizer.fit(pts)
    pts_std = std.forward(pts)

    base = np.random.SeedSequence(cfg.seed if seed is None else seed)
    init_seed, km_seed, loop_seed = base.spawn(3)
    init_rng = np.random.default_rng(init_seed)
    rng = np.random.default_rng(loop_seed)
    assign, _ = kmeans(pts_std, cfg.clusters, seed=km_seed)

    enc = Encoder.build(init_rng, feats.shape[1], cfg.enc_hidden, cfg.latent_dim)
    dec = Decoder.build(init_rng, cfg.latent_dim, cfg.enc_hidden, feats.shape[1])

    clusters = []
    for j in range(cfg.clusters):
        gen = MeansGenerator.build(init_rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster)
        critic = Critic.build(init_rng, 2, cfg.critic_hidden, cfg.latent_dim)
        opt_c = Adam(critic.params, lr=cfg.lr)
        joint = gen.params + enc.params + dec.params
        opt_g = Adam(joint, lr=cfg.lr)
        mask = assign == j
        data = pts_std[mask]
        scen_j = scen[mask]
        m = min(cfg.batch, len(data))
        for _ in range(cfg.epochs):
            for _ in range(max(1, len(data) // m)):
                for _ in range(cfg.n_critic):
                    idx = _batch_indices(rng, len(data), m)
                    x_feats = tensor(feats[scen_j[idx]])
                    mu_t, sigma_t = enc(x_feats)
                    z = reparameterize(
                        mu_t, sigma_t, rng.standard_normal((m, cfg.latent_dim))
                    )
                    loss_c = critic_loss_cluster(critic, gen, data[idx], z, cfg, rng)
                    _check_finite(loss_c, "joint critic")
                    opt_c.step(grad(loss_c, critic.params))
                idx = _batch_indices(rng, len(data), m)
                x_feats = tensor(feats[scen_j[idx]])
                mu_t, sigma_t = enc(x_feats)
                z = reparameterize(
                    mu_t, sigma_t, rng.standard_normal((m, cfg.latent_dim))
                )
                recon = dec(z)
                vae_part = ((recon - x_feats) ** 2).mean() + cfg.beta_kl * kl_gaussian(
                    mu_t, sigma_t
                )
                loss_g = generator_loss(critic, gen, z, cfg, rng) + vae_part
                _check_finite(loss_g, "joint generator")
                opt_g.step(grad(loss_g, joint))
        clusters.append(ClusterModel(gen, critic, j))
    return clusters, enc, dec, std, assign
