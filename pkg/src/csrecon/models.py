"""Networks and losses for configuration-space reconstruction.

The generative stack is a VAE encoder conditioning a set of Wasserstein
critics and Gaussian-means generators: per-cluster models learn local CS
structure, a global pair stitches them together, and a separate generator
learns path waypoints in a 4-D angle embedding.

All forward passes are built from autodiff Tensors so critic losses with
gradient penalties stay twice differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor, grad, smooth_max, tensor
from .nn import Dense, ParamSet


class ModelError(ValueError):
    """Invalid model construction or query."""


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs; the desk profile shrinks widths and batches."""

    lr: float = 4e-5
    batch: int = 512
    lambda_gp: float = 10.0
    n_critic: int = 5
    k_means_per_cluster: int = 4
    latent_dim: int = 512
    sigma_gauss: float = 0.025
    clusters: int = 2
    smooth_max_eps: float = 0.01
    beta_kl: float = 1.0
    epochs: int = 100
    vae_epochs: int = 200
    enc_hidden: int = 256
    gen_hidden: int = 128
    critic_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.lambda_gp <= 0 or self.smooth_max_eps <= 0:
            raise ModelError("lr, lambda_gp, smooth_max_eps must be positive")
        if self.sigma_gauss < 0 or self.beta_kl < 0:
            raise ModelError("sigma_gauss and beta_kl must be >= 0")
        if self.clusters < 1 or self.k_means_per_cluster < 1:
            raise ModelError("need at least one cluster and one mean")
        if min(self.batch, self.n_critic, self.latent_dim, self.epochs) < 1:
            raise ModelError("batch, n_critic, latent_dim, epochs must be >= 1")

    @staticmethod
    def paper(**overrides) -> "TrainConfig":
        return replace(TrainConfig(), **overrides)

    @staticmethod
    def desk(**overrides) -> "TrainConfig":
        base = TrainConfig(
            lr=2e-4,
            batch=64,
            latent_dim=8,
            beta_kl=0.05,
            epochs=60,
            vae_epochs=300,
            enc_hidden=64,
            gen_hidden=32,
            critic_hidden=32,
        )
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


# ------------------------------------------------------------------ kmeans


def kmeans(points: np.ndarray, k: int, seed=0):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (assignments, centers). Empty clusters are re-seeded at the
    point farthest from its current center. Deterministic per seed.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < k:
        raise ModelError(f"need at least {k} points, got shape {pts.shape}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(len(pts))]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = centers[0]
            break
        centers[j] = pts[rng.choice(len(pts), p=d2 / total)]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))

    for _ in range(500):
        dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        assign = dist.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = pts[assign == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
            else:
                far = np.argmax(dist[np.arange(len(pts)), assign])
                new_centers[j] = pts[far]
        shift = np.max(np.linalg.norm(new_centers - centers, axis=1))
        centers = new_centers
        if shift < 1e-6:
            break
    dist = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    return dist.argmin(axis=1), centers


# ------------------------------------------------------- standardization


@dataclass(frozen=True)
class Standardizer:
    """Affine map of joint angles to zero-mean unit-scale coordinates."""

    mean: tuple
    scale: tuple

    @staticmethod
    def fit(points: np.ndarray) -> "Standardizer":
        pts = np.asarray(points, dtype=float)
        if len(pts) < 2:
            raise ModelError("need at least 2 points to standardize")
        mean = pts.mean(axis=0)
        scale = pts.std(axis=0)
        if np.any(scale <= 0):
            raise ModelError("degenerate axis: zero standard deviation")
        return Standardizer(tuple(float(v) for v in mean), tuple(float(v) for v in scale))

    def forward(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, float) - np.array(self.mean)) / np.array(self.scale)

    def inverse(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, float) * np.array(self.scale) + np.array(self.mean)


# ------------------------------------------------------------ image input


def image_features(image: np.ndarray) -> np.ndarray:
    """Flatten the obstacle channel to the encoder's input vector.

    The 48x48 obstacle channel is average-pooled 2x2 down to 24x24, then
    split into four 12x12 quadrants that are concatenated row-major, giving
    a 576-vector. The quadrant layout keeps each image region contiguous.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 3 or img.shape[2] < 1:
        raise ModelError(f"expected an image of shape (h, w, c), got {img.shape}")
    occ = img[:, :, 0]
    h, w = occ.shape
    if h % 4 or w % 4:
        raise ModelError("image sides must be divisible by 4")
    pooled = occ.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    ph, pw = pooled.shape
    quads = [
        pooled[: ph // 2, : pw // 2],
        pooled[: ph // 2, pw // 2 :],
        pooled[ph // 2 :, : pw // 2],
        pooled[ph // 2 :, pw // 2 :],
    ]
    return np.concatenate([q.ravel() for q in quads])


# ----------------------------------------------------------- vae networks


class Encoder:
    """Feature vector -> posterior (mu, sigma); sigma through softplus."""

    def __init__(self, trunk: Dense, head_mu: Dense, head_sigma: Dense):
        self.trunk = trunk
        self.head_mu = head_mu
        self.head_sigma = head_sigma

    @staticmethod
    def build(rng, n_in, hidden, latent) -> "Encoder":
        return Encoder(
            Dense.build(rng, n_in, hidden),
            Dense.build(rng, hidden, latent),
            Dense.build(rng, hidden, latent),
        )

    def __call__(self, x) -> tuple:
        h = ad.tanh(self.trunk(as_tensor(x)))
        mu = self.head_mu(h)
        sigma = ad.softplus(self.head_sigma(h))
        return mu, sigma

    @property
    def params(self):
        return self.trunk.params + self.head_mu.params + self.head_sigma.params


class Decoder:
    """Latent -> reconstructed feature vector."""

    def __init__(self, l1: Dense, l2: Dense):
        self.l1 = l1
        self.l2 = l2

    @staticmethod
    def build(rng, latent, hidden, n_out) -> "Decoder":
        return Decoder(Dense.build(rng, latent, hidden), Dense.build(rng, hidden, n_out))

    def __call__(self, z) -> Tensor:
        return self.l2(ad.tanh(self.l1(as_tensor(z))))

    @property
    def params(self):
        return self.l1.params + self.l2.params


def kl_gaussian(mu: Tensor, sigma: Tensor) -> Tensor:
    """sum over dimensions of sigma^2 + mu^2 - log(sigma) - 1, batch mean."""
    per_row = (sigma * sigma + mu * mu - ad.log(sigma) - 1.0).sum(axis=1)
    return per_row.mean()


# --------------------------------------------------- critic and generator


class Critic:
    """Twice-differentiable scalar critic with projection conditioning.

    score(x, c) = psi(h(x)) + <h(x), c @ We> where h is the penultimate
    tanh feature vector. The projection term injects the condition without
    breaking double backprop.
    """

    def __init__(self, l1: Dense, l2: Dense, head: Dense, proj: Dense):
        self.l1 = l1
        self.l2 = l2
        self.head = head
        self.proj = proj

    @staticmethod
    def build(rng, n_in, hidden, cond_dim) -> "Critic":
        return Critic(
            Dense.build(rng, n_in, hidden),
            Dense.build(rng, hidden, hidden),
            Dense.build(rng, hidden, 1),
            Dense.build(rng, cond_dim, hidden),
        )

    def __call__(self, x, cond) -> Tensor:
        h = ad.tanh(self.l2(ad.tanh(self.l1(as_tensor(x)))))
        p = (h * self.proj(as_tensor(cond))).sum(axis=1, keepdims=True)
        return self.head(h) + p

    @property
    def params(self):
        return self.l1.params + self.l2.params + self.head.params + self.proj.params


class MeansGenerator:
    """Latent condition -> K cluster-local means, in standardized units."""

    def __init__(self, l1: Dense, l2: Dense, out: Dense, k_means: int, out_dim: int):
        self.l1 = l1
        self.l2 = l2
        self.out = out
        self.k_means = k_means
        self.out_dim = out_dim

    @staticmethod
    def build(rng, latent, hidden, k_means, out_dim=2) -> "MeansGenerator":
        return MeansGenerator(
            Dense.build(rng, latent, hidden),
            Dense.build(rng, hidden, hidden),
            Dense.build(rng, hidden, k_means * out_dim),
            k_means,
            out_dim,
        )

    def __call__(self, z) -> Tensor:
        """All K means, flattened per row: (batch, K * out_dim)."""
        h = ad.tanh(self.l2(ad.tanh(self.l1(as_tensor(z)))))
        return self.out(h)

    def mean_k(self, means: Tensor, k: int) -> Tensor:
        return means.narrow(1, k * self.out_dim, self.out_dim)

    @property
    def params(self):
        return self.l1.params + self.l2.params + self.out.params


def pick_means(gen: MeansGenerator, means: Tensor, picks: np.ndarray) -> Tensor:
    """Select one of the K means per row, differentiably.

    picks holds per-row mean indices. Implemented as a mask-and-fold so the
    gradient reaches only the selected blocks.
    """
    m, d, k = means.shape[0], gen.out_dim, gen.k_means
    mask = np.zeros((m, k * d))
    for j in range(d):
        mask[np.arange(m), picks * d + j] = 1.0
    fold = np.tile(np.eye(d), (k, 1))  # (K*d, d) sums the selected block
    return ad.matmul(means * tensor(mask), tensor(fold))


def sample_states(
    gen: MeansGenerator, means: Tensor, rng: np.random.Generator, sigma: float
) -> Tensor:
    """Draw one state per row: a uniformly picked mean plus N(0, sigma^2)."""
    m = means.shape[0]
    picks = rng.integers(gen.k_means, size=m)
    x = pick_means(gen, means, picks)
    if sigma > 0:
        x = x + tensor(rng.normal(0.0, sigma, size=(m, gen.out_dim)))
    return x


# ------------------------------------------------------------------ losses


def gradient_penalty(critic, real: np.ndarray, fake: Tensor, cond, rng, lam: float):
    """lambda * mean((||d critic/d x_hat|| - 1)^2), x_hat on chords.

    x_hat = t * real + (1 - t) * fake with per-row t ~ U[0,1]. The returned
    scalar stays attached to the graph (double backprop).
    """
    t = rng.uniform(0.0, 1.0, size=(len(real), 1))
    # chord points are leaves: the penalty trains the critic, not the generator
    x_hat = Tensor(t * real + (1.0 - t) * fake.data, requires_grad=True)
    score = critic(x_hat, cond).sum()
    (gx,) = grad(score, [x_hat], create_graph=True)
    norms = ad.sqrt((gx * gx).sum(axis=1) + 1e-12)
    return ((norms - 1.0) ** 2).mean() * lam


def critic_loss_cluster(
    critic, gen, real_std: np.ndarray, z: Tensor, cfg: TrainConfig, rng,
    include_pull: bool = True,
) -> Tensor:
    """Wasserstein critic loss with gradient penalty and smooth-max pull.

    mean f(fake) - mean f(real) + lambda * GP - S_eps over the K generated
    means' critic scores (batch mean). Minimized in the critic parameters.
    The global training stage drops the pull term (include_pull=False); its
    critic then sees the plain WGAN-GP objective.
    """
    means = gen(z)
    fake = sample_states(gen, means, rng, cfg.sigma_gauss)
    f_fake = critic(fake, z).mean()
    f_real = critic(tensor(real_std), z).mean()
    gp = gradient_penalty(critic, real_std, fake, z, rng, cfg.lambda_gp)
    loss = f_fake - f_real + gp
    if include_pull:
        per_mean_scores = [
            critic(gen.mean_k(means, k), z) for k in range(gen.k_means)
        ]
        loss = loss - smooth_max(per_mean_scores, eps=cfg.smooth_max_eps).mean()
    return loss


def generator_loss(
    critic, gen, z: Tensor, cfg: TrainConfig, rng, extra_critics=()
) -> Tensor:
    """-mean f(fake); frozen extra critics add their mean scores (negated)."""
    means = gen(z)
    fake = sample_states(gen, means, rng, cfg.sigma_gauss)
    loss = -critic(fake, z).mean()
    for fc in extra_critics:
        loss = loss - fc(fake, z).mean() * (1.0 / max(1, len(extra_critics)))
    return loss


# ------------------------------------------------------- angle embedding


def embed_path(path: np.ndarray) -> np.ndarray:
    """(n, 2) joint angles -> (n, 4) embedding (sin, cos) per angle."""
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ModelError(f"expected (n, 2) angles, got {p.shape}")
    return np.stack(
        [np.sin(p[:, 0]), np.cos(p[:, 0]), np.sin(p[:, 1]), np.cos(p[:, 1])], axis=1
    )


def project_4d(v: np.ndarray) -> np.ndarray:
    """(n, 4) embedded states -> (n, 2) angles via atan2 per pair."""
    w = np.asarray(v, dtype=float)
    if w.ndim != 2 or w.shape[1] != 4:
        raise ModelError(f"expected (n, 4) embedded states, got {w.shape}")
    n0 = np.hypot(w[:, 0], w[:, 1])
    n1 = np.hypot(w[:, 2], w[:, 3])
    if np.any(n0 < 1e-8) or np.any(n1 < 1e-8):
        raise ModelError("zero-norm (sin, cos) pair cannot be projected")
    return np.stack(
        [np.arctan2(w[:, 0], w[:, 1]), np.arctan2(w[:, 2], w[:, 3])], axis=1
    )


def project_4d_tensor(v: Tensor) -> Tensor:
    """Differentiable projection of (n, 4) embeddings to (n, 2) angles."""
    a0 = ad.atan2(v.narrow(1, 0, 1), v.narrow(1, 1, 1))
    a1 = ad.atan2(v.narrow(1, 2, 1), v.narrow(1, 3, 1))
    return ad.concat([a0, a1], axis=1)


# ------------------------------------------------------------ model bundle


@dataclass
class ClusterModel:
    generator: MeansGenerator
    critic: Critic
    index: int


BUNDLE_FORMAT = "csrecon-bundle-v1"


@dataclass
class ModelBundle:
    """Everything needed to sample CS states for a scenario image."""

    encoder: Encoder
    decoder: Decoder
    clusters: list
    global_generator: MeansGenerator
    global_critic: Critic
    standardizer: Standardizer
    config: TrainConfig
    feature_dim: int

    def param_set(self) -> ParamSet:
        ps = ParamSet()
        ps.register_many("encoder", self.encoder.params)
        ps.register_many("decoder", self.decoder.params)
        for cm in self.clusters:
            ps.register_many(f"cluster{cm.index}.gen", cm.generator.params)
            ps.register_many(f"cluster{cm.index}.critic", cm.critic.params)
        ps.register_many("global.gen", self.global_generator.params)
        ps.register_many("global.critic", self.global_critic.params)
        return ps

    def save(self, stem):
        hyper = {
            "bundle_format": BUNDLE_FORMAT,
            "config": self.config.to_dict(),
            "feature_dim": self.feature_dim,
            "standardizer": {
                "mean": list(self.standardizer.mean),
                "scale": list(self.standardizer.scale),
            },
            "n_clusters": len(self.clusters),
        }
        self.param_set().save(stem, hyper=hyper, seed=self.config.seed)

    @staticmethod
    def build(cfg: TrainConfig, feature_dim: int, standardizer: Standardizer, seed=None):
        """Architecture from config; weights from the seeded generator."""
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        enc = Encoder.build(rng, feature_dim, cfg.enc_hidden, cfg.latent_dim)
        dec = Decoder.build(rng, cfg.latent_dim, cfg.enc_hidden, feature_dim)
        clusters = [
            ClusterModel(
                MeansGenerator.build(
                    rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster
                ),
                Critic.build(rng, 2, cfg.critic_hidden, cfg.latent_dim),
                j,
            )
            for j in range(cfg.clusters)
        ]
        g_gen = MeansGenerator.build(
            rng, cfg.latent_dim, cfg.gen_hidden, cfg.k_means_per_cluster
        )
        g_critic = Critic.build(rng, 2, cfg.critic_hidden, cfg.latent_dim)
        return ModelBundle(
            enc, dec, clusters, g_gen, g_critic, standardizer, cfg, feature_dim
        )

    @staticmethod
    def load(stem) -> "ModelBundle":
        ps, manifest = ParamSet.load(stem)
        hyper = manifest["hyper"]
        if hyper.get("bundle_format") != BUNDLE_FORMAT:
            raise ModelError(f"not a model bundle: {hyper.get('bundle_format')!r}")
        cfg = TrainConfig.from_dict(hyper["config"])
        std = Standardizer(
            tuple(hyper["standardizer"]["mean"]), tuple(hyper["standardizer"]["scale"])
        )
        bundle = ModelBundle.build(cfg, hyper["feature_dim"], std)
        bundle.param_set().load_values_from(ps)
        return bundle
