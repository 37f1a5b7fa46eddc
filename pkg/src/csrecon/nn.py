"""Dense layers, parameter sets, Adam, and checkpoint files.

Checkpoints are a JSON manifest (names, shapes, hyperparameters, seed)
next to a flat little-endian float32 blob. Parameters live in float64 in
memory and are cast to float32 on save, so load-save round-trips are
byte-identical.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .autodiff import Tensor, add, as_tensor, matmul, mul, relu, sigmoid, softplus, tanh

CHECKPOINT_FORMAT = "csrecon-params-v1"

_ACTIVATIONS = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "relu": relu,
    "linear": lambda t: t,
}


class NnError(ValueError):
    """Invalid network construction, update, or checkpoint."""


def activation_fn(name: str):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise NnError(f"unknown activation {name!r}") from None


class Dense:
    """Affine layer y = x @ w + b with w (n_in, n_out) and b (1, n_out)."""

    def __init__(self, w: Tensor, b: Tensor):
        if w.ndim != 2 or b.shape != (1, w.shape[1]):
            raise NnError(f"bad dense shapes w={w.shape} b={b.shape}")
        self.w = w
        self.b = b

    @staticmethod
    def build(rng: np.random.Generator, n_in: int, n_out: int, scale=None) -> "Dense":
        if scale is None:
            scale = np.sqrt(2.0 / (n_in + n_out))
        w = Tensor(rng.normal(0.0, scale, size=(n_in, n_out)), requires_grad=True)
        b = Tensor(np.zeros((1, n_out)), requires_grad=True)
        return Dense(w, b)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    @property
    def params(self):
        return [self.w, self.b]


class Mlp:
    """Stack of Dense layers; the activation sits between layers only."""

    def __init__(self, layers, activation="tanh"):
        self.layers = list(layers)
        self.activation = activation
        self._act = activation_fn(activation)

    @staticmethod
    def build(rng: np.random.Generator, sizes, activation="tanh") -> "Mlp":
        if len(sizes) < 2:
            raise NnError("an MLP needs at least input and output sizes")
        layers = [
            Dense.build(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)
        ]
        return Mlp(layers, activation=activation)

    def __call__(self, x: Tensor) -> Tensor:
        h = as_tensor(x)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i + 1 < len(self.layers):
                h = self._act(h)
        return h

    @property
    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        return out


def reparameterize(mu: Tensor, sigma: Tensor, noise) -> Tensor:
    """z = mu + sigma * noise, differentiable in mu and sigma."""
    return add(mu, mul(sigma, as_tensor(noise)))


# -------------------------------------------------------------------- adam


class Adam:
    """Adam with bias correction; raises on non-finite gradients."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads):
        grads = [g.data if isinstance(g, Tensor) else np.asarray(g) for g in grads]
        if len(grads) != len(self.params):
            raise NnError(f"got {len(grads)} gradients for {len(self.params)} params")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NnError("non-finite gradient in Adam step")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ------------------------------------------------------------- checkpoints


class ParamSet:
    """Ordered, named parameter tensors; the order fixes the blob layout."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def register(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise NnError(f"duplicate parameter name {name!r}")
        if not isinstance(t, Tensor):
            raise NnError(f"parameter {name!r} is not a Tensor")
        self._params[name] = t
        return t

    def register_many(self, prefix: str, tensors) -> None:
        for i, t in enumerate(tensors):
            self.register(f"{prefix}.{i}", t)

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def save(self, stem, hyper=None, seed=None):
        """Write <stem>.json and <stem>.f32."""
        stem = Path(stem)
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "hyper": hyper or {},
            "params": [
                {"name": n, "shape": list(t.shape)} for n, t in self._params.items()
            ],
            "seed": seed,
        }
        blob = b"".join(
            np.ascontiguousarray(t.data, dtype="<f4").tobytes()
            for t in self._params.values()
        )
        stem.with_suffix(".json").write_text(
            json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n"
        )
        stem.with_suffix(".f32").write_bytes(blob)

    @staticmethod
    def load(stem):
        """Read a checkpoint; returns (ParamSet, manifest dict)."""
        stem = Path(stem)
        try:
            manifest = json.loads(stem.with_suffix(".json").read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise NnError(f"unreadable checkpoint manifest: {e}") from e
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise NnError(f"unknown checkpoint format {manifest.get('format')!r}")
        blob = stem.with_suffix(".f32").read_bytes()
        sizes = [int(np.prod(p["shape"])) for p in manifest["params"]]
        if len(blob) != 4 * sum(sizes):
            raise NnError(
                f"blob holds {len(blob)} bytes, manifest expects {4 * sum(sizes)}"
            )
        ps = ParamSet()
        off = 0
        for spec_entry, size in zip(manifest["params"], sizes):
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off)
            off += 4 * size
            t = Tensor(
                arr.astype(np.float64).reshape(spec_entry["shape"]),
                requires_grad=True,
            )
            ps.register(spec_entry["name"], t)
        return ps, manifest

    def load_values_from(self, other: "ParamSet"):
        """Copy matching-name values into this set (shapes must agree)."""
        for name, t in self._params.items():
            src = other._params.get(name)
            if src is None:
                raise NnError(f"checkpoint is missing parameter {name!r}")
            if src.shape != t.shape:
                raise NnError(
                    f"shape mismatch for {name!r}: {src.shape} vs {t.shape}"
                )
            t.data[...] = src.data
