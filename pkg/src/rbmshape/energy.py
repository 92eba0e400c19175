"""Binary and Gaussian-Bernoulli RBM primitives.

Weights are stored hidden-major, ``weights[j, i]`` couples hidden unit ``j``
with visible unit ``i``.  Gaussian visible units have unit variance; callers
standardize their data (see :class:`Standardizer`).
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

MAX_ENUM_UNITS = 20


def sigmoid(a):
    # scipy's expit is overflow-safe in both tails
    return expit(a)


def softplus(a):
    return np.logaddexp(0.0, a)


def _check_params(weights, visible_bias, hidden_bias):
    if weights.ndim != 2:
        raise ValueError("weights must be a matrix")
    n_hidden, n_visible = weights.shape
    if visible_bias.shape != (n_visible,) or hidden_bias.shape != (n_hidden,):
        raise ValueError(
            f"bias shapes {visible_bias.shape}, {hidden_bias.shape} do not match weights {weights.shape}")
    for name, arr in (("weights", weights), ("visible_bias", visible_bias), ("hidden_bias", hidden_bias)):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class _RbmParams:
    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    kind = None

    def __post_init__(self):
        for name in ("weights", "visible_bias", "hidden_bias"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        _check_params(self.weights, self.visible_bias, self.hidden_bias)

    @property
    def n_visible(self):
        return self.weights.shape[1]

    @property
    def n_hidden(self):
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, n_visible, n_hidden):
        return cls(np.zeros((n_hidden, n_visible)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible, n_hidden, rng, scale=0.01):
        return cls(scale * rng.standard_normal((n_hidden, n_visible)),
                   np.zeros(n_visible), np.zeros(n_hidden))

    def to_json(self):
        return {"type": self.kind, "V": self.n_visible, "H": self.n_hidden,
                "weights": self.weights.ravel().tolist(),
                "visible_bias": self.visible_bias.tolist(),
                "hidden_bias": self.hidden_bias.tolist()}


class BinaryRbmParams(_RbmParams):
    kind = "binary"


class GbRbmParams(_RbmParams):
    """Gaussian-Bernoulli RBM; visible variance is fixed at 1."""
    kind = "gb"



def params_from_json(doc):
    kind = doc.get("type")
    cls = {"binary": BinaryRbmParams, "gb": GbRbmParams}.get(kind)
    if cls is None:
        raise ValueError(f"field 'type' must be 'binary' or 'gb', got {kind!r}")
    try:
        n_visible, n_hidden = int(doc["V"]), int(doc["H"])
        weights = np.asarray(doc["weights"], dtype=float)
        if weights.size != n_visible * n_hidden:
            raise ValueError(f"field 'weights' has {weights.size} entries, expected {n_visible * n_hidden}")
        return cls(weights.reshape(n_hidden, n_visible),
                   np.asarray(doc["visible_bias"], dtype=float),
                   np.asarray(doc["hidden_bias"], dtype=float))
    except KeyError as exc:
        raise ValueError(f"field {exc.args[0]!r} is missing") from None


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-coordinate affine map ``(x - mean) / std + offset``."""
    mean: np.ndarray
    std: np.ndarray
    offset: float = 0.0

    @classmethod
    def fit(cls, data, offset=0.0, min_std=1e-6):
        data = np.asarray(data, dtype=float)
        return cls(data.mean(axis=0), np.maximum(data.std(axis=0), min_std), offset)

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std + self.offset

    def inverse(self, z):
        return (np.asarray(z, dtype=float) - self.offset) * self.std + self.mean

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "offset": self.offset}

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["std"], dtype=float),
                   float(doc.get("offset", 0.0)))


@dataclass(frozen=True)
class TrainConfig:
    cd_steps: int = 1
    learning_rate: float = 0.01
    epochs: int = 500
    batch_size: int = 32
    momentum: float = 0.5
    weight_decay: float = 1e-4
    rng_seed: int = 0

    def __post_init__(self):
        if self.cd_steps < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("cd_steps, epochs and batch_size must be positive")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def _check_dims(p, x=None, h=None):
    if x is not None and np.shape(x)[-1] != p.n_visible:
        raise ValueError(f"visible vector has {np.shape(x)[-1]} entries, model expects {p.n_visible}")
    if h is not None and np.shape(h)[-1] != p.n_hidden:
        raise ValueError(f"hidden vector has {np.shape(h)[-1]} entries, model expects {p.n_hidden}")


def binary_energy(x, h, p):
    _check_dims(p, x, h)
    x, h = np.asarray(x, dtype=float), np.asarray(h, dtype=float)
    return -(x @ p.visible_bias + np.einsum("...j,ji,...i->...", h, p.weights, x) + h @ p.hidden_bias)


def gb_energy(x, h, p):
    _check_dims(p, x, h)
    x, h = np.asarray(x, dtype=float), np.asarray(h, dtype=float)
    quad = 0.5 * np.sum((x - p.visible_bias) ** 2, axis=-1)
    return quad - np.einsum("...j,ji,...i->...", h, p.weights, x) - h @ p.hidden_bias


def energy(x, h, p):
    return gb_energy(x, h, p) if isinstance(p, GbRbmParams) else binary_energy(x, h, p)


def hidden_conditional(x, p):
    """p(h_j = 1 | x) for every hidden unit (rows of ``x`` are independent)."""
    _check_dims(p, x=x)
    return sigmoid(np.asarray(x, dtype=float) @ p.weights.T + p.hidden_bias)


def visible_conditional(h, p):
    """Gaussian mean for a GB-RBM, Bernoulli probabilities for a binary RBM."""
    _check_dims(p, h=h)
    act = np.asarray(h, dtype=float) @ p.weights + p.visible_bias
    return act if isinstance(p, GbRbmParams) else sigmoid(act)


def sample_hidden(x, p, rng):
    prob = hidden_conditional(x, p)
    return (rng.uniform(size=prob.shape) < prob).astype(float)


def sample_visible(h, p, rng):
    mean = visible_conditional(h, p)
    if isinstance(p, GbRbmParams):
        return mean + rng.standard_normal(mean.shape)
    return (rng.uniform(size=mean.shape) < mean).astype(float)


def gibbs_sweep(x, p, rng):
    """One block-Gibbs sweep ``x -> h' -> x'``; returns ``(x', h')``."""
    h = sample_hidden(x, p, rng)
    return sample_visible(h, p, rng), h


@dataclass
class Momentum:
    """Velocity buffers carried between successive :func:`cd_update` calls."""
    weights: np.ndarray = None
    visible_bias: np.ndarray = None
    hidden_bias: np.ndarray = None


def cd_gradient(p, batch, k, rng):
    """CD-k estimate of the mean log-likelihood gradient over ``batch``.

    Hidden statistics use conditional probabilities; visible states in the
    negative phase are samples from a k-step chain started at the data.
    """
    v0 = np.atleast_2d(np.asarray(batch, dtype=float))
    if v0.shape[0] == 0:
        raise ValueError("batch is empty")
    _check_dims(p, x=v0)
    ph0 = hidden_conditional(v0, p)
    h = (rng.uniform(size=ph0.shape) < ph0).astype(float)
    vk = v0
    for step in range(k):
        if step:
            h = sample_hidden(vk, p, rng)
        vk = sample_visible(h, p, rng)
    phk = hidden_conditional(vk, p)
    n = v0.shape[0]
    return {
        "weights": (ph0.T @ v0 - phk.T @ vk) / n,
        "visible_bias": (v0 - vk).mean(axis=0),
        "hidden_bias": (ph0 - phk).mean(axis=0),
    }


def cd_update(p, batch, cfg, rng, velocity=None):
    """One CD-k step with momentum and L2 weight decay; returns new params.

    Pass a :class:`Momentum` to carry velocity across calls (it is updated in
    place); without one the step starts from zero velocity.
    """
    grad = cd_gradient(p, batch, cfg.cd_steps, rng)
    grad["weights"] = grad["weights"] - cfg.weight_decay * p.weights
    if velocity is None:
        velocity = Momentum()
    new = {}
    for name, g in grad.items():
        prev = getattr(velocity, name)
        step = cfg.learning_rate * g if prev is None else cfg.momentum * prev + cfg.learning_rate * g
        setattr(velocity, name, step)
        new[name] = getattr(p, name) + step
        if not np.all(np.isfinite(new[name])):
            raise FloatingPointError(f"CD training diverged ({name} is no longer finite)")
    return replace(p, **new)


def train_rbm(data, n_hidden, cfg, kind="binary", rng=None, init=None, callback=None):
    """Minibatch CD training from small random weights (std 0.01) and zero hidden biases.

    Visible biases start at the data mean (GB) or the data log-odds (binary).
    ``callback(epoch, params)`` runs after every epoch.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("data must be a nonempty 2-D array")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    cls = GbRbmParams if kind == "gb" else BinaryRbmParams
    if init is None:
        p = cls.random(data.shape[1], n_hidden, rng)
        if kind == "gb":
            vb = data.mean(axis=0)
        else:
            m = np.clip(data.mean(axis=0), 1e-3, 1 - 1e-3)
            vb = np.log(m / (1 - m))
        p = replace(p, visible_bias=vb)
    else:
        p = init
    velocity = Momentum()
    n = data.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            p = cd_update(p, data[order[start:start + cfg.batch_size]], cfg, rng, velocity)
        if callback is not None:
            callback(epoch, p)
    return p


# ---------------------------------------------------------------------------
# exact oracles for tiny models

def all_binary_states(n):
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)


def _check_enumerable(p):
    if isinstance(p, GbRbmParams):
        if p.n_hidden > MAX_ENUM_UNITS:
            raise ValueError(f"exact GB-RBM partition needs H <= {MAX_ENUM_UNITS}, got {p.n_hidden}")
    elif p.n_visible + p.n_hidden > MAX_ENUM_UNITS:
        raise ValueError(
            f"exact binary partition needs V + H <= {MAX_ENUM_UNITS}, got {p.n_visible + p.n_hidden}")


def exact_log_partition(p):
    """log Z by enumerating hidden states and summing/integrating the visibles."""
    _check_enumerable(p)
    hs = all_binary_states(p.n_hidden)
    act = hs @ p.weights + p.visible_bias
    if isinstance(p, GbRbmParams):
        terms = hs @ p.hidden_bias + 0.5 * np.sum(act ** 2, axis=1) - 0.5 * p.visible_bias @ p.visible_bias
        return 0.5 * p.n_visible * np.log(2 * np.pi) + logsumexp(terms)
    return logsumexp(hs @ p.hidden_bias + softplus(act).sum(axis=1))


def free_energy(x, p):
    """F(x) with p(x) = exp(-F(x)) / Z."""
    _check_dims(p, x=x)
    x = np.asarray(x, dtype=float)
    hidden = softplus(x @ p.weights.T + p.hidden_bias).sum(axis=-1)
    if isinstance(p, GbRbmParams):
        return 0.5 * np.sum((x - p.visible_bias) ** 2, axis=-1) - hidden
    return -(x @ p.visible_bias) - hidden


def exact_log_likelihood(data, p):
    """Mean exact log p(x) over the rows of ``data``."""
    log_z = exact_log_partition(p)
    return float(np.mean(-free_energy(np.atleast_2d(data), p)) - log_z)
