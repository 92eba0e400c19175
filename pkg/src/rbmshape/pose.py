"""Pose prior: a factored 3-way RBM linking frontal shapes ``x`` to posed
shapes ``y``, stacked under the frontal DBN.

Energy::

    E(x, y, h) = -sum_f (x.Wx_f)(y.Wy_f)(h.Wh_f)
                 + |x - bx|^2 / 2 + |y - by|^2 / 2 - bh.h

Both visible sets are unit-variance Gaussians given the rest; ``h`` is binary.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import synth
from .energy import Standardizer, TrainConfig, sigmoid
from .frontal import FrontalPriorModel, SamplerConfig, up_down
from .fusion import fuse

# offset added to standardized coordinates inside the transfer model; a
# constant component lets the gated term produce pose-dependent shifts
TRANSFER_OFFSET = 1.0

# the gated gradient grows with the cube of the weights and has heavy-tailed
# minibatch noise; at 0.01 a single spike can throw training off
POSE_LEARNING_RATE = 0.005


@dataclass(frozen=True, eq=False)
class ThreeWayParams:
    factor_x: np.ndarray  # (V, F)
    factor_y: np.ndarray  # (V, F)
    factor_h: np.ndarray  # (K, F)
    bias_x: np.ndarray
    bias_y: np.ndarray
    bias_h: np.ndarray

    _FIELDS = ("factor_x", "factor_y", "factor_h", "bias_x", "bias_y", "bias_h")

    def __post_init__(self):
        for name in self._FIELDS:
            arr = np.array(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        v, f = self.factor_x.shape
        if self.factor_y.shape != (v, f) or self.factor_h.ndim != 2 or self.factor_h.shape[1] != f:
            raise ValueError("factor matrices must share the factor count and visible size")
        if self.bias_x.shape != (v,) or self.bias_y.shape != (v,) or self.bias_h.shape != (self.factor_h.shape[0],):
            raise ValueError("bias shapes do not match the factor matrices")

    @property
    def n_visible(self):
        return self.factor_x.shape[0]

    @property
    def n_hidden(self):
        return self.factor_h.shape[0]

    @property
    def n_factors(self):
        return self.factor_x.shape[1]

    @classmethod
    def zeros(cls, n_visible, n_hidden, n_factors):
        return cls(np.zeros((n_visible, n_factors)), np.zeros((n_visible, n_factors)),
                   np.zeros((n_hidden, n_factors)), np.zeros(n_visible), np.zeros(n_visible),
                   np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible, n_hidden, n_factors, rng, scale=0.01):
        return cls(scale * rng.standard_normal((n_visible, n_factors)),
                   scale * rng.standard_normal((n_visible, n_factors)),
                   scale * rng.standard_normal((n_hidden, n_factors)),
                   np.zeros(n_visible), np.zeros(n_visible), np.zeros(n_hidden))

    def swapped(self):
        """Same model with the roles of x and y exchanged."""
        return replace(self, factor_x=self.factor_y, factor_y=self.factor_x,
                       bias_x=self.bias_y, bias_y=self.bias_x)

    def to_json(self):
        doc = {"V": self.n_visible, "K": self.n_hidden, "F": self.n_factors}
        for name in self._FIELDS:
            doc[name] = getattr(self, name).tolist()
        return doc

    @classmethod
    def from_json(cls, doc):
        try:
            p = cls(*(np.asarray(doc[name], dtype=float) for name in cls._FIELDS))
            declared = (int(doc["V"]), int(doc["K"]), int(doc["F"]))
        except KeyError as exc:
            raise ValueError(f"field {exc.args[0]!r} is missing") from None
        if declared != (p.n_visible, p.n_hidden, p.n_factors):
            raise ValueError("fields 'V', 'K', 'F' disagree with the stored matrices")
        return p


def _check(p, x=None, y=None, h=None):
    for name, v, n in (("x", x, p.n_visible), ("y", y, p.n_visible), ("h", h, p.n_hidden)):
        if v is not None and np.shape(v)[-1] != n:
            raise ValueError(f"{name} has {np.shape(v)[-1]} entries, model expects {n}")


def threeway_energy(x, y, h, p):
    _check(p, x, y, h)
    x, y, h = (np.asarray(a, dtype=float) for a in (x, y, h))
    gated = np.sum((x @ p.factor_x) * (y @ p.factor_y) * (h @ p.factor_h), axis=-1)
    quad = 0.5 * np.sum((x - p.bias_x) ** 2, axis=-1) + 0.5 * np.sum((y - p.bias_y) ** 2, axis=-1)
    return -gated + quad - h @ p.bias_h


def h_given_xy(x, y, p):
    _check(p, x, y)
    return sigmoid(((np.asarray(x) @ p.factor_x) * (np.asarray(y) @ p.factor_y)) @ p.factor_h.T + p.bias_h)


def x_mean_given_hy(h, y, p):
    _check(p, y=y, h=h)
    return ((np.asarray(h) @ p.factor_h) * (np.asarray(y) @ p.factor_y)) @ p.factor_x.T + p.bias_x


def y_mean_given_xh(x, h, p):
    _check(p, x=x, h=h)
    return ((np.asarray(x) @ p.factor_x) * (np.asarray(h) @ p.factor_h)) @ p.factor_y.T + p.bias_y


def _bernoulli(prob, rng):
    return (rng.uniform(size=prob.shape) < prob).astype(float)


def _stats(x, y, h, p):
    """Per-parameter d(-E)/dw averaged over rows."""
    fx, fy, fh = x @ p.factor_x, y @ p.factor_y, h @ p.factor_h
    n = x.shape[0]
    return {
        "factor_x": x.T @ (fy * fh) / n,
        "factor_y": y.T @ (fx * fh) / n,
        "factor_h": h.T @ (fx * fy) / n,
        "bias_x": (x - p.bias_x).mean(axis=0),
        "bias_y": (y - p.bias_y).mean(axis=0),
        "bias_h": h.mean(axis=0),
    }


def threeway_cd_gradient(p, x, y, k, rng):
    """CD-k estimate of the joint log-likelihood gradient.

    Negative phase: ``k`` sweeps of h -> x -> y started at the data.
    """
    x, y = np.atleast_2d(x).astype(float), np.atleast_2d(y).astype(float)
    if x.shape != y.shape or x.shape[0] == 0:
        raise ValueError("x and y batches must be nonempty and paired")
    ph0 = h_given_xy(x, y, p)
    pos = _stats(x, y, ph0, p)
    xk, yk, ph = x, y, ph0
    for _ in range(k):
        h = _bernoulli(ph, rng)
        xk = x_mean_given_hy(h, yk, p) + rng.standard_normal(xk.shape)
        yk = y_mean_given_xh(xk, h, p) + rng.standard_normal(yk.shape)
        ph = h_given_xy(xk, yk, p)
    neg = _stats(xk, yk, ph, p)
    return {name: pos[name] - neg[name] for name in pos}


def train_threeway(x, y, sizes=(20, 32), cfg=TrainConfig(learning_rate=POSE_LEARNING_RATE),
                   rng=None, init=None, callback=None):
    """Minibatch CD on standardized, paired rows ``x`` and ``y``.

    ``sizes`` is ``(K, F)``.  Weight decay applies to the factor matrices.
    ``init`` overrides the default start (small random factors, biases at
    the data means).  Raises FloatingPointError if the parameters diverge.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape != y.shape:
        raise ValueError("x and y must be paired 2-D arrays of equal shape")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 pairs")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    n_hidden, n_factors = sizes
    if init is None:
        p = ThreeWayParams.random(x.shape[1], n_hidden, n_factors, rng)
        p = replace(p, bias_x=x.mean(axis=0), bias_y=y.mean(axis=0))
    else:
        p = init
    velocity = {}
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            p = threeway_update(p, x[idx], y[idx], cfg, rng, velocity)
        if callback is not None:
            callback(epoch, p)
    return p


def threeway_update(p, x, y, cfg, rng, velocity=None):
    """One CD-k step with momentum; ``velocity`` (a dict) is updated in place."""
    grad = threeway_cd_gradient(p, x, y, cfg.cd_steps, rng)
    velocity = {} if velocity is None else velocity
    new = {}
    for name, g in grad.items():
        if name.startswith("factor"):
            g = g - cfg.weight_decay * getattr(p, name)
        prev = velocity.get(name)
        step = cfg.learning_rate * g if prev is None else cfg.momentum * prev + cfg.learning_rate * g
        velocity[name] = step
        new[name] = getattr(p, name) + step
        if not np.all(np.isfinite(new[name])):
            raise FloatingPointError(f"3-way training diverged ({name} is no longer finite)")
    return replace(p, **new)


def reconstruct_y(p, x, y):
    """Mean-field transfer: ``mu_y(x, p(h | x, y))`` in standardized units."""
    return y_mean_given_xh(x, h_given_xy(x, y, p), p)


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PosePriorModel:
    frontal: FrontalPriorModel
    transfer: ThreeWayParams
    x_standardizer: Standardizer
    y_standardizer: Standardizer

    def __post_init__(self):
        if self.frontal.dim != self.transfer.n_visible:
            raise ValueError("frontal visible size must equal transfer visible size")

    @property
    def dim(self):
        return self.transfer.n_visible

    def transfer_shape(self, x, y):
        """Reconstruct posed shapes from frontal ones (real units) given the pairing."""
        zx = self.x_standardizer.transform(x)
        zy = self.y_standardizer.transform(y)
        return self.y_standardizer.inverse(reconstruct_y(self.transfer, zx, zy))

    def to_json(self):
        return {"frontal": self.frontal.to_json(), "transfer": self.transfer.to_json(),
                "x_standardizer": self.x_standardizer.to_json(),
                "y_standardizer": self.y_standardizer.to_json()}

    @classmethod
    def from_json(cls, doc):
        try:
            return cls(FrontalPriorModel.from_json(doc["frontal"]),
                       ThreeWayParams.from_json(doc["transfer"]),
                       Standardizer.from_json(doc["x_standardizer"]),
                       Standardizer.from_json(doc["y_standardizer"]))
        except KeyError as exc:
            raise ValueError(f"field {exc.args[0]!r} is missing") from None


def train_pose(frontal, x, y, sizes=(20, 32), cfg=TrainConfig(learning_rate=POSE_LEARNING_RATE), rng=None):
    """Fit standardizers for x and y independently, then train the transfer model."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError("x and y must be paired")
    sx = Standardizer.fit(x, offset=TRANSFER_OFFSET)
    sy = Standardizer.fit(y, offset=TRANSFER_OFFSET)
    p = train_threeway(sx.transform(x), sy.transform(y), sizes, cfg, rng)
    return PosePriorModel(frontal, p, sx, sy)


def sample_pose_prior(model, y_measured, cfg=SamplerConfig(), rng=None):
    """``cfg.sample_count`` samples of the posed shape around ``y_measured``.

    Per sample: clamp y to the measurement and start x from it; alternate
    h ~ p(h|x,y), x ~ N(mu_x, I) for S sweeps; refine x with S up-down sweeps of
    the frontal prior; emit y ~ N(mu_y(x, h), I) with h from the first stage.
    """
    y_measured = np.asarray(y_measured, dtype=float)
    if y_measured.shape != (model.dim,):
        raise ValueError("shape and model dimensions differ")
    rng = np.random.default_rng() if rng is None else rng
    p = model.transfer
    n = cfg.sample_count
    sweeps = cfg.sweeps_per_sample

    def chain(zy, zx):
        for _ in range(sweeps):
            h = _bernoulli(h_given_xy(zx, zy, p), rng)
            mu = x_mean_given_hy(h, zy, p)
            zx = mu if cfg.mean_visible else mu + rng.standard_normal(mu.shape)
        x_real = model.x_standardizer.inverse(zx)
        zf = model.frontal.standardizer.transform(x_real)
        zf = up_down(model.frontal, zf, rng, sweeps, cfg.mean_visible)
        zx = model.x_standardizer.transform(model.frontal.standardizer.inverse(zf))
        mu = y_mean_given_xh(zx, h, p)
        zy_out = mu if cfg.mean_visible else mu + rng.standard_normal(mu.shape)
        return zy_out, zx

    zy0 = model.y_standardizer.transform(y_measured)
    zx0 = model.x_standardizer.transform(y_measured)
    if cfg.restart_from_measurement:
        out, _ = chain(np.tile(zy0, (n, 1)), np.tile(zx0, (n, 1)))
    else:
        out = np.empty((n, model.dim))
        zx = zx0[None, :]
        for d in range(n):
            zy_d, zx = chain(zy0[None, :], zx)
            out[d] = zy_d[0]
    return model.y_standardizer.inverse(out)


def correct_pose_shape(model, y_measured, mm, sampler=SamplerConfig(), fusion="gaussian", rng=None, kde=None):
    samples = sample_pose_prior(model, y_measured, sampler, rng)
    return fuse(samples, np.asarray(y_measured, dtype=float), mm, fusion, kde)
