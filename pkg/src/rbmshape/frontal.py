"""Frontal face-shape prior: a GB-RBM on standardized coordinates with a
binary RBM stacked on its hidden probabilities."""

from dataclasses import dataclass

import numpy as np

from . import synth
from .energy import (
    BinaryRbmParams, GbRbmParams, Standardizer, TrainConfig, hidden_conditional,
    params_from_json, sample_hidden, sample_visible, train_rbm, visible_conditional,
)
from .fusion import fuse


@dataclass(frozen=True, eq=False)
class FrontalPriorModel:
    layer1: GbRbmParams
    layer2: BinaryRbmParams  # None for a single-layer prior
    standardizer: Standardizer

    def __post_init__(self):
        if self.layer2 is not None and self.layer2.n_visible != self.layer1.n_hidden:
            raise ValueError("layer2 visible size must equal layer1 hidden size")

    @property
    def dim(self):
        return self.layer1.n_visible

    @property
    def sizes(self):
        return (self.layer1.n_hidden, None if self.layer2 is None else self.layer2.n_hidden)

    def to_json(self):
        l1 = self.layer1.to_json()
        l1["standardizer"] = self.standardizer.to_json()
        return {"layer1": l1,
                "layer2": None if self.layer2 is None else self.layer2.to_json(),
                "H1": self.sizes[0], "H2": self.sizes[1]}

    @classmethod
    def from_json(cls, doc):
        try:
            l1 = doc["layer1"]
            std = Standardizer.from_json(l1["standardizer"])
        except KeyError as exc:
            raise ValueError(f"field {exc.args[0]!r} is missing") from None
        l2 = doc.get("layer2")
        return cls(params_from_json(l1), None if l2 is None else params_from_json(l2), std)


@dataclass(frozen=True)
class SamplerConfig:
    sweeps_per_sample: int = 2
    sample_count: int = 100
    restart_from_measurement: bool = True
    # emit the visible conditional mean instead of a unit-variance draw
    mean_visible: bool = False

    def __post_init__(self):
        if self.sweeps_per_sample < 1 or self.sample_count < 1:
            raise ValueError("sweeps_per_sample and sample_count must be >= 1")


def _as_shapes(shapes, require_normalized=True):
    data = np.atleast_2d(np.asarray(shapes, dtype=float))
    if data.shape[1] != synth.DIM:
        raise ValueError(f"shape vectors have {synth.DIM} entries, got {data.shape[1]}")
    if require_normalized:
        bad = [i for i, s in enumerate(data) if not synth.is_normalized(s)]
        if bad:
            raise ValueError(f"{len(bad)} shapes are not eye-normalized (first: row {bad[0]})")
    return data


def train_frontal(shapes, sizes=(50, 25), cfg=TrainConfig(), cfg2=None, rng=None):
    """Greedy layer-wise training.

    Layer 1 is a GB-RBM trained by CD on standardized coordinates; layer 2 (if
    ``sizes[1]`` is not None) is a binary RBM trained on layer-1 hidden
    probabilities of the data.  ``cfg2`` defaults to ``cfg``.
    """
    data = _as_shapes(shapes)
    if data.shape[0] < 2:
        raise ValueError("need at least 2 training shapes")
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    std = Standardizer.fit(data)
    z = std.transform(data)
    layer1 = train_rbm(z, sizes[0], cfg, kind="gb", rng=rng)
    layer2 = None
    if sizes[1]:
        feats = hidden_conditional(z, layer1)
        layer2 = train_rbm(feats, sizes[1], cfg2 or cfg, kind="binary", rng=rng)
    return FrontalPriorModel(layer1, layer2, std)


def up_down(model, z, rng, sweeps, mean_visible=False):
    """``sweeps`` up-down passes on standardized rows ``z``; returns new rows.

    Each pass: h1 ~ p(h1|x), then (two-layer model) h2 ~ p(h2|h1) and
    h1 ~ p(h1|h2), then x ~ p(x|h1).
    """
    for _ in range(sweeps):
        h1 = sample_hidden(z, model.layer1, rng)
        if model.layer2 is not None:
            h2 = sample_hidden(h1, model.layer2, rng)
            h1 = sample_visible(h2, model.layer2, rng)
        z = visible_conditional(h1, model.layer1) if mean_visible else sample_visible(h1, model.layer1, rng)
    return z


def sample_local_prior(model, x_init, cfg=SamplerConfig(), rng=None):
    """``cfg.sample_count`` prior samples around ``x_init`` (rows, real units)."""
    x_init = _as_shapes(x_init, require_normalized=False)[0]
    if x_init.shape[0] != model.dim:
        raise ValueError("shape and model dimensions differ")
    rng = np.random.default_rng() if rng is None else rng
    z0 = model.standardizer.transform(x_init)
    if cfg.restart_from_measurement:
        z = np.tile(z0, (cfg.sample_count, 1))
        out = up_down(model, z, rng, cfg.sweeps_per_sample, cfg.mean_visible)
    else:
        out = np.empty((cfg.sample_count, model.dim))
        z = z0[None, :]
        for d in range(cfg.sample_count):
            z = up_down(model, z, rng, cfg.sweeps_per_sample, cfg.mean_visible)
            out[d] = z[0]
    return model.standardizer.inverse(out)


def correct_shape(model, x_measured, mm, sampler=SamplerConfig(), fusion="gaussian", rng=None, kde=None):
    """Refine a measured shape with the prior: local sampling, then fusion."""
    samples = sample_local_prior(model, x_measured, sampler, rng)
    return fuse(samples, np.asarray(x_measured, dtype=float), mm, fusion, kde)
