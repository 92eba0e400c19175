"""Learn the frontal-to-posed mapping with a gated (3-way) RBM.

The transfer model never sees an angle label; the hidden units pick the
rotation from the (x, y) pair.
"""
import numpy as np

from rbmshape import synth
from rbmshape.energy import TrainConfig
from rbmshape.frontal import SamplerConfig, train_frontal
from rbmshape.fusion import estimate_sigma_l
from rbmshape.pose import POSE_LEARNING_RATE, correct_pose_shape, sample_pose_prior, train_pose

rng = np.random.default_rng(0)
recs = synth.sample_shapes(600, rng)
pairs = synth.make_pairs(recs, (-22.5, 22.5))
x = np.array([p.x for p in pairs])
y = np.array([p.y for p in pairs])

frontal = train_frontal(x[::2], (50, 25), TrainConfig(epochs=100, rng_seed=1))
model = train_pose(frontal, x, y, (20, 32), TrainConfig(epochs=150, learning_rate=POSE_LEARNING_RATE, rng_seed=2))

test = np.array([r.coords for r in synth.sample_shapes(50, rng)])
for theta in (-22.5, 22.5):
    posed = synth.project_pose(test, theta)
    rms = np.sqrt(np.mean((model.transfer_shape(test, posed) - posed) ** 2))
    print(f"yaw {theta:+.1f}: held-out transfer RMS {rms:.4f} IOD")

posed = synth.project_pose(test[0], 22.5)
s = sample_pose_prior(model, posed, SamplerConfig(2, 50), rng)
print(f"pose-prior samples: mean distance {np.linalg.norm(s - posed, axis=1).mean():.3f} IOD from the input")

# sigma_l calibrated on single-landmark outliers at random positions
calib = synth.project_pose(x[:600:2], 22.5)
outlier = lambda: synth.CorruptionSpec("outlier_point", (int(rng.integers(synth.N_POINTS)),), 0.5)
mm = estimate_sigma_l(calib, np.array([synth.corrupt(c, outlier(), rng)[0] for c in calib]))
bad, (i,) = synth.corrupt(posed, synth.CorruptionSpec("outlier_point", (4,), 0.5), rng)
fixed = correct_pose_shape(model, bad, mm, rng=rng)
err = lambda s: np.linalg.norm(synth.as_points(s - posed)[i])
print(f"outlier on landmark {i}: {err(bad):.3f} -> {err(fixed):.3f} IOD")
