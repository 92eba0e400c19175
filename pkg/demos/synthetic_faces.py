"""Walk through the synthetic face generator.

Shapes are 26 landmarks normalized so the eye centers sit at (-0.5, 0) and
(0.5, 0).  Expressions move landmarks but never the eye centers.
"""
import numpy as np

from rbmshape import synth

rng = np.random.default_rng(0)
print("landmarks:", synth.N_POINTS, "components:", {k: len(v) for k, v in synth.COMPONENTS.items()})

for label in synth.EXPRESSIONS:
    shape = synth.generate_shape(synth.ExpressionSpec(label, 1.0), identity_seed=3, rng=rng)
    print(f"{label:10s} mouth height {synth.mouth_height(shape):.3f}  normalized {synth.is_normalized(shape)}")

base = synth.generate_shape(synth.ExpressionSpec("surprise", 0.7), identity_seed=3, rng=rng)
for theta in (-22.5, 0.0, 22.5, 45.0):
    posed = synth.project_pose(base, theta)
    pts = synth.as_points(posed)
    print(f"yaw {theta:5.1f}: x-range [{pts[:, 0].min():.3f}, {pts[:, 0].max():.3f}]")

for spec in (synth.CorruptionSpec("outlier_point", magnitude=0.5), synth.CorruptionSpec("half_face", magnitude=0.3)):
    bad, idx = synth.corrupt(base, spec, rng)
    moved = np.linalg.norm(synth.as_points(bad - base), axis=1)
    print(f"{spec.mode:13s} touches {len(idx)} points, mean shift {moved[idx].mean():.3f} IOD")

seq = synth.make_sequence("demo", "happiness", rng, n_frames=10)
print("sequence mouth height:", " ".join(f"{synth.mouth_height(f.ground_truth):.2f}" for f in seq.frames))
print("outlier frames:", [i for i, f in enumerate(seq.frames) if f.outlier])
