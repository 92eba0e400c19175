"""Gaussian and KDE fusion of prior samples with a measurement, in 2-D.

The samples form two clusters.  The Gaussian prior sees one broad blob and
lands between them; the KDE prior keeps both modes and snaps to the one the
measurement favours.
"""
import numpy as np

from rbmshape.fusion import KdeConfig, MeasurementModel, SampleStats, fuse_gaussian, fuse_kde

rng = np.random.default_rng(0)
samples = np.vstack([rng.normal([-2, 0], 0.3, size=(30, 2)), rng.normal([2, 0], 0.3, size=(30, 2))])
mm = MeasurementModel(np.diag([1.0, 0.5]))

for x_m in ([1.2, 0.8], [-0.3, -0.5], [3.0, 0.0]):
    x_m = np.array(x_m)
    g = fuse_gaussian(SampleStats.from_samples(samples), x_m, mm)
    history = []
    k = fuse_kde(samples, x_m, mm, KdeConfig(), history)
    climbs = max(len(h) for h in history) - 1
    print(f"measurement {x_m}  gaussian {np.round(g, 3)}  kde {np.round(k, 3)}  ({climbs} EM steps)")

# a more certain measurement drags both estimates toward itself
for scale in (10.0, 1.0, 0.1, 0.01):
    x_m = np.array([1.0, 1.0])
    mm = MeasurementModel(scale * np.eye(2))
    g = fuse_gaussian(SampleStats.from_samples(samples), x_m, mm)
    print(f"sigma_l = {scale:5.2f} I  gaussian estimate {np.round(g, 3)}")
