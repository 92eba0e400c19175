"""Train a tiny binary RBM with CD-1 and watch the exact log-likelihood.

With 4 visible and 3 hidden units the partition function is a sum over
128 joint states, so the quantity CD only approximates can be printed.
"""
import numpy as np

from rbmshape.energy import BinaryRbmParams, TrainConfig, exact_log_likelihood, gibbs_sweep, train_rbm

rng = np.random.default_rng(0)
protos = np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=float)
data = protos[rng.integers(2, size=40)]
data = np.abs(data - (rng.uniform(size=data.shape) < 0.1))

p = BinaryRbmParams.random(4, 3, rng)
print(f"epoch   0  log-lik {exact_log_likelihood(data, p):8.4f}")
for block in range(1, 6):
    p = train_rbm(data, 3, TrainConfig(epochs=100, learning_rate=0.1), rng=rng, init=p)
    print(f"epoch {100 * block:3d}  log-lik {exact_log_likelihood(data, p):8.4f}")

# fantasies from a long Gibbs chain should look like the two prototypes
x = (rng.uniform(size=(1000, 4)) < 0.5).astype(float)
for _ in range(200):
    x, _ = gibbs_sweep(x, p, rng)
patterns, counts = np.unique(x, axis=0, return_counts=True)
for pat, n in sorted(zip(map(tuple, patterns.astype(int).tolist()), counts), key=lambda t: -t[1])[:4]:
    print("visible", pat, f"{n / 10:.1f}%")
