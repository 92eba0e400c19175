"""Combining prior samples with a landmark measurement.

Both routes maximize ``P(X_m | X) p(X)`` with a Gaussian likelihood of
covariance ``sigma_l``.  :func:`fuse_gaussian` fits a single Gaussian to the
prior samples and solves in closed form; :func:`fuse_kde` uses a Gaussian
kernel density over the samples and climbs to a local maximum with an EM-style
fixed point run from the measurement and from every sample.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.special import logsumexp


class NotPositiveDefinite(ValueError):
    pass


def _cholesky(mat, what):
    try:
        return cho_factor(mat, lower=True)
    except LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive definite") from None


def ridge(cov, scale=1e-4):
    """Add ``scale * trace / dim`` to the diagonal."""
    cov = np.asarray(cov, dtype=float)
    dim = cov.shape[0]
    return cov + (scale * np.trace(cov) / dim) * np.eye(dim)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    sigma_l: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma_l, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma_l must be a square matrix")
        if not np.allclose(s, s.T, rtol=0, atol=1e-10):
            raise ValueError("sigma_l must be symmetric")
        s = 0.5 * (s + s.T)
        if np.linalg.eigvalsh(s)[0] <= 0:
            raise NotPositiveDefinite("sigma_l must be positive definite")
        s.setflags(write=False)
        object.__setattr__(self, "sigma_l", s)

    @property
    def dim(self):
        return self.sigma_l.shape[0]

    @classmethod
    def isotropic(cls, variance, dim=52):
        return cls(variance * np.eye(dim))

    def diagonal(self):
        return MeasurementModel(np.diag(np.diag(self.sigma_l)))

    def log_likelihood(self, x, x_m):
        """log N(x_m; x, sigma_l), vectorized over leading axes of ``x``."""
        chol = np.linalg.cholesky(self.sigma_l)
        r = np.linalg.solve(chol, (np.asarray(x_m) - np.asarray(x)).reshape(-1, self.dim).T)
        logdet = 2 * np.sum(np.log(np.diag(chol)))
        out = -0.5 * np.sum(r ** 2, axis=0) - 0.5 * (self.dim * np.log(2 * np.pi) + logdet)
        return out.reshape(np.shape(x)[:-1])


def estimate_sigma_l(ground_truth, measurements, ridge=1e-6, diagonal=False):
    """Sample covariance of ``measurement - ground_truth`` plus ``ridge * I``."""
    truth = np.atleast_2d(np.asarray(ground_truth, dtype=float))
    meas = np.atleast_2d(np.asarray(measurements, dtype=float))
    if truth.shape != meas.shape:
        raise ValueError("ground truth and measurements must pair up")
    if truth.shape[0] < 2:
        raise ValueError("need at least 2 pairs to estimate a covariance")
    resid = meas - truth
    cov = np.cov(resid, rowvar=False, ddof=1).reshape(truth.shape[1], truth.shape[1])
    if diagonal:
        cov = np.diag(np.diag(cov))
    return MeasurementModel(cov + ridge * np.eye(truth.shape[1]))


@dataclass(frozen=True, eq=False)
class SampleStats:
    mean: np.ndarray
    covariance: np.ndarray
    samples: np.ndarray = None

    @classmethod
    def from_samples(cls, samples, ridge_scale=1e-4):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[0] < 2:
            raise ValueError("need at least 2 samples for a covariance")
        cov = np.cov(samples, rowvar=False, ddof=1)
        return cls(samples.mean(axis=0), ridge(cov, ridge_scale), samples)


def _fuse(mu, cov_p, x_m, cov_l):
    # (S_l^-1 + S_p^-1)^-1 (S_p^-1 mu + S_l^-1 x_m) == mu + S_p (S_p + S_l)^-1 (x_m - mu)
    total = _cholesky(cov_p + cov_l, "sigma_p + sigma_l")
    return mu + cov_p @ cho_solve(total, x_m - mu)


def fuse_gaussian(stats, x_m, mm):
    """Closed-form MAP under a Gaussian prior ``N(stats.mean, stats.covariance)``."""
    x_m = np.asarray(x_m, dtype=float)
    _cholesky(stats.covariance, "sigma_p")
    return _fuse(np.asarray(stats.mean, dtype=float), stats.covariance, x_m, mm.sigma_l)


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: object = "silverman"  # "silverman" or an explicit covariance matrix
    max_iterations: int = 100
    convergence_tol: float = 1e-8
    ridge_scale: float = 1e-4
    starts: str = "all"  # "measurement": climb from X_m only; "all": also from every sample

    def __post_init__(self):
        if self.max_iterations < 1 or not self.convergence_tol > 0:
            raise ValueError("max_iterations and convergence_tol must be positive")
        if self.starts not in ("measurement", "all"):
            raise ValueError(f"unknown start rule {self.starts!r}")


def silverman_bandwidth(samples, ridge_scale=1e-4):
    """Diagonal sample variances scaled by (4 / (D (d + 2)))^(2 / (d + 4))."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, dim = samples.shape
    var = samples.var(axis=0, ddof=1) if n > 1 else np.zeros(dim)
    factor = (4.0 / (n * (dim + 2))) ** (2.0 / (dim + 4))
    cov = np.diag(factor * var)
    if not np.trace(cov) > 0:
        raise NotPositiveDefinite("samples have zero spread; pass an explicit bandwidth")
    return ridge(cov, ridge_scale)


def kde_bandwidth(samples, cfg):
    if isinstance(cfg.bandwidth, str):
        if cfg.bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {cfg.bandwidth!r}")
        return silverman_bandwidth(samples, cfg.ridge_scale)
    bw = np.asarray(cfg.bandwidth, dtype=float)
    if bw.ndim == 0:
        bw = bw * np.eye(np.shape(samples)[-1])
    return bw


class _Kde:
    """Gaussian-kernel mixture times Gaussian likelihood, in coordinates
    whitened by the kernel bandwidth."""

    def __init__(self, samples, x_m, cov_k, cov_l):
        self.samples = samples
        self.x_m = x_m
        self.cov_k = cov_k
        self.chol_k = _cholesky(cov_k, "kernel bandwidth")
        self.chol_l = _cholesky(cov_l, "sigma_l")
        self.chol_total = _cholesky(cov_k + cov_l, "bandwidth + sigma_l")
        self.white = self._whiten(samples)
        dim = samples.shape[1]
        logdet_k = 2 * np.sum(np.log(np.diag(self.chol_k[0])))
        logdet_l = 2 * np.sum(np.log(np.diag(self.chol_l[0])))
        self.const = -dim * np.log(2 * np.pi) - 0.5 * (logdet_k + logdet_l)

    def _whiten(self, x):
        return solve_triangular(self.chol_k[0], np.atleast_2d(x).T, lower=True).T

    def _kernel_logits(self, x):
        """(n, D) kernel log-weights for n points ``x``."""
        w = self._whiten(x)
        sq = (w ** 2).sum(axis=1)[:, None] - 2 * w @ self.white.T + (self.white ** 2).sum(axis=1)
        return -0.5 * np.maximum(sq, 0.0)

    def objective(self, x):
        """Log posterior (up to the mixture's 1/D) at each row of ``x``."""
        x = np.atleast_2d(x)
        r = (x - self.x_m).T
        like = -0.5 * np.sum(r * cho_solve(self.chol_l, r), axis=0)
        return like + logsumexp(self._kernel_logits(x), axis=1) + self.const

    def step(self, x):
        logits = self._kernel_logits(x)
        gamma = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        center = gamma @ self.samples
        return center + cho_solve(self.chol_total, (self.x_m - center).T).T @ self.cov_k

def kde_objective(x, samples, x_m, mm, bandwidth):
    """log [N(x_m; x, sigma_l) * sum_d N(x; X_d, bandwidth)]."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    kde = _Kde(samples, np.asarray(x_m, dtype=float), np.asarray(bandwidth, dtype=float), mm.sigma_l)
    return float(kde.objective(np.asarray(x, dtype=float))[0])


def fuse_kde(samples, x_m, mm, cfg=KdeConfig(), history=None):
    """Maximizer of the KDE posterior by fixed-point climbing.

    Each climb is monotone in the objective and stops at a local maximum.  The
    first climb starts at the measurement; with ``cfg.starts == "all"`` one more
    starts at every sample and the best end point wins, which finds the global
    mode whenever some start lies in its basin.

    If ``history`` is a list, one list of per-iteration objectives per climb is
    appended to it (measurement start first).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0 or samples.size == 0:
        raise ValueError("need at least one prior sample")
    x_m = np.asarray(x_m, dtype=float)
    kde = _Kde(samples, x_m, kde_bandwidth(samples, cfg), mm.sigma_l)
    x = x_m[None, :] if cfg.starts == "measurement" else np.vstack([x_m, samples])
    trace = [kde.objective(x)] if history is not None else None
    for _ in range(cfg.max_iterations):
        new = kde.step(x)
        moved = np.max(np.abs(new - x))
        x = new
        if trace is not None:
            trace.append(kde.objective(x))
        if moved < cfg.convergence_tol:
            break
    if trace is not None:
        history.extend(np.array(trace).T.tolist())
    return x[np.argmax(kde.objective(x))]


def fuse(samples, x_m, mm, method="gaussian", kde=None, ridge_scale=1e-4):
    if method == "gaussian":
        return fuse_gaussian(SampleStats.from_samples(samples, ridge_scale), x_m, mm)
    if method == "kde":
        return fuse_kde(samples, x_m, mm, kde or KdeConfig())
    raise ValueError(f"unknown fusion method {method!r}")
