"""Sequence tracking: constant-velocity Kalman filtering with per-frame prior
refinement, and the interocular-normalized landmark error."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .frontal import FrontalPriorModel, SamplerConfig, correct_shape
from .pose import PosePriorModel, correct_pose_shape


def interocular_error(tracked, truth):
    """Per-landmark Euclidean error divided by the truth's interocular distance."""
    tracked = np.asarray(tracked, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if tracked.shape != truth.shape:
        raise ValueError("tracked and truth shapes differ in landmark count")
    iod = synth.interocular_distance(truth)
    if not np.all(iod > 0):
        raise ValueError("interocular distance of the truth shape is zero")
    dist = np.linalg.norm(synth.as_points(tracked) - synth.as_points(truth), axis=-1)
    return dist / np.asarray(iod)[..., None]


# ---------------------------------------------------------------------------
# Kalman filter, state = [positions (52), velocities (52)]

@dataclass(frozen=True, eq=False)
class KalmanState:
    state: np.ndarray
    covariance: np.ndarray
    process_noise_q: float = 1e-4
    measurement_noise_r: float = 1e-3

    def __post_init__(self):
        if not self.process_noise_q >= 0 or not self.measurement_noise_r > 0:
            raise ValueError("process noise must be >= 0 and measurement noise > 0")
        n = self.state.shape[0]
        if n % 2 or self.covariance.shape != (n, n):
            raise ValueError("state must be [positions, velocities] with a matching covariance")

    @property
    def dim(self):
        return self.state.shape[0] // 2

    @property
    def position(self):
        return self.state[:self.dim].copy()

    @classmethod
    def initial(cls, position, q=1e-4, r=1e-3, position_var=None, velocity_var=1e-2):
        position = np.asarray(position, dtype=float)
        n = position.shape[0]
        cov = np.diag(np.r_[np.full(n, r if position_var is None else position_var),
                            np.full(n, velocity_var)])
        return cls(np.r_[position, np.zeros(n)], cov, q, r)


def _transition(n):
    f = np.eye(2 * n)
    f[:n, n:] = np.eye(n)
    return f


def _process_noise(n, q):
    # white-acceleration model, dt = 1
    eye = np.eye(n)
    return q * np.block([[eye / 4, eye / 2], [eye / 2, eye]])


def _check_psd(cov, what="covariance"):
    if not np.allclose(cov, cov.T, atol=1e-9):
        raise ValueError(f"{what} is not symmetric")
    if np.linalg.eigvalsh(cov)[0] < -1e-9:
        raise ValueError(f"{what} is not positive semidefinite")


def kalman_step(ks, z):
    """Predict one frame ahead and update with observed positions ``z``.

    Returns ``(new_state, posterior_positions)``.
    """
    _check_psd(ks.covariance)
    z = np.asarray(z, dtype=float)
    n = ks.dim
    if z.shape != (n,):
        raise ValueError(f"measurement has {z.shape} entries, filter expects {n}")
    f = _transition(n)
    x = f @ ks.state
    p = f @ ks.covariance @ f.T + _process_noise(n, ks.process_noise_q)
    s = p[:n, :n] + ks.measurement_noise_r * np.eye(n)
    gain = np.linalg.solve(s, p[:n, :]).T  # P H^T S^-1, H selects positions
    x = x + gain @ (z - x[:n])
    # Joseph form keeps P symmetric PSD
    a = np.eye(2 * n)
    a[:, :n] -= gain
    p = a @ p @ a.T + ks.measurement_noise_r * gain @ gain.T
    p = 0.5 * (p + p.T)
    new = KalmanState(x, p, ks.process_noise_q, ks.measurement_noise_r)
    return new, new.position


# ---------------------------------------------------------------------------

@dataclass
class TrackReport:
    """Per-frame, per-landmark errors for tracked and measurement-only paths.

    Rows of ``errors`` correspond to ``frames`` (frames with ground truth).
    """
    errors: np.ndarray
    baseline_errors: np.ndarray
    frames: list = field(default_factory=list)
    sequence_ids: list = field(default_factory=list)

    @property
    def overall(self):
        return float(self.errors.mean())

    @property
    def baseline_overall(self):
        return float(self.baseline_errors.mean())

    @property
    def improvement(self):
        """Percent decrease of the overall error relative to the baseline (0 for a perfect baseline)."""
        base = self.baseline_overall
        return 100.0 * (base - self.overall) / base if base > 0 else 0.0

    def component_means(self, which="tracked"):
        err = self.errors if which == "tracked" else self.baseline_errors
        return {name: float(err[:, idx].mean()) for name, idx in synth.COMPONENTS.items()}

    def summary(self):
        return {
            "frames": int(self.errors.shape[0]),
            "tracked": {**self.component_means("tracked"), "overall": self.overall},
            "baseline": {**self.component_means("baseline"), "overall": self.baseline_overall},
            "improvement_percent": self.improvement,
        }

    @classmethod
    def concat(cls, reports):
        return cls(np.concatenate([r.errors for r in reports]),
                   np.concatenate([r.baseline_errors for r in reports]),
                   [f for r in reports for f in r.frames],
                   [s for r in reports for s in r.sequence_ids])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sequence", "frame", "point", "error", "baseline_error"])
        for row, (seq, frame) in enumerate(zip(self.sequence_ids, self.frames)):
            for i in range(self.errors.shape[1]):
                w.writerow([seq, frame, i, repr(float(self.errors[row, i])),
                            repr(float(self.baseline_errors[row, i]))])
        return buf.getvalue()

    def curve_csv(self):
        """Per-frame mean errors (one row per tracked frame)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sequence", "frame", "error", "baseline_error"])
        for row, (seq, frame) in enumerate(zip(self.sequence_ids, self.frames)):
            w.writerow([seq, frame, repr(float(self.errors[row].mean())),
                        repr(float(self.baseline_errors[row].mean()))])
        return buf.getvalue()


def refine(prior, measurement, mm, fusion, sampler, rng, kde=None):
    """One prior-constrained estimate of a measured shape."""
    if isinstance(prior, PosePriorModel):
        return correct_pose_shape(prior, measurement, mm, sampler, fusion, rng, kde)
    if isinstance(prior, FrontalPriorModel):
        return correct_shape(prior, measurement, mm, sampler, fusion, rng, kde)
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def track_sequence(seq, prior, mm, fusion="gaussian", sampler=SamplerConfig(), rng=None,
                   q=1e-4, r=None, kde=None):
    """Track one sequence; ``prior=None`` gives the measurement-only baseline.

    Frame 0 initializes the filter with the prior-refined measurement.  Later
    frames: Kalman predict, refine the frame's measurement with the prior,
    Kalman update with the refined shape.  ``r`` defaults to trace(sigma_l)/dim.
    """
    rng = np.random.default_rng() if rng is None else rng
    dim = synth.DIM if prior is None else prior.dim
    if any(f.measurement is None for f in seq.frames):
        raise ValueError(f"sequence {seq.id}: missing measurements")
    if any(np.shape(f.measurement) != (dim,) for f in seq.frames):
        raise ValueError(f"sequence {seq.id}: measurement size does not match the model ({dim})")
    if r is None:
        r = float(np.trace(mm.sigma_l) / mm.dim) if mm is not None else 1e-3
    tracked = []
    ks = None
    for frame in seq.frames:
        if prior is None:
            tracked.append(np.asarray(frame.measurement, dtype=float))
            continue
        refined = refine(prior, frame.measurement, mm, fusion, sampler, rng, kde)
        if ks is None:
            ks = KalmanState.initial(refined, q, r)
            tracked.append(refined)
        else:
            ks, pos = kalman_step(ks, refined)
            tracked.append(pos)
    rows, base, frames = [], [], []
    for j, (frame, est) in enumerate(zip(seq.frames, tracked)):
        if frame.ground_truth is None:
            continue
        rows.append(interocular_error(est, frame.ground_truth))
        base.append(interocular_error(frame.measurement, frame.ground_truth))
        frames.append(j)
    n = synth.N_POINTS
    return TrackReport(np.array(rows).reshape(-1, n), np.array(base).reshape(-1, n),
                       frames, [seq.id] * len(frames))
