"""Synthetic 26-landmark faces.

Shapes are flat vectors ``[p1x, p1y, ..., p26x, p26y]`` in an eye-normalized
frame: the midpoint of the two eye centers sits at the origin, the eye line is
horizontal and the interocular distance (IOD) is 1.  An eye center is the mean
of that eye's four landmarks.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

FORMAT_VERSION = 1
N_POINTS = 26
DIM = 2 * N_POINTS
EXPRESSIONS = ("neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise")
MAX_POSE_DEG = 50.0


@dataclass(frozen=True)
class CanonicalFace3D:
    points: np.ndarray  # (26, 3)
    landmark_map: dict

    @property
    def xy(self):
        return self.points[:, :2].reshape(-1).copy()

    @property
    def z(self):
        return self.points[:, 2].copy()

    @property
    def mirror(self):
        return np.asarray(self.landmark_map["mirror"])

    def to_json(self):
        return {
            "format_version": FORMAT_VERSION,
            "points": self.points.tolist(),
            "landmark_map": self.landmark_map,
        }


def load_template(path=None):
    """Load the canonical template shipped with the package (or ``path``)."""
    if path is None:
        text = resources.files("rbmshape").joinpath("data/face_template.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc.get("format_version", 0) > FORMAT_VERSION:
        raise ValueError(f"template format_version {doc['format_version']} is not supported")
    points = np.asarray(doc["points"], dtype=float)
    if points.shape != (N_POINTS, 3):
        raise ValueError(f"template points must be 26x3, got {points.shape}")
    return CanonicalFace3D(points=points, landmark_map=doc["landmark_map"])


TEMPLATE = load_template()
LANDMARKS = TEMPLATE.landmark_map
COMPONENTS = {name: list(LANDMARKS[name]) for name in ("eyebrow", "eye", "nose", "mouth")}
LEFT_HALF = list(LANDMARKS["left_half"])
MIRROR = np.asarray(LANDMARKS["mirror"])
_LEFT_EYE = list(LANDMARKS["left_eye"])
_RIGHT_EYE = list(LANDMARKS["right_eye"])


def _mode(left):
    """Bilaterally symmetric displacement field from left-side entries.

    ``left`` maps a left landmark index to ``(outward, up)``; the mirrored
    landmark gets the same outward and vertical motion.
    """
    field = np.zeros((N_POINTS, 2))
    for idx, (outward, up) in left.items():
        field[idx] = (-outward, up)
        field[MIRROR[idx]] = (outward, up)
    return field.reshape(-1)


# keys: 0/1/2 brow outer/mid/inner, 6/7/8/9 eye outer/top/inner/bottom,
# 14/15 nose alar/nostril, 18/19/20/21 mouth corner/upper outer/upper inner/lower
EXPRESSION_MODES = {
    "neutral": np.zeros(DIM),
    "anger": _mode({0: (0.0, -0.08), 1: (-0.03, -0.11), 2: (-0.06, -0.15),
                    7: (0.0, -0.03), 9: (0.0, 0.03),
                    18: (-0.04, 0.0), 20: (0.0, -0.03), 21: (0.0, 0.05)}),
    "disgust": _mode({0: (0.0, -0.06), 1: (0.0, -0.08), 2: (-0.02, -0.1),
                      7: (0.0, -0.02), 9: (0.0, 0.02),
                      14: (0.02, 0.06), 15: (0.0, 0.05),
                      18: (0.0, -0.03), 19: (0.0, 0.1), 20: (0.0, 0.09), 21: (0.0, 0.02)}),
    "fear": _mode({0: (0.0, 0.08), 1: (0.0, 0.1), 2: (-0.03, 0.14),
                   7: (0.0, 0.04), 9: (0.0, -0.04),
                   18: (0.12, -0.05), 19: (0.04, -0.01), 21: (0.02, -0.1)}),
    "happiness": _mode({0: (0.0, -0.02), 1: (0.0, -0.02), 2: (0.0, -0.02),
                        7: (0.0, -0.02), 9: (0.0, 0.02),
                        14: (0.02, 0.0),
                        18: (0.1, 0.1), 19: (0.03, 0.03), 21: (0.0, -0.02)}),
    "sadness": _mode({0: (0.0, -0.05), 1: (0.0, 0.02), 2: (-0.03, 0.1),
                      7: (0.0, -0.02), 9: (0.0, 0.02),
                      18: (0.0, -0.1), 21: (0.0, -0.02)}),
    "surprise": _mode({0: (0.0, 0.13), 1: (0.0, 0.15), 2: (0.0, 0.14),
                       7: (0.0, 0.035), 9: (0.0, -0.035),
                       18: (-0.05, -0.08), 19: (0.0, 0.02), 20: (0.0, 0.02), 21: (0.0, -0.2)}),
}


def _identity_modes():
    ys = TEMPLATE.points[:, 1]
    modes = [
        _mode({0: (0.0, 1.0), 1: (0.0, 1.0), 2: (0.0, 1.0)}),               # brow height
        _mode({0: (1.0, 0.0), 1: (1.0, 0.0), 2: (1.0, 0.0)}),               # brow spacing
        _mode({6: (1.0, 0.0), 7: (0.0, 1.0), 8: (-1.0, 0.0), 9: (0.0, -1.0)}),  # eye size
        _mode({14: (0.0, -1.0), 15: (0.0, -1.0)}),                          # nose length
        _mode({14: (1.0, 0.0), 15: (1.0, 0.0)}),                            # nose width
        _mode({i: (0.0, -1.0) for i in (18, 19, 20, 21)}),                  # mouth height
        _mode({18: (1.0, 0.0), 19: (0.5, 0.0), 21: (0.3, 0.0)}),            # mouth width
        np.stack([np.zeros(N_POINTS), ys], axis=1).reshape(-1),             # face length
    ]
    modes = np.array(modes)
    # scale so unit-normal coefficients give 0.02 IOD per-coordinate RMS
    rms = np.sqrt(np.sum(modes ** 2) / DIM)
    return modes * (0.02 / rms)


IDENTITY_MODES = _identity_modes()


@dataclass(frozen=True)
class ExpressionSpec:
    label: str = "neutral"
    intensity: float = 1.0

    def __post_init__(self):
        if self.label not in EXPRESSIONS:
            raise ValueError(f"unknown expression {self.label!r}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must lie in [0, 1]")

    @property
    def displacement(self):
        return self.intensity * EXPRESSION_MODES[self.label]


@dataclass(frozen=True)
class CorruptionSpec:
    mode: str = "outlier_point"
    indices: tuple = field(default=None)
    magnitude: float = 0.5

    def __post_init__(self):
        if self.mode not in ("outlier_point", "half_face", "additive_noise"):
            raise ValueError(f"unknown corruption mode {self.mode!r}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be nonnegative")
        if self.indices is not None:
            idx = tuple(int(i) for i in self.indices)
            if any(i < 0 or i >= N_POINTS for i in idx):
                raise IndexError(f"landmark indices must lie in [0, {N_POINTS})")
            object.__setattr__(self, "indices", idx)

    def targets(self):
        if self.indices is not None:
            return list(self.indices)
        if self.mode == "outlier_point":
            return list(LANDMARKS["left_eyebrow_tip"])
        if self.mode == "half_face":
            return list(LEFT_HALF)
        return list(range(N_POINTS))


def as_points(shape):
    shape = np.asarray(shape, dtype=float)
    if shape.shape[-1] != DIM:
        raise ValueError(f"shape vectors have {DIM} entries, got {shape.shape[-1]}")
    return shape.reshape(shape.shape[:-1] + (N_POINTS, 2))


def eye_centers(shape):
    pts = as_points(shape)
    return pts[..., _LEFT_EYE, :].mean(axis=-2), pts[..., _RIGHT_EYE, :].mean(axis=-2)


def interocular_distance(shape):
    left, right = eye_centers(shape)
    return np.linalg.norm(right - left, axis=-1)


def normalize_by_eyes(shape):
    """Similarity-normalize a shape (or a stack of shapes) by its eye centers."""
    shape = np.asarray(shape, dtype=float)
    if shape.ndim > 1:
        return np.stack([normalize_by_eyes(s) for s in shape])
    pts = as_points(shape)
    left, right = eye_centers(shape)
    d = right - left
    iod = np.hypot(d[0], d[1])
    if not iod > 1e-12:
        raise ValueError("eye centers coincide; cannot normalize")
    c, s = d / iod
    rot = np.array([[c, s], [-s, c]])
    out = (pts - 0.5 * (left + right)) @ rot.T / iod
    return out.reshape(-1)


def is_normalized(shape, tol=1e-6):
    left, right = eye_centers(shape)
    return bool(np.allclose(left, [-0.5, 0.0], atol=tol) and np.allclose(right, [0.5, 0.0], atol=tol))


def mirror(shape):
    """Reflect about the vertical axis and relabel left/right landmarks."""
    pts = as_points(shape)[..., MIRROR, :].copy()
    pts[..., 0] *= -1
    return pts.reshape(np.shape(shape))


def rotate_about_vertical(xy, z, theta_deg):
    """Orthographic projection of points with depth ``z`` after a yaw of ``theta_deg``.

    Returns the raw projected 2-D points (no renormalization).
    """
    pts = np.asarray(xy, dtype=float).reshape(-1, 2)
    t = np.deg2rad(theta_deg)
    out = pts.copy()
    out[:, 0] = pts[:, 0] * np.cos(t) + np.asarray(z, dtype=float) * np.sin(t)
    return out.reshape(np.shape(xy))


def project_pose(shape, theta_deg, template=TEMPLATE):
    """Yaw a frontal shape using the template's depths, then renormalize by the eyes."""
    if not abs(theta_deg) < MAX_POSE_DEG:
        raise ValueError(f"pose angle must satisfy |theta| < {MAX_POSE_DEG} degrees")
    shape = np.asarray(shape, dtype=float)
    if shape.ndim > 1:
        return np.stack([project_pose(s, theta_deg, template) for s in shape])
    if theta_deg == 0:
        return shape.copy()
    return normalize_by_eyes(rotate_about_vertical(shape, template.z, theta_deg))


def identity_offset(identity_seed, identity_std=0.02):
    """Per-subject shape offset; ``identity_std`` is the per-coordinate RMS in IOD."""
    if identity_std == 0:
        return np.zeros(DIM)
    coef = np.random.default_rng(identity_seed).standard_normal(len(IDENTITY_MODES))
    return (identity_std / 0.02) * coef @ IDENTITY_MODES


def generate_shape(expr, identity_seed=0, rng=None, identity_std=0.02, jitter_std=0.003):
    """Frontal normalized shape: template + expression + identity (+ i.i.d. jitter)."""
    shape = TEMPLATE.xy + expr.displacement + identity_offset(identity_seed, identity_std)
    if jitter_std > 0:
        if rng is None:
            raise ValueError("jitter requires an rng")
        shape = shape + jitter_std * rng.standard_normal(DIM)
    if identity_std == 0 and jitter_std == 0:
        # every mode keeps the eye centers fixed, so the template frame is exact
        return shape
    return normalize_by_eyes(shape)


def corrupt(shape, spec, rng):
    """Apply a corruption; returns ``(corrupted, target_indices)``."""
    out = as_points(np.array(shape, dtype=float)).copy()
    targets = spec.targets()
    if spec.mode == "outlier_point":
        angles = rng.uniform(0, 2 * np.pi, size=len(targets))
        out[targets] += spec.magnitude * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        out[targets] += spec.magnitude * rng.standard_normal((len(targets), 2))
    return out.reshape(-1), targets


def mouth_height(shape):
    pts = as_points(shape)
    upper = pts[[19, 20, 23, 24], 1].mean()
    lower = pts[[21, 22], 1].mean()
    return upper - lower


# ---------------------------------------------------------------------------
# corpora

@dataclass
class ShapeRecord:
    id: str
    expression_label: str
    pose_deg: float
    coords: np.ndarray
    intensity: float = 1.0
    identity: int = 0

    def to_json(self):
        return {"format_version": FORMAT_VERSION, "id": self.id,
                "expression_label": self.expression_label, "pose_deg": float(self.pose_deg),
                "intensity": float(self.intensity), "identity": int(self.identity),
                "coords": [float(v) for v in self.coords]}

    @classmethod
    def from_json(cls, doc):
        _check_version(doc)
        coords = np.asarray(doc["coords"], dtype=float)
        if coords.shape != (DIM,):
            raise ValueError(f"field 'coords' must hold {DIM} reals")
        return cls(id=str(doc["id"]), expression_label=doc.get("expression_label", "neutral"),
                   pose_deg=float(doc.get("pose_deg", 0.0)), coords=coords,
                   intensity=float(doc.get("intensity", 1.0)), identity=int(doc.get("identity", 0)))


@dataclass
class PairRecord:
    id: str
    expression_label: str
    pose_deg: float
    x: np.ndarray
    y: np.ndarray

    def to_json(self):
        return {"format_version": FORMAT_VERSION, "id": self.id,
                "expression_label": self.expression_label, "pose_deg": float(self.pose_deg),
                "x": [float(v) for v in self.x], "y": [float(v) for v in self.y]}

    @classmethod
    def from_json(cls, doc):
        _check_version(doc)
        x = np.asarray(doc["x"], dtype=float)
        y = np.asarray(doc["y"], dtype=float)
        if x.shape != (DIM,) or y.shape != (DIM,):
            raise ValueError(f"fields 'x' and 'y' must hold {DIM} reals")
        return cls(id=str(doc["id"]), expression_label=doc.get("expression_label", "neutral"),
                   pose_deg=float(doc["pose_deg"]), x=x, y=y)


@dataclass
class Frame:
    measurement: np.ndarray
    ground_truth: np.ndarray = None
    pose_deg: float = 0.0
    expression: str = "neutral"
    outlier: bool = False


@dataclass
class ShapeSequence:
    id: str
    frames: list

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a sequence needs at least one frame")
        for f in self.frames:
            if f.measurement is None:
                raise ValueError(f"sequence {self.id}: frame without measurement")
            if np.shape(f.measurement) != (DIM,):
                raise ValueError(f"sequence {self.id}: measurements must hold {DIM} reals")

    def to_json_lines(self):
        for j, f in enumerate(self.frames):
            doc = {"format_version": FORMAT_VERSION, "sequence_id": self.id, "frame": j,
                   "expression": f.expression, "pose_deg": float(f.pose_deg),
                   "outlier": bool(f.outlier),
                   "measurement": [float(v) for v in f.measurement],
                   "ground_truth": None if f.ground_truth is None else [float(v) for v in f.ground_truth]}
            yield doc


def sequences_from_json_lines(docs):
    grouped = {}
    for doc in docs:
        _check_version(doc)
        if doc.get("measurement") is None:
            raise ValueError("field 'measurement' is missing")
        gt = doc.get("ground_truth")
        frame = Frame(measurement=np.asarray(doc["measurement"], dtype=float),
                      ground_truth=None if gt is None else np.asarray(gt, dtype=float),
                      pose_deg=float(doc.get("pose_deg", 0.0)),
                      expression=doc.get("expression", "neutral"),
                      outlier=bool(doc.get("outlier", False)))
        grouped.setdefault(str(doc["sequence_id"]), []).append((int(doc["frame"]), frame))
    return [ShapeSequence(id=k, frames=[f for _, f in sorted(v, key=lambda t: t[0])])
            for k, v in grouped.items()]


def _check_version(doc):
    version = doc.get("format_version")
    if version is None:
        raise ValueError("field 'format_version' is missing")
    if version > FORMAT_VERSION:
        raise ValueError(f"format_version {version} is newer than supported ({FORMAT_VERSION})")


def random_expression(rng, expressions=EXPRESSIONS):
    label = expressions[rng.integers(len(expressions))]
    intensity = 0.0 if label == "neutral" else float(rng.uniform(0.0, 1.0))
    return ExpressionSpec(label, intensity)


def sample_shapes(n, rng, expressions=EXPRESSIONS, n_identities=None, **kwargs):
    """``n`` random frontal records; returns a list of ShapeRecord."""
    records = []
    for i in range(n):
        expr = random_expression(rng, expressions)
        ident = int(rng.integers(2**31)) if n_identities is None else int(rng.integers(n_identities))
        coords = generate_shape(expr, ident, rng, **kwargs)
        records.append(ShapeRecord(f"s{i:05d}", expr.label, 0.0, coords, expr.intensity, ident))
    return records


def make_pairs(records, poses):
    return [PairRecord(f"{r.id}_p{theta:+g}", r.expression_label, theta, r.coords.copy(),
                       project_pose(r.coords, theta))
            for r in records for theta in poses]


def onset_apex_profile(n_frames, onset_frac=0.2):
    """Expression intensity per frame: neutral hold, then a smooth rise to the apex."""
    t = np.linspace(0.0, 1.0, n_frames)
    u = np.clip((t - onset_frac) / (1.0 - onset_frac), 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def make_sequence(seq_id, label, rng, n_frames=20, pose_deg=0.0, noise_std=0.05,
                  outlier_rate=0.1, outlier_points=3, outlier_magnitude=0.5):
    """Neutral-to-apex sequence with Gaussian measurement noise and outlier frames.

    An outlier frame displaces ``outlier_points`` random landmarks by
    ``outlier_magnitude`` IOD on top of the regular noise.
    """
    ident = int(rng.integers(2**31))
    frames = []
    for intensity in onset_apex_profile(n_frames):
        truth = generate_shape(ExpressionSpec(label, float(intensity)), ident, rng)
        if pose_deg:
            truth = project_pose(truth, pose_deg)
        meas = truth + noise_std * rng.standard_normal(DIM)
        outlier = bool(rng.uniform() < outlier_rate)
        if outlier:
            idx = rng.choice(N_POINTS, size=outlier_points, replace=False)
            meas, _ = corrupt(meas, CorruptionSpec("outlier_point", tuple(idx), outlier_magnitude), rng)
        frames.append(Frame(meas, truth, pose_deg, label, outlier))
    return ShapeSequence(seq_id, frames)


@dataclass
class Dataset:
    shapes: list
    pairs: list
    sequences: list


def make_dataset(n, rng, expressions=EXPRESSIONS, poses=(), corruption=None,
                 n_sequences=0, seq_len=20, noise_std=0.05, outlier_rate=0.1,
                 sequence_pose_deg=0.0):
    """Frontal corpus, (frontal, posed) pairs and measurement sequences.

    With ``corruption`` set, each shape record is returned alongside a corrupted
    copy in ``Dataset.shapes`` as ``(clean, corrupted, targets)`` triples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    shapes = sample_shapes(n, rng, expressions)
    pairs = make_pairs(shapes, poses)
    seq_labels = [e for e in expressions if e != "neutral"] or ["neutral"]
    sequences = [make_sequence(f"q{i:04d}", seq_labels[i % len(seq_labels)], rng, seq_len,
                               sequence_pose_deg, noise_std, outlier_rate)
                 for i in range(n_sequences)]
    if corruption is not None:
        shapes = [(r, *corrupt(r.coords, corruption, rng)) for r in shapes]
    return Dataset(shapes, pairs, sequences)
