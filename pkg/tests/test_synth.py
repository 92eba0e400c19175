import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rbmshape import synth
from rbmshape.synth import CorruptionSpec, ExpressionSpec
from rbmshape.tracking import interocular_error


def random_shape(seed):
    return synth.generate_shape(synth.random_expression(np.random.default_rng(seed)), seed,
                                np.random.default_rng(seed + 1))


class TestTemplate:
    def test_symmetric(self):
        pts = synth.TEMPLATE.points
        mirrored = pts[synth.MIRROR] * [-1, 1, 1]
        np.testing.assert_array_equal(mirrored, pts)

    def test_unit_iod_and_normalized(self):
        assert synth.interocular_distance(synth.TEMPLATE.xy) == pytest.approx(1.0, abs=1e-15)
        assert synth.is_normalized(synth.TEMPLATE.xy, tol=1e-15)

    def test_landmark_layout(self):
        assert sorted(i for idx in synth.COMPONENTS.values() for i in idx) == list(range(26))
        assert synth.COMPONENTS["eyebrow"] == list(range(6))
        assert synth.COMPONENTS["mouth"] == list(range(18, 26))
        assert sorted(synth.MIRROR) == list(range(26))

    def test_json_has_version(self):
        doc = synth.TEMPLATE.to_json()
        assert doc["format_version"] == synth.FORMAT_VERSION
        assert np.shape(doc["points"]) == (26, 3)

    def test_load_rejects_newer(self, tmp_path):
        doc = synth.TEMPLATE.to_json()
        doc["format_version"] = synth.FORMAT_VERSION + 1
        path = tmp_path / "t.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="format_version"):
            synth.load_template(path)


class TestModes:
    @pytest.mark.parametrize("label", synth.EXPRESSIONS)
    def test_eye_centers_fixed(self, label):
        disp = synth.as_points(synth.EXPRESSION_MODES[label])
        for eye in ("left_eye", "right_eye"):
            np.testing.assert_allclose(disp[synth.LANDMARKS[eye]].mean(axis=0), 0.0, atol=1e-15)

    @pytest.mark.parametrize("label", synth.EXPRESSIONS)
    def test_magnitude_bound(self, label):
        disp = synth.as_points(synth.EXPRESSION_MODES[label])
        assert np.linalg.norm(disp, axis=1).max() <= 0.25

    def test_identity_modes_keep_eyes(self):
        for mode in synth.IDENTITY_MODES:
            left, right = synth.eye_centers(synth.TEMPLATE.xy + mode)
            np.testing.assert_allclose(left, [-0.5, 0.0], atol=1e-12)
            np.testing.assert_allclose(right, [0.5, 0.0], atol=1e-12)


class TestGenerate:
    def test_neutral_is_template(self):
        s = synth.generate_shape(ExpressionSpec("neutral", 0.0), 0, None, identity_std=0, jitter_std=0)
        np.testing.assert_array_equal(s, synth.TEMPLATE.xy)

    @pytest.mark.parametrize("label", synth.EXPRESSIONS)
    def test_zero_intensity_is_neutral(self, label):
        a = synth.generate_shape(ExpressionSpec(label, 0.0), 5, None, jitter_std=0)
        b = synth.generate_shape(ExpressionSpec("neutral", 0.0), 5, None, jitter_std=0)
        np.testing.assert_array_equal(a, b)

    def test_surprise_opens_mouth(self):
        kw = dict(identity_std=0, jitter_std=0)
        surprise = synth.generate_shape(ExpressionSpec("surprise", 1.0), 0, **kw)
        neutral = synth.generate_shape(ExpressionSpec("neutral", 0.0), 0, **kw)
        assert synth.mouth_height(surprise) > synth.mouth_height(neutral)

    def test_seeded(self):
        e = ExpressionSpec("happiness", 0.7)
        a = synth.generate_shape(e, 3, np.random.default_rng(1))
        b = synth.generate_shape(e, 3, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_normalized(self):
        for seed in range(20):
            assert synth.is_normalized(random_shape(seed), tol=1e-12)

    def test_identity_scale(self):
        offs = np.array([synth.identity_offset(i) for i in range(2000)])
        assert np.sqrt((offs ** 2).mean()) == pytest.approx(0.02, rel=0.1)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ExpressionSpec("contempt", 1.0)
        with pytest.raises(ValueError):
            ExpressionSpec("anger", 1.5)
        with pytest.raises(ValueError):
            synth.generate_shape(ExpressionSpec("anger", 0.5), 0, None)


class TestNormalize:
    def test_explicit_eye_centers(self):
        shape = synth.TEMPLATE.xy.copy()
        pts = synth.as_points(shape) * 4.0 + [-1.0, 2.0]
        out = synth.normalize_by_eyes(pts.reshape(-1))
        left, right = synth.eye_centers(pts.reshape(-1))
        np.testing.assert_allclose([left, right], [[-3, 2], [1, 2]], atol=1e-12)
        left, right = synth.eye_centers(out)
        np.testing.assert_allclose([left, right], [[-0.5, 0], [0.5, 0]], atol=1e-12)

    def test_idempotent(self):
        s = random_shape(4)
        np.testing.assert_allclose(synth.normalize_by_eyes(s), s, atol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.floats(0.1, 10.0),
           st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
    def test_similarity_invariance(self, angle, scale, tx, ty, seed):
        s = random_shape(seed)
        c, si = math.cos(angle), math.sin(angle)
        moved = (synth.as_points(s) @ np.array([[c, si], [-si, c]]) * scale + [tx, ty]).reshape(-1)
        np.testing.assert_allclose(synth.normalize_by_eyes(moved), synth.normalize_by_eyes(s), atol=1e-10)

    def test_coincident_eyes(self):
        with pytest.raises(ValueError):
            synth.normalize_by_eyes(np.zeros(synth.DIM))

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            synth.normalize_by_eyes(np.zeros(50))


class TestPose:
    def test_projection_value(self):
        out = synth.rotate_about_vertical([[1.0, 0.0]], [0.5], 22.5)
        assert out[0, 0] == pytest.approx(1.115222, abs=1e-6)
        assert out[0, 0] == pytest.approx(math.cos(math.radians(22.5)) + 0.5 * math.sin(math.radians(22.5)), abs=1e-15)
        assert out[0, 1] == 0.0

    def test_zero_is_identity(self):
        s = random_shape(2)
        np.testing.assert_array_equal(synth.project_pose(s, 0.0), s)

    @pytest.mark.parametrize("theta", [50.0, -50.0, 75.0])
    def test_out_of_range(self, theta):
        with pytest.raises(ValueError):
            synth.project_pose(synth.TEMPLATE.xy, theta)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-49.0, 49.0), st.integers(0, 1000))
    def test_mirror_symmetry(self, theta, seed):
        s = random_shape(seed)
        lhs = synth.project_pose(synth.mirror(s), -theta)
        rhs = synth.mirror(synth.project_pose(s, theta))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_posed_normalized(self):
        assert synth.is_normalized(synth.project_pose(random_shape(0), 22.5), tol=1e-12)

    def test_pose_changes_shape(self):
        s = synth.TEMPLATE.xy
        assert np.abs(synth.project_pose(s, 22.5) - s).max() > 0.05


class TestCorrupt:
    def test_zero_magnitude(self):
        s = random_shape(0)
        for mode in ("outlier_point", "half_face", "additive_noise"):
            out, _ = synth.corrupt(s, CorruptionSpec(mode, magnitude=0.0), np.random.default_rng(0))
            np.testing.assert_array_equal(out, s)

    def test_single_outlier(self):
        s = random_shape(1)
        out, targets = synth.corrupt(s, CorruptionSpec("outlier_point", (0,), 0.5), np.random.default_rng(3))
        d = np.linalg.norm(synth.as_points(out) - synth.as_points(s), axis=1)
        assert targets == [0]
        assert d[0] == pytest.approx(0.5, abs=1e-15)
        np.testing.assert_array_equal(d[1:], 0.0)

    def test_default_targets(self):
        assert CorruptionSpec("outlier_point").targets() == [0]
        assert CorruptionSpec("half_face").targets() == synth.LEFT_HALF
        assert CorruptionSpec("additive_noise").targets() == list(range(26))

    def test_half_face_only_left(self):
        s = random_shape(2)
        out, targets = synth.corrupt(s, CorruptionSpec("half_face", magnitude=0.3), np.random.default_rng(0))
        moved = np.flatnonzero(np.any(synth.as_points(out) != synth.as_points(s), axis=1))
        assert sorted(moved) == sorted(targets)
        assert all(synth.TEMPLATE.xy[2 * i] <= 0 for i in targets)

    def test_seeded(self):
        s = random_shape(0)
        spec = CorruptionSpec("additive_noise", magnitude=0.1)
        a, _ = synth.corrupt(s, spec, np.random.default_rng(9))
        b, _ = synth.corrupt(s, spec, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_invalid(self):
        with pytest.raises(IndexError):
            CorruptionSpec("outlier_point", (26,))
        with pytest.raises(ValueError):
            CorruptionSpec("outlier_point", magnitude=-0.1)
        with pytest.raises(ValueError):
            CorruptionSpec("smudge")


class TestDataset:
    def test_single(self):
        ds = synth.make_dataset(1, np.random.default_rng(0))
        assert len(ds.shapes) == 1 and ds.pairs == [] and ds.sequences == []
        with pytest.raises(ValueError):
            synth.make_dataset(0, np.random.default_rng(0))

    def test_pairs_constructive(self):
        ds = synth.make_dataset(5, np.random.default_rng(0), poses=(-22.5, 22.5))
        assert len(ds.pairs) == 10
        for p in ds.pairs:
            np.testing.assert_array_equal(p.y, synth.project_pose(p.x, p.pose_deg))

    def test_all_normalized(self):
        ds = synth.make_dataset(10, np.random.default_rng(1), poses=(22.5,), n_sequences=2)
        for r in ds.shapes:
            assert synth.is_normalized(r.coords, tol=1e-12)
        for p in ds.pairs:
            assert synth.is_normalized(p.y, tol=1e-12)
        for s in ds.sequences:
            for f in s.frames:
                assert synth.is_normalized(f.ground_truth, tol=1e-12)

    def test_with_corruption(self):
        ds = synth.make_dataset(3, np.random.default_rng(0), corruption=CorruptionSpec())
        clean, bad, targets = ds.shapes[0]
        assert targets == [0]
        assert not np.array_equal(clean.coords, bad)

    def test_onset_apex(self):
        prof = synth.onset_apex_profile(10)
        assert prof[0] == 0.0 and prof[-1] == 1.0
        assert np.all(np.diff(prof) >= 0)

    def test_sequence_apex_distance(self):
        seq = synth.make_sequence("a", "surprise", np.random.default_rng(0), n_frames=10,
                                  noise_std=0.0, outlier_rate=0.0)
        truths = [f.ground_truth for f in seq.frames]
        assert interocular_error(truths[9], truths[0]).mean() > 0
        # jitter is tiny next to the expression ramp
        dist = [np.linalg.norm(t - truths[-1]) for t in truths]
        assert np.all(np.diff(dist) <= 0.02)
        assert dist[0] > 5 * dist[-2]

    def test_outlier_frames(self):
        seq = synth.make_sequence("a", "anger", np.random.default_rng(0), n_frames=200,
                                  noise_std=0.0, outlier_rate=1.0)
        for f in seq.frames:
            d = np.linalg.norm(synth.as_points(f.measurement) - synth.as_points(f.ground_truth), axis=1)
            assert f.outlier and np.sum(d > 0) == 3
            np.testing.assert_allclose(d[d > 0], 0.5, atol=1e-12)


class TestRecords:
    def test_pair_round_trip_bytes(self):
        ds = synth.make_dataset(4, np.random.default_rng(0), poses=(-22.5, 22.5))
        lines = [json.dumps(p.to_json(), sort_keys=True) for p in ds.pairs]
        again = [json.dumps(synth.PairRecord.from_json(json.loads(l)).to_json(), sort_keys=True) for l in lines]
        assert again == lines

    def test_shape_record_round_trip(self):
        r = synth.sample_shapes(1, np.random.default_rng(0))[0]
        back = synth.ShapeRecord.from_json(json.loads(json.dumps(r.to_json())))
        np.testing.assert_array_equal(back.coords, r.coords)
        assert back.expression_label == r.expression_label

    def test_sequence_round_trip(self):
        seq = synth.make_sequence("z", "fear", np.random.default_rng(0), n_frames=4)
        docs = list(seq.to_json_lines())
        (back,) = synth.sequences_from_json_lines(reversed(docs))
        assert [f.outlier for f in back.frames] == [f.outlier for f in seq.frames]
        for a, b in zip(back.frames, seq.frames):
            np.testing.assert_array_equal(a.measurement, b.measurement)

    def test_version_checks(self):
        doc = synth.sample_shapes(1, np.random.default_rng(0))[0].to_json()
        with pytest.raises(ValueError, match="newer"):
            synth.ShapeRecord.from_json({**doc, "format_version": 99})
        del doc["format_version"]
        with pytest.raises(ValueError, match="format_version"):
            synth.ShapeRecord.from_json(doc)
