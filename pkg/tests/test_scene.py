import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splatgaze import synthetic
from splatgaze.scene import (
    AvatarState,
    Camera,
    GaussianSet,
    PlyError,
    SceneError,
    load_gaussians,
    load_scene,
    save_gaussians,
    save_scene,
    validate,
)

from conftest import FIXTURES


def one_vertex(**overrides):
    gs = GaussianSet(
        positions=np.zeros((1, 3)),
        orientations=np.array([[1.0, 0, 0, 0]]),
        scales=np.ones((1, 3)),
        opacities=np.array([0.5]),
        colors=np.zeros((1, 3)),
    )
    return gs.replace(**overrides)


def write_raw_ply(path, names, rows, count=None):
    rows = np.asarray(rows, dtype="<f4")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(rows) if count is None else count}"]
    header += [f"property float {n}" for n in names] + ["end_header"]
    path.write_bytes(("\n".join(header) + "\n").encode() + rows.tobytes())


BASE = ["x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "ch_0", "ch_1", "ch_2"]


def test_log_scale_zero_is_unit_scale(tmp_path):
    write_raw_ply(tmp_path / "a.ply", BASE, [[0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0.1, 0.2, 0.3]])
    gs = load_gaussians(tmp_path / "a.ply")
    assert gs.scales.tolist() == [[1.0, 1.0, 1.0]]


def test_logit_opacity_zero_is_half(tmp_path):
    write_raw_ply(tmp_path / "a.ply", BASE, [[0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0.1, 0.2, 0.3]])
    assert load_gaussians(tmp_path / "a.ply").opacities[0] == 0.5


def test_round_trip_random_set(tmp_path, rng):
    gs = synthetic.random_gaussians(rng, 100, channels=5)
    gs = gs.replace(features=rng.normal(size=(100, 4)))
    save_gaussians(gs, tmp_path / "r.ply")
    back = load_gaussians(tmp_path / "r.ply")
    for name in ("positions", "orientations", "scales", "opacities", "colors", "features"):
        np.testing.assert_allclose(getattr(back, name), getattr(gs, name), atol=1e-6, rtol=0, err_msg=name)
    assert validate_set_ok(back)


def validate_set_ok(gs):
    from splatgaze.scene import validate_gaussians

    return validate_gaussians(gs) == []


@given(n=st.integers(0, 20), channels=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_round_trip_property(tmp_path_factory, n, channels, seed):
    gs = synthetic.random_gaussians(np.random.default_rng(seed), n, channels)
    path = tmp_path_factory.mktemp("ply") / "g.ply"
    save_gaussians(gs, path)
    back = load_gaussians(path)
    assert back.count == n and back.channels == channels
    np.testing.assert_allclose(back.positions, gs.positions, atol=1e-6, rtol=0)
    np.testing.assert_allclose(back.opacities, gs.opacities, atol=1e-6, rtol=0)
    np.testing.assert_allclose(back.scales, gs.scales, atol=1e-6, rtol=0)


def test_loading_is_deterministic(tmp_path, rng):
    save_gaussians(synthetic.random_gaussians(rng, 30), tmp_path / "g.ply")
    a, b = load_gaussians(tmp_path / "g.ply"), load_gaussians(tmp_path / "g.ply")
    assert a.equals(b)


@pytest.mark.parametrize(
    "names, rows, count, message",
    [
        (BASE[:-3], [[0] * 11], None, "no ch_"),
        (BASE[:3] + BASE[4:], [[0] * 13], None, "missing ['opacity']"),
        (BASE + ["bogus"], [[0] * 15], None, "unexpected ['bogus']"),
        (BASE, [[0] * 14, [0] * 14], 3, "count mismatch"),
    ],
)
def test_bad_ply_is_rejected(tmp_path, names, rows, count, message):
    write_raw_ply(tmp_path / "bad.ply", names, rows, count)
    with pytest.raises(PlyError, match=message.replace("[", r"\[").replace("]", r"\]")):
        load_gaussians(tmp_path / "bad.ply")


def test_non_finite_reports_index(tmp_path):
    rows = np.zeros((5, 14))
    rows[:, 7] = 1
    rows[3, 1] = np.nan
    write_raw_ply(tmp_path / "nan.ply", BASE, rows)
    with pytest.raises(PlyError, match="index 3"):
        load_gaussians(tmp_path / "nan.ply")


def test_malformed_header(tmp_path):
    (tmp_path / "h.ply").write_bytes(b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(PlyError, match="malformed header"):
        load_gaussians(tmp_path / "h.ply")


def test_missing_influence_block_uses_defaults(tmp_path, head):
    manifest = save_scene(head, tmp_path)
    m = json.loads(manifest.read_text())
    del m["influence"]
    manifest.write_text(json.dumps(m))
    assert load_scene(manifest).influence.as_tuple() == (0.15, 0.25, 0.075, 0.125)


def test_overlapping_rigs_rejected(tmp_path, head):
    manifest = save_scene(head, tmp_path)
    m = json.loads(manifest.read_text())
    m["rigs"]["left"]["range"] = [0, 6]
    m["rigs"]["right"]["range"] = [5, 10]
    manifest.write_text(json.dumps(m))
    with pytest.raises(SceneError, match="overlapping rig ranges"):
        load_scene(manifest)


def test_empty_landmarks_rejected(tmp_path, head):
    manifest = save_scene(head, tmp_path)
    (tmp_path / "facial_landmarks.txt").write_text("")
    with pytest.raises(SceneError, match="landmark count 0"):
        load_scene(manifest)


def test_missing_file_named(tmp_path, head):
    manifest = save_scene(head, tmp_path)
    (tmp_path / "eyes.ply").unlink()
    with pytest.raises(SceneError, match="eyes.ply"):
        load_scene(manifest)


def test_single_eye_landmark_file_is_split(tmp_path, head):
    manifest = save_scene(head, tmp_path)
    both = np.concatenate([head.left_eye_landmarks.points, head.right_eye_landmarks.points])
    np.savetxt(tmp_path / "eyes_lm.txt", both)
    m = json.loads(manifest.read_text())
    m["eye_landmarks"] = "eyes_lm.txt"
    manifest.write_text(json.dumps(m))
    scene = load_scene(manifest)
    np.testing.assert_allclose(scene.left_eye_landmarks.points, head.left_eye_landmarks.points)
    np.testing.assert_allclose(scene.right_eye_landmarks.points, head.right_eye_landmarks.points)


@pytest.mark.parametrize("name", ["head", "head8", "eyeball"])
def test_shipped_fixtures_validate(name):
    assert validate(load_scene(FIXTURES / name / "scene.json")) == []


def test_synthetic_fixture_loads(tmp_path):
    manifest = synthetic.write_head_fixture(tmp_path)
    scene = load_scene(manifest)
    assert validate(scene) == []
    assert scene.eyes.count == scene.right_rig.gaussian_range[1]


def test_valid_scene_has_no_violations(head):
    assert validate(head) == []


def test_bad_quaternion_named_by_index(head):
    q = head.facial.orientations.copy()
    q[3] *= 0.9
    bad = validate(head.replace(facial=head.facial.replace(orientations=q)))
    assert len(bad) == 1
    assert bad[0].index == 3 and bad[0].field == "orientations"


def test_opacity_out_of_range(head):
    a = head.facial.opacities.copy()
    a[7] = 1.2
    bad = validate(head.replace(facial=head.facial.replace(opacities=a)))
    assert [str(v) for v in bad] == ["GaussianSet(facial).opacities[7]: opacity out of range: 1.2"]


def test_non_positive_scale(head):
    s = head.eyes.scales.copy()
    s[2, 1] = 0.0
    bad = validate(head.replace(eyes=head.eyes.replace(scales=s)))
    assert [(v.field, v.index) for v in bad] == [("scales", 2)]


def test_gaze_pitch_yaw_conversion():
    s = AvatarState.neutral(0, 0, left=(0.0, np.pi / 2), right=(np.pi / 2, 0.0))
    np.testing.assert_allclose(s.left_gaze, [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(s.right_gaze, [0, 1, 0], atol=1e-15)
    with pytest.raises(ValueError):
        AvatarState(np.zeros(0), np.zeros(0), np.array([0, 0, 2.0]), np.array([0, 0, 1.0]))


def test_camera_validation():
    assert Camera(10, 10, 5, 5, 10, 10).validate() == []
    m = np.eye(4)
    m[0, 0] = -1  # reflection
    assert Camera(10, 10, 5, 5, 10, 10, m).validate()
    assert Camera(-1, 10, 5, 5, 10, 10).validate()
