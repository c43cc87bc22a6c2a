import numpy as np
import pytest

from splatgaze.deform import Providers
from splatgaze.fit import FitConfig, FitProblem, fit, objective, render_eyes
from splatgaze.geometry import pitchyaw_to_vector
from splatgaze.losses import EyeMask, angular_error, synthesize_eye_mask
from splatgaze.raster import render
from splatgaze.rig import pose_all_eyes
from splatgaze.scene import AvatarState

FREE = ("left_pitch", "left_yaw")
BOUNDS = np.radians([[-30, 30], [-30, 30]])


@pytest.fixture(scope="module")
def eye_mask(eyeball, eyeball_camera):
    return synthesize_eye_mask(eyeball, Providers(), AvatarState.neutral(0, 0), eyeball_camera, 0.5, 2)


def target_for(scene, camera, pitch, yaw):
    return render_eyes(scene, AvatarState.neutral(0, 0, left=(pitch, yaw)), camera)


def problem(scene, camera, mask, truth, init, **kw):
    return FitProblem(scene, camera, target_for(scene, camera, *truth), mask, FREE, BOUNDS, np.asarray(init), **kw)


def test_self_consistency(eyeball, eyeball_camera, eye_mask):
    truth = np.radians([4.0, -7.0])
    pb = problem(eyeball, eyeball_camera, eye_mask, truth, truth)
    assert objective(pb, truth) <= 1e-6
    assert objective(pb, truth + np.radians([2.0, 0.0])) > 1e-4


def test_objective_ignores_unmasked_target(eyeball, eyeball_camera, eye_mask, rng):
    truth = np.radians([4.0, -7.0])
    pb = problem(eyeball, eyeball_camera, eye_mask, truth, [0.0, 0.0])
    noisy = pb.target.copy()
    outside = eye_mask.weights == 0
    noisy[outside] = rng.random((int(outside.sum()), 3))
    pb2 = FitProblem(eyeball, eyeball_camera, noisy, eye_mask, FREE, BOUNDS, np.zeros(2))
    x = np.radians([1.0, 2.0])
    assert objective(pb, x) == objective(pb2, x)


def test_objective_matches_standalone_pipeline(eyeball, eyeball_camera, eye_mask):
    truth = np.radians([-3.0, 6.0])
    pb = problem(eyeball, eyeball_camera, eye_mask, truth, [0.0, 0.0])
    x = np.radians([2.0, -1.0])
    # standalone: build the state by hand, pose, render, mask, mean
    state = AvatarState(np.zeros(0), np.zeros(0), pitchyaw_to_vector(*x), np.array([0.0, 0.0, 1.0]))
    img = render(pose_all_eyes(eyeball, state), eyeball_camera, threads=3).data
    w = eye_mask.weights[:, :, None]
    want = np.abs(w * img - w * pb.target).sum() / img.size
    assert objective(pb, x) == pytest.approx(want, abs=1e-12)


def test_start_at_optimum(eyeball, eyeball_camera, eye_mask):
    truth = np.radians([2.0, 3.0])
    res = fit(problem(eyeball, eyeball_camera, eye_mask, truth, truth))
    assert res.accepted == 0
    assert res.trace == [res.objective]
    assert np.array_equal(res.x, truth)


def test_round_trip_five_degrees(eyeball, eyeball_camera, eye_mask):
    truth = np.radians([6.0, -10.0])
    init = truth + np.radians([3.0, -4.0])  # 5 degrees off
    res = fit(problem(eyeball, eyeball_camera, eye_mask, truth, init))
    err = angular_error(pitchyaw_to_vector(*res.x), pitchyaw_to_vector(*truth))
    assert err < 1.0
    assert all(b < a for a, b in zip(res.trace, res.trace[1:]))
    assert np.all(res.x >= BOUNDS[:, 0]) and np.all(res.x <= BOUNDS[:, 1])


def test_tolerance_monotone_and_deterministic(eyeball, eyeball_camera, eye_mask):
    truth = np.radians([-5.0, 8.0])
    pb = problem(eyeball, eyeball_camera, eye_mask, truth, truth + np.radians([4.0, 4.0]))
    finals = []
    for tol in (2.0, 0.5, 0.1):
        finals.append(fit(pb, FitConfig(tolerance=np.radians(tol))).objective)
    assert finals[0] >= finals[1] >= finals[2]
    a = fit(pb, FitConfig(tolerance=np.radians(0.5)), threads=1)
    b = fit(pb, FitConfig(tolerance=np.radians(0.5)), threads=2)
    assert a.x.tobytes() == b.x.tobytes() and a.trace == b.trace


def test_max_iters_zero(eyeball, eyeball_camera, eye_mask):
    pb = problem(eyeball, eyeball_camera, eye_mask, np.zeros(2), np.radians([5.0, 5.0]))
    res = fit(pb, FitConfig(max_iters=0))
    assert res.iterations == 0 and np.array_equal(res.x, pb.initial)


def test_kappa_parameter_moves_gaze(eyeball, eyeball_camera):
    pb = FitProblem(eyeball, eyeball_camera, np.zeros((64, 64, 3)), EyeMask.ones(64, 64),
                    ("left_kappa_yaw",), np.radians([[-10, 10]]), np.zeros(1))
    scene, _ = pb.configure([np.radians(3.0)])
    assert scene.left_rig.kappa[1] == np.radians(3.0)
    assert eyeball.left_rig.kappa[1] == 0.0


@pytest.mark.parametrize(
    "kw,match",
    [
        (dict(free=("nose",)), "free parameters"),
        (dict(bounds=np.radians([[5, -5], [-30, 30]])), "lower < upper"),
        (dict(initial=np.radians([40.0, 0.0])), "outside"),
    ],
)
def test_problem_validation(eyeball, eyeball_camera, eye_mask, kw, match):
    args = dict(free=FREE, bounds=BOUNDS, initial=np.zeros(2))
    args.update(kw)
    with pytest.raises(ValueError, match=match):
        FitProblem(eyeball, eyeball_camera, np.zeros((64, 64, 3)), eye_mask, **args)


def test_target_size_mismatch(eyeball, eyeball_camera, eye_mask):
    with pytest.raises(ValueError, match="target is"):
        FitProblem(eyeball, eyeball_camera, np.zeros((32, 32, 3)), eye_mask, FREE, BOUNDS, np.zeros(2))


def test_result_json(eyeball, eyeball_camera, eye_mask):
    res = fit(problem(eyeball, eyeball_camera, eye_mask, np.zeros(2), np.zeros(2)), FitConfig(max_iters=1))
    d = res.to_dict()
    assert set(d["parameters_rad"]) == set(FREE)
    assert d["parameters_deg"]["left_pitch"] == pytest.approx(np.degrees(d["parameters_rad"]["left_pitch"]))
