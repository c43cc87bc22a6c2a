import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatgaze.deform import Providers
from splatgaze.losses import (
    EyeMask,
    LossReport,
    LossWeights,
    angular_error,
    blank_color,
    combine_losses,
    eye_hr_loss,
    eye_lr_loss,
    facial_blank_loss,
    l1_image,
    mask_from_alpha,
    masked_l1,
    metrics_report,
    psnr,
    ssim,
    synthesize_eye_mask,
    total_loss,
)
from splatgaze.raster import Streams, RenderTarget, downsample_array, render
from splatgaze.rig import pose_all_eyes
from splatgaze.scene import AvatarState, GaussianSet


def naive_l1(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for c in range(a.shape[2]):
                total += abs(a[i, j, c] - b[i, j, c])
    return total / a.size


def naive_ssim(a, b, size=11, sigma=1.5):
    g = [math.exp(-((k - (size - 1) / 2) ** 2) / (2 * sigma * sigma)) for k in range(size)]
    g = np.array(g) / sum(g)
    w = np.outer(g, g)
    c1, c2 = 0.01**2, 0.03**2
    per_channel = []
    for ch in range(a.shape[2]):
        vals = []
        for i in range(a.shape[0] - size + 1):
            for j in range(a.shape[1] - size + 1):
                x = a[i : i + size, j : j + size, ch]
                y = b[i : i + size, j : j + size, ch]
                mx, my = (w * x).sum(), (w * y).sum()
                vx = (w * (x - mx) ** 2).sum()
                vy = (w * (y - my) ** 2).sum()
                cxy = (w * (x - mx) * (y - my)).sum()
                vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


def rand_mask(rng, h, w):
    m = rng.random((h, w))
    m[m < 0.4] = 0.0
    return EyeMask(m)


# ---------------------------------------------------------------------------
# L1 terms


def test_l1_examples(rng):
    a = rng.random((5, 6, 3))
    assert l1_image(a, a) == 0.0
    assert l1_image(np.zeros((4, 4, 3)), np.ones((4, 4, 3))) == 1.0
    b = rng.random((5, 6, 3))
    assert l1_image(a, b) == pytest.approx(naive_l1(a, b), abs=1e-12)
    assert l1_image(a, b) == l1_image(b, a)


def test_l1_accepts_render_targets(rng):
    a = rng.random((4, 4, 2))
    assert l1_image(RenderTarget.from_array(a), a) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="differ"):
        l1_image(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ValueError, match="mask"):
        masked_l1(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), EyeMask(np.ones((2, 2))))


def test_mask_validation():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        EyeMask(np.full((2, 2), 1.5))


def test_eye_lr_cases(rng):
    gt = rng.random((8, 8, 3))
    lr = rng.random((4, 4, 3))
    assert eye_lr_loss(lr, gt, EyeMask(np.zeros((4, 4))), 2) == 0.0
    assert eye_lr_loss(downsample_array(gt, 2), gt, rand_mask(rng, 4, 4), 2) == 0.0
    m = rand_mask(rng, 4, 4)
    base = eye_lr_loss(lr, gt, m, 2)
    lr2 = lr.copy()
    lr2[m.weights == 0] = rng.random((int((m.weights == 0).sum()), 3))
    assert eye_lr_loss(lr2, gt, m, 2) == base


def test_eye_lr_matches_loop(rng):
    gt = rng.random((8, 6, 3))
    lr = rng.random((4, 3, 3))
    m = rand_mask(rng, 4, 3)
    d = downsample_array(gt, 2)
    w = m.weights[:, :, None]
    assert eye_lr_loss(lr, gt, m, 2) == pytest.approx(naive_l1(w * lr, w * d), abs=1e-12)


def test_eye_hr_cases(rng):
    gt = rng.random((6, 6, 3))
    hr = rng.random((6, 6, 3))
    assert eye_hr_loss(hr, gt, EyeMask(np.zeros((6, 6)))) == 0.0
    assert eye_hr_loss(gt, gt, rand_mask(rng, 6, 6)) == 0.0
    m = rand_mask(rng, 6, 6)
    hr2 = hr.copy()
    hr2[m.weights == 0] += 10.0
    assert eye_hr_loss(hr2, gt, m) == eye_hr_loss(hr, gt, m)


def test_blank_cases(rng):
    c = np.array([0.1, 0.7, 0.4])
    m = rand_mask(rng, 5, 5)
    assert facial_blank_loss(np.broadcast_to(c, (5, 5, 3)), m, c) == 0.0
    assert facial_blank_loss(rng.random((5, 5, 3)), EyeMask(np.zeros((5, 5))), c) == 0.0
    img = rng.random((5, 5, 3))
    assert np.array_equal(blank_color(3, 7), blank_color(3, 7))
    assert facial_blank_loss(img, m, seed=7) == facial_blank_loss(img, m, seed=7)
    assert facial_blank_loss(img, m, seed=7) == facial_blank_loss(img, m, blank_color(3, 7))
    c = blank_color(8, 3)
    assert np.all((c >= 0) & (c < 1))


def test_blank_color_channel_mismatch(rng):
    with pytest.raises(ValueError, match="channels"):
        facial_blank_loss(rng.random((4, 4, 3)), EyeMask(np.ones((4, 4))), np.zeros(2))


# ---------------------------------------------------------------------------
# composition


def test_combine_examples():
    assert combine_losses(0, 0, 0, 0).total == 0.0
    assert combine_losses(1, 1, 1, 1).total == 3.0
    assert LossWeights() == LossWeights(0.5, 0.5, 1.0)


@given(st.lists(st.floats(0, 10), min_size=4, max_size=4), st.lists(st.floats(0, 3), min_size=3, max_size=3))
def test_combine_linear(parts, w):
    r = combine_losses(*parts, LossWeights(*w))
    assert r.total == parts[0] + w[0] * parts[1] + w[1] * parts[2] + w[2] * parts[3]


def test_total_loss_report(rng):
    gt = rng.random((8, 8, 3))
    streams = Streams(*(RenderTarget.from_array(rng.random((8, 8, 3))) for _ in range(3)))
    m = rand_mask(rng, 8, 8)
    r = total_loss(streams, gt, m, seed=5)
    assert r.rgb_l1 == l1_image(streams.combined, gt)
    assert r.eye_hr == eye_hr_loss(streams.eyes, gt, m)
    assert r.eye_lr == eye_lr_loss(downsample_array(streams.eyes.data, 2), gt, m.downsample(2), 2)
    assert r.blank == facial_blank_loss(streams.facial, m, seed=5)
    assert abs(r.total - (r.rgb_l1 + 0.5 * r.eye_lr + 0.5 * r.eye_hr + 1.0 * r.blank)) <= 1e-12
    d = r.to_dict()
    assert d["vgg"] == "unavailable" and len(d["blank_color"]) == 3


def test_total_loss_zero_case(rng):
    gt = rng.random((4, 4, 3))
    c = np.array([0.2, 0.2, 0.2])
    streams = Streams(
        RenderTarget.from_array(gt), RenderTarget.from_array(np.broadcast_to(c, gt.shape)), RenderTarget.from_array(gt)
    )
    r = total_loss(streams, gt, EyeMask(np.ones((4, 4))), c=c)
    assert r.total == 0.0
    assert isinstance(r, LossReport)


# ---------------------------------------------------------------------------
# metrics


def test_psnr_examples():
    a = np.zeros((8, 8, 3))
    assert psnr(a, a) == float("inf")
    assert psnr(a, np.full((8, 8, 3), 0.5)) == pytest.approx(6.0206, abs=1e-3)
    assert psnr(a, np.full((8, 8, 3), 127.5), max_value=255) == pytest.approx(6.0206, abs=1e-3)


def test_ssim_identity(rng):
    a = rng.random((20, 20, 3))
    assert ssim(a, a) == 1.0


def test_ssim_matches_naive(rng):
    for shape in ((16, 18, 3), (24, 13, 1)):
        a = rng.random(shape)
        b = np.clip(a + rng.normal(0, 0.1, shape), 0, 1)
        assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-6)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)


def test_ssim_small_image(rng):
    a = rng.random((6, 8, 3))
    assert ssim(a, a) == 1.0
    assert -1 <= ssim(a, rng.random((6, 8, 3))) <= 1
    b = np.clip(a + 0.05, 0, 1)
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b, size=5), abs=1e-6)


def test_angular_error_examples():
    x, y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert angular_error(x, x) == 0.0
    assert abs(angular_error(x, y) - 90) <= 1e-9
    assert abs(angular_error(x, -x) - 180) <= 1e-9


def test_angular_error_rejects_non_unit():
    with pytest.raises(ValueError, match="unit"):
        angular_error([1.0, 1.0, 0], [1.0, 0, 0])


def test_metrics_report_sentinel(rng):
    a = rng.random((12, 12, 3))
    r = metrics_report(a, a, gaze_a=[0, 0, 1.0], gaze_b=[0, 0, 1.0], mask=np.ones((12, 12)))
    assert r["psnr_db"] == "inf" and r["ssim"] == 1.0 and r["gaze_error_deg"] == 0.0 and r["masked_l1"] == 0.0


# ---------------------------------------------------------------------------
# masks


def test_mask_threshold_semantics(eyeball, eyeball_camera):
    state = AvatarState.neutral(0, 0)
    m = synthesize_eye_mask(eyeball, Providers(), state, eyeball_camera, threshold=0.5)
    eyes = pose_all_eyes(eyeball, state)
    alpha = render(eyes, eyeball_camera).alpha
    assert np.array_equal(m.weights > 0, alpha > 0.5)
    assert set(np.unique(m.weights)) <= {0.0, 1.0}


def test_mask_without_eyes(head, head_camera):
    scene = head.replace(eyes=GaussianSet.empty(3), left_rig=head.left_rig.replace(gaussian_range=(0, 0)),
                         right_rig=head.right_rig.replace(gaussian_range=(0, 0)))
    m = synthesize_eye_mask(scene, Providers(), AvatarState.neutral(4, 3), head_camera, dilation=3)
    assert np.all(m.weights == 0)


def test_mask_deterministic(head, providers, head_camera):
    s = AvatarState.neutral(4, 3)
    a = synthesize_eye_mask(head, providers, s, head_camera, dilation=2)
    b = synthesize_eye_mask(head, providers, s, head_camera, dilation=2)
    assert a.weights.tobytes() == b.weights.tobytes()


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_mask_grows_with_dilation(seed, threshold):
    rng = np.random.default_rng(seed)
    alpha = rng.random((24, 24)) ** 4
    prev = mask_from_alpha(alpha, threshold, 0).weights
    for r in range(1, 5):
        cur = mask_from_alpha(alpha, threshold, r).weights
        assert np.all(cur >= prev)
        prev = cur


def test_mask_threshold_bounds():
    with pytest.raises(ValueError):
        mask_from_alpha(np.zeros((2, 2)), 1.0)
