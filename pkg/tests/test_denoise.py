import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from fluorostab.denoise import (ComponentDenoiser, DenoiseConfig, FilterModel, bernoulli_sample, blind_spot_loss,
                                denoise_component, fit_student, fit_teacher, predict)
from fluorostab.metrics import psnr
from fluorostab.phantom import generate_phantom, random_phantom_spec
from fluorostab.video_io import add_gaussian_noise
from oracles import convolve_direct


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.floats(0.05, 0.95))
def test_bernoulli_split_is_complementary(seed, p):
    frame = np.random.default_rng(seed).random((16, 16))
    masked, held, mask = bernoulli_sample(frame, p, seed)
    assert np.array_equal(masked + held, frame)
    assert np.array_equal(masked == 0, ~mask.keep | (frame == 0))


def test_bernoulli_drop_fraction():
    _, _, mask = bernoulli_sample(np.ones((128, 128)), 0.3, seed=1)
    assert 0.27 <= mask.dropped.mean() <= 0.33


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
def test_bernoulli_bad_p(p):
    with pytest.raises(ValueError):
        bernoulli_sample(np.ones((8, 8)), p, 0)


def test_teacher_reproduces_constant():
    frame = np.full((32, 32), 0.37)
    model = fit_teacher(frame, seed=2)
    out = predict(model, frame)
    assert np.max(np.abs(out[2:-2, 2:-2] - 0.37)) <= 1e-6
    assert model.kernel[2, 2] == 0.0 and model.center_tap_zero


def test_teacher_reduces_noise_variance():
    for seed in range(5):
        noisy = 0.5 + np.random.default_rng(seed).normal(0, np.sqrt(0.003), (64, 64))
        out = predict(fit_teacher(noisy, seed=seed), noisy, clamp=False)
        assert np.var(out - 0.5) < 0.003


def test_more_replicas_not_worse():
    frame = np.random.default_rng(3).random((48, 48))
    m1 = fit_teacher(frame, replicas=1, seed=0)
    m20 = fit_teacher(frame, replicas=20, seed=0)
    assert blind_spot_loss(m20, frame, 0.3, 20, 0) <= blind_spot_loss(m1, frame, 0.3, 20, 0)


def test_teacher_deterministic():
    frame = np.random.default_rng(4).random((32, 32))
    a, b = fit_teacher(frame, seed=5), fit_teacher(frame, seed=5)
    assert np.array_equal(a.kernel, b.kernel) and a.bias == b.bias


def test_teacher_rejects_tiny_frame():
    with pytest.raises(ValueError):
        fit_teacher(np.zeros((3, 3)), kernel_radius=2)


def test_identity_predict():
    frame = np.random.default_rng(5).random((20, 20))
    assert np.array_equal(predict(FilterModel.identity(), frame), frame)


def test_constant_in_constant_out():
    k = np.full((3, 3), 1 / 9)
    out = predict(FilterModel(k), np.full((10, 10), 0.6))
    assert np.allclose(out, 0.6, atol=1e-15)


def test_impulse_response_is_kernel():
    k = np.arange(25.0).reshape(5, 5) / 100
    img = np.zeros((11, 11))
    img[5, 5] = 1.0
    out = predict(FilterModel(k), img, clamp=False)
    assert np.allclose(out[3:8, 3:8], k, atol=1e-15)
    assert np.allclose(out, convolve_direct(img, k), atol=1e-15)


def test_predict_matches_direct_convolution():
    rng = np.random.default_rng(6)
    img = rng.random((9, 12))
    k = rng.standard_normal((5, 5))
    assert np.allclose(predict(FilterModel(k, 0.1), img, clamp=False), convolve_direct(img, k) + 0.1, atol=1e-12)


def test_predict_clamps_background_only():
    k = np.zeros((3, 3))
    k[1, 1] = 2.0
    img = np.full((8, 8), 0.75)
    assert predict(FilterModel(k), img).max() == 1.0
    assert predict(FilterModel(k), img, clamp=False).max() == 1.5


def test_student_identity_target():
    frames = [np.random.default_rng(s).random((24, 24)) for s in range(2)]
    model = fit_student(frames, frames, kernel_radius=2)
    residual = sum(np.sum((predict(model, f, clamp=False) - f) ** 2) for f in frames)
    assert residual <= 1e-10
    assert np.allclose(model.kernel, FilterModel.identity(2).kernel, atol=1e-8)


def test_student_recovers_box_blur():
    rng = np.random.default_rng(7)
    frames = [rng.random((32, 32)) for _ in range(2)]
    box = np.full((3, 3), 1 / 9)
    targets = [ndimage.convolve(f, box, mode="wrap") for f in frames]
    model = fit_student(frames, targets, kernel_radius=2)
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = box
    assert np.allclose(model.kernel, expected, atol=1e-6)
    assert abs(model.bias) <= 1e-6


def test_student_beats_trivial_filters():
    rng = np.random.default_rng(8)
    frame = rng.random((32, 32))
    target = predict(fit_teacher(frame, seed=1), frame, clamp=False)
    model = fit_student([frame], [target])
    res = np.sum((predict(model, frame, clamp=False) - target) ** 2)
    assert res <= np.sum(target ** 2)
    assert res <= np.sum((frame - target) ** 2)


def test_student_empty():
    with pytest.raises(ValueError):
        fit_student([], [])


def test_model_text_round_trip(tmp_path):
    model = fit_teacher(np.random.default_rng(9).random((24, 24)), seed=3)
    model.save(tmp_path / "k.txt")
    again = FilterModel.load(tmp_path / "k.txt")
    assert np.array_equal(again.kernel, model.kernel)
    assert again.bias == model.bias and again.center_tap_zero


def test_noiseless_constant_component():
    frame = np.full((32, 32), 0.42)
    assert np.max(np.abs(denoise_component(frame) - frame)) <= 1e-6


def test_noisy_background_gains_three_db():
    for seed in range(5):
        clean, _ = generate_phantom(random_phantom_spec(seed, n_blobs=0, frames=1))
        noisy = add_gaussian_noise(clean, 0.003, seed)[0]
        out = denoise_component(noisy, DenoiseConfig(seed=seed))
        assert psnr(out, clean[0]) >= psnr(noisy, clean[0]) + 3.0


def test_student_close_to_teacher():
    clean, _ = generate_phantom(random_phantom_spec(1, n_blobs=0, frames=1))
    noisy = add_gaussian_noise(clean, 0.003, 1)[0]
    den = ComponentDenoiser(DenoiseConfig(use_student=True)).fit(noisy)
    diff = np.abs(predict(den.student, noisy) - predict(den.teacher, noisy))
    assert diff.mean() <= 0.01


def test_component_denoiser_fits_once():
    rng = np.random.default_rng(10)
    den = ComponentDenoiser()
    den(rng.random((16, 16)))
    kernel = den.model.kernel.copy()
    den(rng.random((16, 16)))
    assert np.array_equal(den.model.kernel, kernel)
