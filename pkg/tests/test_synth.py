import math

import numpy as np
import pytest
from scipy import stats

from pupilkit.synth import (
    EyeSceneParams,
    Glint,
    PlrModel,
    PlrTrajectory,
    StimulusTimeline,
    brightness_scale,
    frame_times,
    read_manifest,
    render_clean,
    render_eye,
    render_sequence,
    simulate_plr,
    write_dataset,
)

QUIET = dict(illumination_gradient=0.0, gaussian_noise_sigma=0.0, salt_pepper_density=0.0)


def test_noise_free_pupil_pixels_exact():
    p = EyeSceneParams(**QUIET)
    img, truth = render_eye(p)
    cx, cy = truth.center
    assert (cx, cy) == (319.5, 239.5) and truth.diameter == 60.0
    yy, xx = np.mgrid[0:480, 0:640]
    inside = (xx - cx) ** 2 + (yy - cy) ** 2 <= 30 ** 2
    assert np.array_equal(img.data == p.pupil_level, inside)


def test_layers_and_glint():
    p = EyeSceneParams(**QUIET, glint=Glint((100.0, 100.0), 5))
    a = render_clean(p)
    assert a[0, 0] == 220 and a[240, 320 + 50] == p.iris_level and a[100, 100] == 255


def test_ramp_is_centred():
    p = EyeSceneParams(illumination_gradient=10.0, gaussian_noise_sigma=0.0, salt_pepper_density=0.0)
    img, _ = render_eye(p)
    assert int(img.data[0, 0]) == 215 and int(img.data[0, -1]) == 225


def test_determinism():
    p = EyeSceneParams(width=200, height=150, pupil_radius=20, iris_radius=40, seed=7)
    assert render_eye(p)[0] == render_eye(p)[0]
    assert render_eye(p)[0] != render_eye(EyeSceneParams(width=200, height=150, pupil_radius=20,
                                                         iris_radius=40, seed=8))[0]


def test_salt_pepper_count():
    counts = []
    for seed in range(100):
        p = EyeSceneParams(width=100, height=100, pupil_radius=10, iris_radius=20,
                           illumination_gradient=0.0, gaussian_noise_sigma=0.0,
                           salt_pepper_density=0.05, seed=seed)
        img, _ = render_eye(p)
        clean = render_clean(p)
        # an impulse equal to the clean value is invisible; levels 15/50/220 never are
        counts.append(int((img.data != clean).sum()))
    counts = np.array(counts)
    assert ((counts >= 430) & (counts <= 570)).all()
    assert abs(counts.mean() - 500) <= 7


def test_gaussian_noise_chi_square():
    sigma = 4.0
    p0 = dict(width=120, height=100, pupil_radius=10, iris_radius=30, pupil_level=100,
              iris_level=120, sclera_level=140, illumination_gradient=0.0,
              gaussian_noise_sigma=sigma, salt_pepper_density=0.0)
    # rounding to integers adds uniform noise of variance 1/12
    var = sigma * sigma + 1.0 / 12.0
    for seed in range(5):
        p = EyeSceneParams(**p0, seed=seed)
        img, _ = render_eye(p)
        resid = img.data.astype(float) - render_clean(p)
        n = resid.size
        chi2 = float((resid ** 2).sum() / var)
        pval = stats.chi2.sf(chi2, n) if chi2 > n else stats.chi2.cdf(chi2, n)
        assert 2 * pval > 1e-3
        assert abs(resid.mean()) < 4 * math.sqrt(var / n)


@pytest.mark.parametrize("kw", [
    dict(pupil_center=(10.0, 10.0)),
    dict(pupil_radius=90.0),
    dict(pupil_radius=0.0),
    dict(width=0),
    dict(salt_pepper_density=1.5),
])
def test_invalid_geometry(kw):
    with pytest.raises(ValueError):
        render_eye(EyeSceneParams(**kw))


# --- reflex model -------------------------------------------------------------

def test_constant_darkness_fixed_point():
    m = PlrModel()
    out = simulate_plr(m, StimulusTimeline(((0.0, 0.0),)), 0.05, 5.0)
    assert len(out) == 101
    assert all(d == m.d_dark for _, d in out)


def test_step_closed_form():
    m = PlrModel()
    traj = PlrTrajectory(m, StimulusTimeline.step(0.0))
    t = m.latency + m.tau_constrict
    assert traj(t) == pytest.approx(m.d_floor + (7.5 - m.d_floor) / math.e, abs=1e-6)
    assert traj(m.latency) == pytest.approx(7.5, abs=1e-12)
    # within the latency nothing happens
    assert traj(m.latency / 2) == 7.5


def test_redilation_uses_slow_constant():
    m = PlrModel()
    tl = StimulusTimeline(((0.0, 1.0), (6.0, 0.0)))
    traj = PlrTrajectory(m, tl)
    d_low = traj(6.0 + m.latency)
    assert d_low == pytest.approx(m.d_floor, abs=1e-4)
    target = d_low + 0.632120559 * (m.d_dark - d_low)
    ts = np.linspace(6.0 + m.latency, 12.0, 20001)
    t63 = ts[np.argmax([traj(t) >= target for t in ts])] - (6.0 + m.latency)
    assert t63 == pytest.approx(m.tau_dilate, abs=1e-3)
    assert t63 > m.tau_constrict


def test_bounds_on_random_timelines(rng):
    m = PlrModel()
    for _ in range(20):
        times = np.cumsum(rng.uniform(0.1, 2.0, 6))
        ev = ((0.0, float(rng.random())),) + tuple((float(t), float(rng.random())) for t in times)
        out = simulate_plr(m, StimulusTimeline(ev), 0.01, 15.0)
        d = np.array([v for _, v in out])
        assert (d >= m.d_floor - 1e-12).all() and (d <= m.d_dark + 1e-12).all()


def test_equilibrium_monotone():
    m = PlrModel()
    eq = [simulate_plr(m, StimulusTimeline(((0.0, lv),)), 0.1, 30.0)[-1][1] for lv in np.linspace(0, 1, 11)]
    assert all(a > b for a, b in zip(eq, eq[1:]))
    assert eq[-1] == pytest.approx(m.d_floor, abs=1e-6)


def test_invalid_dt():
    with pytest.raises(ValueError):
        simulate_plr(PlrModel(), StimulusTimeline.step(1.0), 0.0, 2.0)


def test_timeline_validation():
    with pytest.raises(ValueError):
        StimulusTimeline(((1.0, 0.0),))
    with pytest.raises(ValueError):
        StimulusTimeline(((0.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        StimulusTimeline(((0.0, 2.0),))


def test_render_sequence_follows_model():
    m = PlrModel()
    tl = StimulusTimeline.step(3.0)
    tmpl = EyeSceneParams(width=160, height=120, iris_radius=58)
    frames = render_sequence(m, tl, tmpl, fps=30, duration=10)
    assert len(frames) == 300 == len(frame_times(30, 10))
    sim = dict(simulate_plr(m, tl, 1 / 30, 10))
    for fr in frames[::7]:
        expect = PlrTrajectory(m, tl)(fr.t)
        assert fr.truth.pupil_radius == expect * m.px_per_mm / 2
    # simulate_plr samples k*dt; identical times give identical diameters
    assert frames[90].diameter_mm == pytest.approx(sim[90 * (1 / 30)], abs=1e-12)
    dark = [f.truth.pupil_radius for f in frames if f.t < 3.0]
    bright = [f.truth.pupil_radius for f in frames if f.t > 4.0]
    assert min(dark) > max(bright)
    assert frames[0].image.data[0, 80] < frames[-1].image.data[0, 80]
    assert brightness_scale(1.0) > brightness_scale(0.0)


def test_dataset_roundtrip(tmp_path):
    m = PlrModel()
    frames = render_sequence(m, StimulusTimeline.step(0.1), EyeSceneParams(width=160, height=120,
                                                                           iris_radius=58), 10, 0.5)
    manifest = write_dataset(frames, tmp_path)
    rows = read_manifest(manifest)
    assert [r["frame_index"] for r in rows] == list(range(5))
    assert rows[3]["radius_px"] == pytest.approx(frames[3].truth.pupil_radius, abs=1e-6)
    assert sorted(p.name for p in tmp_path.glob("*.pgm"))[0] == "frame_00000.pgm"
