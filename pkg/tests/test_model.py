import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bisac.detection import realize_waveform
from bisac.model import (
    BeamformingMatrix,
    ChannelSet,
    SystemConfig,
    beampattern,
    detection_probability,
    equal_gain_combiner,
    los_channel,
    rate,
    sample_covariance,
    sinr_ap,
    sinr_tag,
    sinr_ue,
    steering_vector,
)
from conftest import (
    crandn,
    mc_sinr_ap,
    mc_sinr_tag,
    mc_sinr_ue,
    random_beamformer,
    random_channels,
    random_config,
    simulate_link,
)


def _cfg(**kw):
    base = dict(n_t=1, n_r=1, sigma2_ap=0.3, sigma2_t=0.2, sigma2_u=0.1, alpha=0.5,
                gamma_tth=1.0, gamma_apth=1.0, p_t=1.0, L=16)
    base.update(kw)
    return SystemConfig(**base)


# -- configuration -------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    dict(n_t=4, n_r=2), dict(sigma2_t=0.0), dict(gamma_apth=-1.0), dict(alpha=1.5),
    dict(p_t=-1.0), dict(L=1), dict(p_f=1.0), dict(n_t=0),
])
def test_config_rejects_invalid(bad):
    with pytest.raises(ValueError):
        _cfg(**bad)


def test_config_edge_values_allowed():
    _cfg(alpha=0.0, p_t=0.0)


# -- steering vectors and channels ---------------------------------------------

def test_steering_vector_broadside_and_endfire():
    assert np.allclose(steering_vector(0.0, 5), np.ones(5))
    a = np.asarray(steering_vector(np.pi / 2, 4))
    assert np.allclose(a, [1, -1, 1, -1])


def test_steering_vector_length_one():
    assert np.allclose(steering_vector(0.7, 1), [1.0])


def test_steering_vector_rejects_empty():
    with pytest.raises(ValueError):
        steering_vector(0.1, 0)


@given(st.floats(-np.pi, np.pi), st.integers(1, 32))
def test_steering_vector_unit_modulus(theta, n):
    a = np.asarray(steering_vector(theta, n))
    assert a.shape == (n,)
    assert np.allclose(np.abs(a), 1.0)
    assert np.vdot(a, a).real == pytest.approx(n)


def test_los_channel_examples():
    h = los_channel(0.8, np.pi / 4, 16)
    assert np.allclose(h, 0.8 * np.exp(1j * np.pi * np.arange(16) * np.sin(np.pi / 4)))
    assert np.allclose(los_channel(0.0, 0.3, 4), 0)
    assert np.allclose(los_channel(1.0, 0.0, 4), 1)


def test_default_channels_follow_reference_geometry(default_ch, default_cfg):
    a_tag = 0.8 * np.exp(1j * np.pi * np.arange(16) * np.sin(np.pi / 4))
    a_ue = 0.8 * np.exp(1j * np.pi * np.arange(16) * np.sin(7 * np.pi / 10))
    assert np.allclose(default_ch.h_f, a_tag.conj())
    assert np.allclose(default_ch.h_b, a_tag)
    assert np.allclose(default_ch.h_u, a_ue.conj())
    assert default_ch.h_tu == 0.5
    # |h w|^2 is the beampattern at the terminal's angle
    w = crandn(np.random.default_rng(0), 16)
    R = np.outer(w, w.conj())
    assert abs(default_ch.h_f @ w) ** 2 == pytest.approx(0.64 * beampattern(R, [np.pi / 4])[0])


def test_channel_arrays_are_read_only(default_ch):
    with pytest.raises(ValueError):
        default_ch.h_f[0] = 0


# -- beamforming matrix and covariance -----------------------------------------

def test_beamformer_shape_checks():
    with pytest.raises(ValueError):
        BeamformingMatrix.from_matrix(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        BeamformingMatrix(np.zeros(3), np.zeros(2), np.zeros((3, 3)))


def test_sample_covariance_examples():
    M = np.zeros((3, 5), complex)
    M[0, 0] = 1
    R = sample_covariance(BeamformingMatrix.from_matrix(M))
    E = np.zeros((3, 3))
    E[0, 0] = 1
    assert np.allclose(R, E)
    M = np.hstack([np.eye(3), np.zeros((3, 2))])[:, [3, 4, 0, 1, 2]]
    assert np.allclose(sample_covariance(BeamformingMatrix.from_matrix(M)), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_covariance_hermitian_psd_and_power(seed, n):
    W = random_beamformer(np.random.default_rng(seed), n)
    R = sample_covariance(W)
    assert np.allclose(R, R.conj().T)
    assert np.linalg.eigvalsh(R).min() >= -1e-10 * np.trace(R).real
    assert np.trace(R).real == pytest.approx(W.power(), rel=1e-10)


def test_sample_covariance_matches_long_waveform():
    rng = np.random.default_rng(3)
    W = random_beamformer(rng, 4, power=1.0)
    wf = realize_waveform(W, 100_000, seed=5)
    err = np.linalg.norm(wf.sample_covariance() - sample_covariance(W))
    assert err < 10 / np.sqrt(wf.L)


# -- beampattern -----------------------------------------------------------------

def test_beampattern_identity_is_flat():
    P = beampattern(np.eye(6), np.linspace(-np.pi / 2, np.pi / 2, 37))
    assert np.allclose(P, 6)


def test_beampattern_rank_one_peak():
    a = np.asarray(steering_vector(0.4, 8))
    assert beampattern(np.outer(a, a.conj()), [0.4])[0] == pytest.approx(64)


def test_beampattern_column_expansion():
    rng = np.random.default_rng(1)
    W = random_beamformer(rng, 5)
    th = np.linspace(-1.5, 1.5, 41)
    A = np.exp(1j * np.pi * np.outer(np.arange(5), np.sin(th)))
    ref = np.sum(np.abs(A.conj().T @ W.matrix) ** 2, axis=1)
    assert np.allclose(beampattern(sample_covariance(W), th), ref, atol=1e-10, rtol=0)


def test_beampattern_rejects_non_hermitian():
    with pytest.raises(ValueError):
        beampattern(np.array([[1, 1], [0, 1]]), [0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-np.pi / 2, np.pi / 2))
def test_beampattern_non_negative(seed, theta):
    W = random_beamformer(np.random.default_rng(seed), 6)
    assert beampattern(sample_covariance(W), [theta])[0] >= -1e-12


# -- SINRs -----------------------------------------------------------------------

def test_tag_sinr_interference_free():
    rng = np.random.default_rng(2)
    cfg = random_config(rng, 4)
    ch = random_channels(rng, cfg)
    w_t = crandn(rng, 4)
    W = BeamformingMatrix(np.zeros(4), w_t, np.zeros((4, 4)))
    assert sinr_tag(W, ch, cfg).value == pytest.approx(abs(ch.h_f @ w_t) ** 2 / cfg.sigma2_t)


def test_tag_sinr_orthogonal_beam_is_zero():
    cfg = _cfg(n_t=2, n_r=2)
    ch = ChannelSet(h_f=[1, 1], h_b=[1, 0], h_u=[1, 0], h_tu=0.5)
    W = BeamformingMatrix(np.ones(2), np.array([1, -1]), np.eye(2))
    assert sinr_tag(W, ch, cfg).value == 0


def test_combiner_examples():
    assert np.allclose(equal_gain_combiner([1, 0, 0]), [1, 0, 0])
    b = los_channel(0.8, np.pi / 4, 16)
    w = equal_gain_combiner(b)
    assert np.linalg.norm(w) == pytest.approx(1, abs=1e-12)
    assert np.allclose(w, np.conj(b / 0.8) / 4)
    with pytest.raises(ValueError):
        equal_gain_combiner(np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_combiner_achieves_cauchy_schwarz(seed):
    h = crandn(np.random.default_rng(seed), 7)
    assert abs(equal_gain_combiner(h) @ h) == pytest.approx(np.linalg.norm(h), abs=1e-12)


def test_ap_sinr_zero_when_tag_receives_nothing():
    cfg = _cfg(n_t=2, n_r=2)
    ch = ChannelSet(h_f=[1, 1], h_b=[1, 0], h_u=[1, 0], h_tu=0.5)
    W = BeamformingMatrix(np.array([1, -1]), np.array([2, -2]), np.zeros((2, 2)))
    assert sinr_ap(W, ch, cfg).value == 0


def test_ap_sinr_scalar_reduction():
    cfg = _cfg(alpha=0.3, sigma2_t=0.2, sigma2_ap=0.5)
    ch = ChannelSet(h_f=[0.7], h_b=[1.3], h_u=[0.4], h_tu=0.1)
    W = BeamformingMatrix(np.array([0.5]), np.array([0.9]), np.array([[0.2]]))
    hfW2 = 0.7**2 * (0.5**2 + 0.9**2 + 0.2**2)
    expected = 0.3 * 1.3**2 * hfW2 / (0.3 * 1.3**2 * 0.2 + 1.0 * 0.5)
    assert sinr_ap(W, ch, cfg).value == pytest.approx(expected, rel=1e-14)


def test_ap_sinr_custom_combiner_noise_scaling():
    cfg = _cfg(n_t=2, n_r=2)
    ch = ChannelSet(h_f=[1, 0.5], h_b=[1, 1j], h_u=[1, 0], h_tu=0.5)
    W = BeamformingMatrix(np.array([1, 0]), np.array([0, 1]), np.eye(2))
    w_r = 3 * equal_gain_combiner(ch.h_b)
    # any scaling of the combiner cancels
    assert sinr_ap(W, ch, cfg, w_r).value == pytest.approx(sinr_ap(W, ch, cfg).value)
    assert sinr_ap(W, ch, cfg, w_r).noise_term == pytest.approx(9 * cfg.sigma2_ap)


def test_ue_sinr_interference_free():
    rng = np.random.default_rng(4)
    cfg = random_config(rng, 3)
    ch = ChannelSet(h_f=crandn(rng, 3), h_b=crandn(rng, 3), h_u=crandn(rng, 3), h_tu=0)
    w_u = crandn(rng, 3)
    W = BeamformingMatrix(w_u, np.zeros(3), np.zeros((3, 3)))
    assert sinr_ue(W, ch, cfg).value == pytest.approx(abs(ch.h_u @ w_u) ** 2 / cfg.sigma2_u)


def test_ue_sinr_increases_with_w_u_when_tag_cannot_see_it():
    cfg = _cfg(n_t=2, n_r=2)
    ch = ChannelSet(h_f=[1, 1], h_b=[1, 0], h_u=[1, 0], h_tu=0.8)
    w_u = np.array([1, -1])  # h_f w_u = 0
    W1 = BeamformingMatrix(w_u, np.array([1, 1]), 0.1 * np.eye(2))
    W2 = BeamformingMatrix(2 * w_u, np.array([1, 1]), 0.1 * np.eye(2))
    assert sinr_ue(W2, ch, cfg).value > sinr_ue(W1, ch, cfg).value


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_sinr_scale_covariance(seed, c):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, 4)
    ch = random_channels(rng, cfg)
    W = random_beamformer(rng, 4)
    Wc = W.scaled(np.sqrt(c))
    for f in (sinr_tag, sinr_ue):
        b, bc = f(W, ch, cfg), f(Wc, ch, cfg)
        assert bc.numerator == pytest.approx(c * b.numerator, rel=1e-10)
        assert bc.noise_term == b.noise_term
        for (lab, v), (lab_c, vc) in zip(b.interference_terms, bc.interference_terms):
            assert lab == lab_c
            if lab == "backscatter":
                # carries the W-independent tag noise
                sig_t = cfg.alpha * abs(ch.h_tu) ** 2 * cfg.sigma2_t
                assert vc - sig_t == pytest.approx(c * (v - sig_t), rel=1e-9)
            else:
                assert vc == pytest.approx(c * v, rel=1e-10)
    a, ac = sinr_ap(W, ch, cfg), sinr_ap(Wc, ch, cfg)
    assert ac.numerator == pytest.approx(c * a.numerator, rel=1e-10)
    assert ac.term("tag_noise") == a.term("tag_noise")
    assert ac.noise_term == a.noise_term


def test_breakdown_fields_are_consistent():
    rng = np.random.default_rng(9)
    cfg = random_config(rng, 4)
    ch = random_channels(rng, cfg)
    W = random_beamformer(rng, 4)
    for b in (sinr_tag(W, ch, cfg), sinr_ap(W, ch, cfg), sinr_ue(W, ch, cfg)):
        assert b.value == pytest.approx(b.numerator / b.denominator, rel=1e-14)
        assert b.db == pytest.approx(10 * np.log10(b.value))
    assert {k for k, _ in sinr_ue(W, ch, cfg).interference_terms} == {
        "tag_beam", "probing", "backscatter"}


@pytest.mark.parametrize("seed", range(5))
def test_sinrs_match_monte_carlo(seed):
    rng = np.random.default_rng(100 + seed)
    cfg = random_config(rng, 4, n_r=6)
    ch = random_channels(rng, cfg)
    W = random_beamformer(rng, 4, power=cfg.p_t)
    L = 100_000
    sim = simulate_link(W, ch, cfg, L, rng)
    w_r = equal_gain_combiner(ch.h_b)
    for closed, mc in [(sinr_tag(W, ch, cfg).value, mc_sinr_tag(W, ch, cfg, sim)),
                       (sinr_ap(W, ch, cfg).value, mc_sinr_ap(W, ch, cfg, sim, w_r)),
                       (sinr_ue(W, ch, cfg).value, mc_sinr_ue(W, ch, cfg, sim))]:
        assert mc == pytest.approx(closed, rel=0.02)


# -- rate and detection probability ---------------------------------------------

@pytest.mark.parametrize("g,r", [(0, 0), (1, 1), (3, 2), (15, 4)])
def test_rate_examples(g, r):
    assert rate(g) == pytest.approx(r)


def test_rate_rejects_negative():
    with pytest.raises(ValueError):
        rate(-1e-3)


def test_detection_probability_examples():
    assert detection_probability(0.0, 0.5) == pytest.approx(0.5)
    assert detection_probability(1e6, 0.01) == pytest.approx(1.0)
    for p_f in (0.01, 0.1, 0.3):
        assert detection_probability(0.0, p_f) == pytest.approx(p_f, rel=1e-12)


def test_detection_probability_monotone_on_grid():
    g = np.linspace(0, 30, 301)
    for p_f in (1e-3, 0.01, 0.1):
        assert np.all(np.diff(detection_probability(g, p_f)) > 0)
    pf = np.linspace(0.001, 0.99, 200)
    pd = [detection_probability(2.0, p) for p in pf]
    assert np.all(np.diff(pd) > 0)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2])
def test_detection_probability_rejects_bad_pf(bad):
    with pytest.raises(ValueError):
        detection_probability(1.0, bad)


def test_detection_probability_rejects_negative_sinr():
    with pytest.raises(ValueError):
        detection_probability(-1.0, 0.1)
