"""Monte-Carlo tag detection.

Builds finite-length waveforms ``X = W S``, simulates the combined AP signal
with and without the tag echo, applies the correlation detector against the
known transmit waveform and calibrates the threshold empirically.

Noise at the AP is drawn directly after combining: ``w_r N_ap`` is i.i.d.
``CN(0, ||w_r||^2 sigma_ap^2)`` per sample, which is the same distribution as
combining an ``N_r x L`` noise matrix at a fraction of the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import BeamformingMatrix, ChannelSet, SystemConfig, equal_gain_combiner
from .special import erfc, erfc_inv

H0 = "H0"
H1 = "H1"
BATCH = 2000

_STREAM_DATA = 0
_STREAM_H0 = 1
_STREAM_H1 = 2
_STREAM_HOLDOUT = 3


def _rng(seed, *keys) -> np.random.Generator:
    """Generator for a named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *keys]))


def _cn(rng, shape, power):
    """Circularly-symmetric complex Gaussian samples of the given power."""
    return np.sqrt(power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def synthesize_streams(n_t: int, L: int, seed: int = 0) -> np.ndarray:
    """Augmented stream matrix ``S`` of shape ``(n_t + 2, L)``.

    Rows 0 and 1 carry unit-modulus symbols with uniform random phase (UE and
    tag data).  The probing rows are DFT sequences, so
    ``S_s S_s^H / L == I`` holds to rounding error.
    """
    if L <= n_t + 2:
        raise ValueError(f"waveform length L={L} must exceed n_t + 2 = {n_t + 2}")
    rng = _rng(seed, _STREAM_DATA)
    data = np.exp(2j * np.pi * rng.random((2, L)))
    k = np.arange(1, n_t + 1)[:, None]
    probing = np.exp(-2j * np.pi * k * np.arange(L)[None, :] / L)
    return np.vstack([data, probing])


@dataclass(frozen=True)
class WaveformRealization:
    S: np.ndarray
    X: np.ndarray
    seed: int

    @property
    def L(self) -> int:
        return self.S.shape[1]

    def sample_covariance(self) -> np.ndarray:
        return self.X @ self.X.conj().T / self.L


def realize_waveform(W: BeamformingMatrix, L: int, seed: int = 0) -> WaveformRealization:
    S = synthesize_streams(W.n_t, L, seed)
    return WaveformRealization(S=S, X=W.matrix @ S, seed=seed)


@dataclass(frozen=True)
class DetectorSamples:
    """Detector statistics of one hypothesis, ordered by trial index."""

    statistic: np.ndarray
    hypothesis: str

    def __len__(self):
        return self.statistic.size


def _template(W, ch, cfg, waveform, n_samples, w_r):
    if w_r is None:
        w_r = equal_gain_combiner(ch.h_b)
    if waveform is None:
        waveform = realize_waveform(W, cfg.L)
    n = waveform.L if n_samples is None else int(n_samples)
    if not 1 <= n <= waveform.L:
        raise ValueError("n_samples must lie in [1, L]")
    g = complex(np.ravel(w_r) @ ch.h_b)
    hfx = ch.h_f @ waveform.X[:, :n]
    return w_r, g, hfx


def simulate_statistics(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig,
                        n_trials: int, hypothesis: str, seed: int = 0, *,
                        waveform: Optional[WaveformRealization] = None,
                        n_samples: Optional[int] = None, w_r=None,
                        stream: Optional[int] = None) -> DetectorSamples:
    """Draw ``n_trials`` correlation statistics under ``hypothesis``.

    The statistic is ``Re{y (w_r h_b h_f X)^H}``, the correlator against the
    known waveform.  It differs from the textbook form only by the positive
    factor ``sqrt(alpha)``, so threshold decisions are unchanged, and it
    stays informative at ``alpha = 0``.  Under H1 the tag re-radiates its
    received signal (noise included) with a constant unit reflection.

    ``n_samples`` restricts each trial to the first samples of the waveform.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if hypothesis not in (H0, H1):
        raise ValueError("hypothesis must be 'H0' or 'H1'")
    w_r, g, hfx = _template(W, ch, cfg, waveform, n_samples, w_r)
    template_conj = np.conj(g * hfx)
    n = hfx.size
    n0 = float(np.real(np.vdot(w_r, w_r))) * cfg.sigma2_ap
    echo = np.sqrt(cfg.alpha) * g
    if stream is None:
        stream = _STREAM_H0 if hypothesis == H0 else _STREAM_H1

    out = np.empty(n_trials)
    for b, start in enumerate(range(0, n_trials, BATCH)):
        m = min(BATCH, n_trials - start)
        rng = _rng(seed, stream, b)
        # full-size draws keep trial i a function of (seed, i) alone
        y = _cn(rng, (BATCH, n), n0)
        if hypothesis == H1:
            y = y + echo * (hfx[None, :] + _cn(rng, (BATCH, n), cfg.sigma2_t))
        out[start:start + m] = np.real(y[:m] @ template_conj)
    return DetectorSamples(out, hypothesis)


def calibrate_eta(h0_samples, p_f: float) -> float:
    """Threshold at the empirical ``1 - p_f`` quantile of H0 statistics."""
    if not 0.0 < p_f < 1.0:
        raise ValueError("p_f must lie in (0, 1)")
    stat = np.asarray(getattr(h0_samples, "statistic", h0_samples), dtype=float)
    if stat.size < 100.0 / p_f:
        raise ValueError(f"need at least {int(np.ceil(100 / p_f))} H0 samples for p_f={p_f}")
    return float(np.quantile(stat, 1.0 - p_f))


def binomial_halfwidth(p: float, n: int, k: float = 3.0) -> float:
    return float(k * np.sqrt(max(p * (1.0 - p), 0.0) / n))


@dataclass
class DetectionPoint:
    p_f: float
    eta: float
    p_d: float
    p_d_halfwidth: float
    p_f_empirical: float
    p_f_halfwidth: float
    p_d_analytic: float
    p_d_predicted: float


@dataclass
class DetectionExperiment:
    """Waveform, per-hypothesis statistics and the resulting operating points."""

    waveform: WaveformRealization
    h0: DetectorSamples
    h0_holdout: DetectorSamples
    h1: DetectorSamples
    gamma_ap: float
    points: list = field(default_factory=list)


def predicted_pd(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig, p_f: float,
                 waveform: Optional[WaveformRealization] = None,
                 n_samples: Optional[int] = None, w_r=None) -> float:
    """Exact Gaussian P_D of the simulated correlator for a given waveform.

    Accounts for the integration over ``n`` samples and for the tag noise,
    which is present only under H1:
    ``P_D = erfc(rho * erfc_inv(2 p_f) - ||z|| / sqrt(N1)) / 2`` with
    ``rho = sqrt(N0 / N1)``.  For one sample and negligible tag noise this
    reduces to the closed form in :func:`bisac.model.detection_probability`.
    """
    w_r, g, hfx = _template(W, ch, cfg, waveform, n_samples, w_r)
    n0 = float(np.real(np.vdot(w_r, w_r))) * cfg.sigma2_ap
    n1 = n0 + cfg.alpha * abs(g) ** 2 * cfg.sigma2_t
    z_norm = np.sqrt(cfg.alpha) * abs(g) * np.linalg.norm(hfx)
    return float(0.5 * erfc(np.sqrt(n0 / n1) * erfc_inv(2.0 * p_f) - z_norm / np.sqrt(n1)))


def run_detection(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig,
                  p_fs: Sequence[float], n_trials: int = 100_000, seed: int = 0,
                  n_samples: Optional[int] = None, w_r=None) -> DetectionExperiment:
    """Calibrate and evaluate the detector at several false-alarm targets.

    One set of statistics is drawn per hypothesis and reused for every
    ``p_f``; false alarms are counted on a held-out H0 set.
    """
    from .model import detection_probability, sinr_ap

    waveform = realize_waveform(W, cfg.L, seed)
    kw = dict(waveform=waveform, n_samples=n_samples, w_r=w_r)
    h0 = simulate_statistics(W, ch, cfg, n_trials, H0, seed, **kw)
    hold = simulate_statistics(W, ch, cfg, n_trials, H0, seed, stream=_STREAM_HOLDOUT, **kw)
    h1 = simulate_statistics(W, ch, cfg, n_trials, H1, seed, **kw)
    gamma_ap = sinr_ap(W, ch, cfg, w_r).value
    exp = DetectionExperiment(waveform, h0, hold, h1, gamma_ap)
    for p_f in p_fs:
        eta = calibrate_eta(h0, p_f)
        pd = float(np.mean(h1.statistic >= eta))
        pfa = float(np.mean(hold.statistic >= eta))
        exp.points.append(DetectionPoint(
            p_f=float(p_f), eta=eta, p_d=pd, p_d_halfwidth=binomial_halfwidth(pd, n_trials),
            p_f_empirical=pfa, p_f_halfwidth=binomial_halfwidth(p_f, n_trials),
            p_d_analytic=detection_probability(gamma_ap, p_f),
            p_d_predicted=predicted_pd(W, ch, cfg, p_f, waveform, n_samples, w_r),
        ))
    return exp


def empirical_pd(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig, p_f: float,
                 n_trials: int = 100_000, seed: int = 0, **kw):
    """Empirical detection probability and its 3-sigma binomial half-width."""
    if n_trials < 10_000:
        raise ValueError("empirical_pd needs at least 1e4 trials")
    point = run_detection(W, ch, cfg, [p_f], n_trials, seed, **kw).points[0]
    return point.p_d, point.p_d_halfwidth
