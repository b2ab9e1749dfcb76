"""Signal model of the backscatter ISAC link.

Domain types (configuration, channels, the joint beamforming matrix) and the
closed-form link metrics: beampattern, the SINR at the tag, at the AP after
combining, and at the UE, plus the UE rate and the tag detection probability.

Conventions
-----------
* Powers are in mW, SINRs and thresholds are linear ratios.
* Row channels (``h_f``, ``h_u``) and column channels (``h_b``) are stored as
  1-D complex arrays; ``h_f @ w`` is the scalar ``h_f w``.
* The joint beamforming matrix has columns ``[w_u, w_t, w_1, ..., w_Nt]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .special import erfc, erfc_inv

HERMITIAN_TOL = 1e-10


def _frozen(a, dtype=complex):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Static link parameters.

    Attributes
    ----------
    n_t, n_r : int
        Transmit and receive array sizes (``n_t <= n_r``).
    sigma2_ap, sigma2_t, sigma2_u : float
        Noise powers at the AP, tag and UE in mW.
    alpha : float
        Backscatter modulation efficiency in [0, 1].
    gamma_tth, gamma_apth : float
        Linear SINR thresholds at the tag and at the AP.
    p_t : float
        Total transmit power budget in mW.
    L : int
        Waveform length in samples, ``L > n_t``.
    p_f : float
        Target false-alarm probability of the tag detector.
    """

    n_t: int
    n_r: int
    sigma2_ap: float
    sigma2_t: float
    sigma2_u: float
    alpha: float
    gamma_tth: float
    gamma_apth: float
    p_t: float
    L: int = 1024
    p_f: float = 0.1

    def __post_init__(self):
        if self.n_t < 1 or self.n_r < 1:
            raise ValueError("array sizes must be positive")
        if self.n_t > self.n_r:
            raise ValueError(f"n_t={self.n_t} must not exceed n_r={self.n_r}")
        for name in ("sigma2_ap", "sigma2_t", "sigma2_u", "gamma_tth", "gamma_apth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.p_t >= 0:
            raise ValueError("p_t must be non-negative")
        if self.L <= self.n_t:
            raise ValueError("waveform length L must exceed n_t")
        if not 0.0 < self.p_f < 1.0:
            raise ValueError("p_f must lie in (0, 1)")

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class SteeringVector:
    """Half-wavelength ULA response toward ``angle`` (radians)."""

    angle: float
    elements: np.ndarray

    def __len__(self):
        return len(self.elements)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.elements, dtype=dtype)


def steering_vector(theta: float, n: int) -> SteeringVector:
    """Steering vector with element ``k`` equal to ``exp(j*pi*k*sin(theta))``."""
    if n < 1:
        raise ValueError("element count must be >= 1")
    k = np.arange(n)
    return SteeringVector(float(theta), _frozen(np.exp(1j * np.pi * k * np.sin(theta))))


def los_channel(fading: complex, theta: float, n: int) -> np.ndarray:
    """Line-of-sight channel ``fading * a(theta)``."""
    return fading * steering_vector(theta, n).elements


@dataclass(frozen=True)
class ChannelSet:
    """Channels of the three links.

    ``h_f`` AP->tag (row, length n_t), ``h_b`` tag->AP (column, length n_r),
    ``h_u`` AP->UE (row, length n_t) and the scalar tag->UE channel ``h_tu``.
    """

    h_f: np.ndarray
    h_b: np.ndarray
    h_u: np.ndarray
    h_tu: complex

    def __post_init__(self):
        object.__setattr__(self, "h_f", _frozen(np.ravel(self.h_f)))
        object.__setattr__(self, "h_b", _frozen(np.ravel(self.h_b)))
        object.__setattr__(self, "h_u", _frozen(np.ravel(self.h_u)))
        object.__setattr__(self, "h_tu", complex(self.h_tu))
        if self.h_f.shape != self.h_u.shape:
            raise ValueError("h_f and h_u must have the same length")

    @classmethod
    def los(cls, cfg: SystemConfig, theta_tag: float, theta_ue: float,
            fading_f: complex = 0.8, fading_b: complex = 0.8,
            fading_u: complex = 0.8, h_tu: complex = 0.5) -> "ChannelSet":
        # Row channels are a^H so that |h w|^2 is the beampattern a^H w w^H a
        # evaluated at the terminal's angle.
        return cls(
            h_f=np.conj(los_channel(fading_f, theta_tag, cfg.n_t)),
            h_b=los_channel(fading_b, theta_tag, cfg.n_r),
            h_u=np.conj(los_channel(fading_u, theta_ue, cfg.n_t)),
            h_tu=h_tu,
        )

    def check(self, cfg: SystemConfig):
        if self.h_f.size != cfg.n_t or self.h_b.size != cfg.n_r:
            raise ValueError("channel dimensions do not match the configuration")


@dataclass(frozen=True)
class BeamformingMatrix:
    """Joint beamformer ``W = [w_u, w_t, W_s]`` of shape ``n_t x (n_t + 2)``."""

    w_u: np.ndarray
    w_t: np.ndarray
    W_s: np.ndarray

    def __post_init__(self):
        w_u = _frozen(np.ravel(self.w_u))
        w_t = _frozen(np.ravel(self.w_t))
        W_s = _frozen(np.atleast_2d(self.W_s))
        n = w_u.size
        if w_t.size != n or W_s.shape != (n, n):
            raise ValueError("inconsistent beamformer dimensions")
        object.__setattr__(self, "w_u", w_u)
        object.__setattr__(self, "w_t", w_t)
        object.__setattr__(self, "W_s", W_s)

    @classmethod
    def from_matrix(cls, W) -> "BeamformingMatrix":
        W = np.asarray(W, dtype=complex)
        n = W.shape[0]
        if W.shape != (n, n + 2):
            raise ValueError(f"expected shape ({n}, {n + 2}), got {W.shape}")
        return cls(W[:, 0], W[:, 1], W[:, 2:])

    @classmethod
    def zeros(cls, n_t: int) -> "BeamformingMatrix":
        return cls.from_matrix(np.zeros((n_t, n_t + 2), dtype=complex))

    @property
    def n_t(self) -> int:
        return self.w_u.size

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.w_u, self.w_t, self.W_s])

    def power(self) -> float:
        """Total transmit power ``Tr(W W^H)``."""
        return float(np.sum(np.abs(self.w_u) ** 2) + np.sum(np.abs(self.w_t) ** 2)
                     + np.sum(np.abs(self.W_s) ** 2))

    def scaled(self, c: complex) -> "BeamformingMatrix":
        return BeamformingMatrix(c * self.w_u, c * self.w_t, c * self.W_s)


@dataclass(frozen=True)
class SinrBreakdown:
    """SINR with its labelled constituents (all in mW except ``value``)."""

    value: float
    numerator: float
    interference_terms: tuple = field(default_factory=tuple)
    noise_term: float = 0.0

    @property
    def denominator(self) -> float:
        return sum(v for _, v in self.interference_terms) + self.noise_term

    def term(self, label: str) -> float:
        return dict(self.interference_terms)[label]

    @property
    def db(self) -> float:
        return 10.0 * np.log10(self.value) if self.value > 0 else -np.inf


def _breakdown(numerator, terms, noise):
    terms = tuple((k, float(v)) for k, v in terms)
    den = sum(v for _, v in terms) + noise
    return SinrBreakdown(float(numerator / den), float(numerator), terms, float(noise))


def sample_covariance(W: BeamformingMatrix) -> np.ndarray:
    """Waveform covariance ``W W^H`` (the large-L limit of ``X X^H / L``)."""
    M = W.matrix
    return M @ M.conj().T


def beampattern(R_x, thetas: Sequence[float]) -> np.ndarray:
    """Transmit beampattern ``a^H(theta) R_x a(theta)`` for each angle."""
    R_x = np.asarray(R_x, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(R_x))))
    if np.max(np.abs(R_x - R_x.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("R_x must be Hermitian")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = R_x.shape[0]
    A = np.exp(1j * np.pi * np.outer(np.arange(n), np.sin(thetas)))
    return np.real(np.einsum("ik,ij,jk->k", A.conj(), R_x, A))


def sinr_tag(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig) -> SinrBreakdown:
    """SINR of the downlink tag signal."""
    signal = abs(ch.h_f @ W.w_t) ** 2
    return _breakdown(
        signal,
        [("ue_beam", abs(ch.h_f @ W.w_u) ** 2),
         ("probing", np.sum(np.abs(ch.h_f @ W.W_s) ** 2))],
        cfg.sigma2_t,
    )


def equal_gain_combiner(h_b) -> np.ndarray:
    """Receive combiner ``h_b^H / ||h_b||``."""
    h_b = np.ravel(np.asarray(h_b, dtype=complex))
    nrm = np.linalg.norm(h_b)
    if nrm == 0:
        raise ValueError("equal-gain combiner needs a non-zero channel")
    return h_b.conj() / nrm


def sinr_ap(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig,
            w_r=None) -> SinrBreakdown:
    """SINR of the combined tag echo at the AP.

    ``w_r`` defaults to the equal-gain combiner of ``h_b``.
    """
    if w_r is None:
        w_r = equal_gain_combiner(ch.h_b)
    w_r = np.ravel(w_r)
    g = abs(w_r @ ch.h_b) ** 2
    hfW = ch.h_f @ W.matrix
    numerator = cfg.alpha * g * np.real(np.vdot(hfW, hfW))
    return _breakdown(
        numerator,
        [("tag_noise", cfg.alpha * g * cfg.sigma2_t)],
        np.real(np.vdot(w_r, w_r)) * cfg.sigma2_ap,
    )


def ue_denominator_terms(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig):
    """Labelled interference terms of the UE SINR (noise excluded)."""
    hfW = ch.h_f @ W.matrix
    backscatter = cfg.alpha * abs(ch.h_tu) ** 2 * (np.sum(np.abs(hfW) ** 2) + cfg.sigma2_t)
    return [
        ("tag_beam", abs(ch.h_u @ W.w_t) ** 2),
        ("probing", np.sum(np.abs(ch.h_u @ W.W_s) ** 2)),
        ("backscatter", backscatter),
    ]


def sinr_ue(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig) -> SinrBreakdown:
    """SINR at the UE, counting the tag's re-radiated signal as interference."""
    return _breakdown(abs(ch.h_u @ W.w_u) ** 2, ue_denominator_terms(W, ch, cfg), cfg.sigma2_u)


def rate(gamma: float) -> float:
    """Achievable rate ``log2(1 + gamma)`` in bit/s/Hz."""
    if gamma < 0:
        raise ValueError("SINR must be non-negative")
    return float(np.log2(1.0 + gamma))


def detection_probability(gamma_ap, p_f: float):
    """Tag detection probability at false-alarm rate ``p_f``.

    ``P_D = erfc(erfc_inv(2 p_f) - sqrt(gamma_ap)) / 2``
    """
    if not 0.0 < p_f < 1.0:
        raise ValueError("p_f must lie in (0, 1)")
    g = np.asarray(gamma_ap, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma_ap must be non-negative")
    pd = 0.5 * erfc(erfc_inv(2.0 * p_f) - np.sqrt(g))
    return pd if np.ndim(gamma_ap) else float(pd)
