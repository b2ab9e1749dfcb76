"""Shared fixtures and independent oracles for the test suite."""

import functools

import numpy as np
import pytest

from bisac.model import BeamformingMatrix, ChannelSet, SystemConfig
from bisac.optimizer import StoppingRule, alternating_solve
from bisac.scenario import Scenario

# -- reference scenario --------------------------------------------------------

DEFAULT = Scenario()


@pytest.fixture(scope="session")
def default_cfg():
    return DEFAULT.system_config()


@pytest.fixture(scope="session")
def default_ch():
    return DEFAULT.channels()


@functools.lru_cache(maxsize=None)
def default_solution():
    """``(W, trace, report)`` of the reference scenario, solved once per session."""
    return alternating_solve(StoppingRule(), DEFAULT.channels(), DEFAULT.system_config())


@pytest.fixture(scope="session")
def solved_default():
    return default_solution()


# -- random instances ----------------------------------------------------------

def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_config(rng, n_t=4, n_r=None, **over):
    kw = dict(n_t=n_t, n_r=n_r or n_t, sigma2_ap=float(rng.uniform(0.05, 0.5)),
              sigma2_t=float(rng.uniform(0.05, 0.5)), sigma2_u=float(rng.uniform(0.05, 0.5)),
              alpha=float(rng.uniform(0.2, 1.0)), gamma_tth=1.0, gamma_apth=1.0,
              p_t=float(rng.uniform(1.0, 4.0)), L=1024, p_f=0.1)
    kw.update(over)
    return SystemConfig(**kw)


def random_channels(rng, cfg):
    return ChannelSet(h_f=crandn(rng, cfg.n_t), h_b=crandn(rng, cfg.n_r),
                      h_u=crandn(rng, cfg.n_t), h_tu=complex(crandn(rng, 1)[0]))


def random_beamformer(rng, n_t, power=None):
    W = BeamformingMatrix.from_matrix(crandn(rng, n_t, n_t + 2))
    if power is not None:
        W = W.scaled(np.sqrt(power / W.power()))
    return W


# -- Monte-Carlo SINR oracle ---------------------------------------------------
#
# Built directly from the received-signal expressions with independent
# random-phase symbols, a random-phase tag reflection and full N_r x L AP
# noise.  Shares nothing with the closed forms beyond the channel arrays.

def _phases(rng, shape):
    return np.exp(2j * np.pi * rng.random(shape))


def simulate_link(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig, L: int, rng):
    M = W.matrix
    S = _phases(rng, (cfg.n_t + 2, L))
    X = M @ S
    n_tag = np.sqrt(cfg.sigma2_t) * crandn(rng, L)
    n_ap = np.sqrt(cfg.sigma2_ap) * crandn(rng, cfg.n_r, L)
    n_ue = np.sqrt(cfg.sigma2_u) * crandn(rng, L)
    c_t = _phases(rng, L)
    return dict(M=M, S=S, X=X, n_tag=n_tag, n_ap=n_ap, n_ue=n_ue, c_t=c_t)


def mc_sinr_tag(W, ch, cfg, sim):
    M, S = sim["M"], sim["S"]
    h = ch.h_f
    wanted = (h @ M[:, 1]) * S[1]
    rest = (h @ M[:, [0]]) @ S[[0]] + (h @ M[:, 2:]) @ S[2:] + sim["n_tag"]
    return np.mean(np.abs(wanted) ** 2) / np.mean(np.abs(rest) ** 2)


def mc_sinr_ap(W, ch, cfg, sim, w_r):
    echo = np.sqrt(cfg.alpha) * np.outer(ch.h_b, sim["c_t"])
    wanted = w_r @ (echo * (ch.h_f @ sim["X"]))
    rest = w_r @ (echo * sim["n_tag"] + sim["n_ap"])
    return np.mean(np.abs(wanted) ** 2) / np.mean(np.abs(rest) ** 2)


def mc_sinr_ue(W, ch, cfg, sim):
    M, S = sim["M"], sim["S"]
    wanted = (ch.h_u @ M[:, 0]) * S[0]
    direct = (ch.h_u @ M[:, 1:]) @ S[1:]
    back = np.sqrt(cfg.alpha) * ch.h_tu * sim["c_t"] * (ch.h_f @ sim["X"] + sim["n_tag"])
    rest = direct + back + sim["n_ue"]
    return np.mean(np.abs(wanted) ** 2) / np.mean(np.abs(rest) ** 2)
