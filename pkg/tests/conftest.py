"""Shared fixtures: seeded problem instances at unit-test scale."""

import math

import numpy as np
import pytest

from kaczprec.channel import ArrayConfig, power_control, random_channel
from kaczprec.rzf import auxiliary_matrix, rzf_precoder
from kaczprec.solvers import AugmentedSystem


def make_instance(seed, n_antennas=32, n_users=4, n_subarrays=4, p_visible=0.6,
                  snr_db=0.0, n_paths=3, carrier_freq=100e9):
    """One power-controlled random drop plus its solver system and oracle."""
    cfg = ArrayConfig(n_antennas=n_antennas, carrier_freq=carrier_freq,
                      n_subarrays=n_subarrays)
    chan = random_channel(cfg, n_users, n_paths, p_visible, np.random.default_rng(seed))
    chan, reg = power_control(chan, snr_db)
    sys_ = AugmentedSystem.from_channel(chan, reg)
    return chan, reg, sys_


def make_instance_with_oracle(seed, **kw):
    chan, reg, sys_ = make_instance(seed, **kw)
    return chan, reg, sys_, rzf_precoder(chan, reg), auxiliary_matrix(chan, reg)


@pytest.fixture
def small_instance():
    return make_instance(3)


def random_unit_columns(rng, n, k):
    """Dense complex matrix with unit-norm columns (no visibility structure)."""
    h = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2)
    return h / np.linalg.norm(h, axis=0)
