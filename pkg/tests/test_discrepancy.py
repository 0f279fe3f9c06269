"""Central moment discrepancy properties and hand cases."""

import numpy as np
import pytest

from treevq.discrepancy import CmdConfig, cmd, transferability
from treevq.errors import ConfigError, ShapeError


def test_identical_samples_zero(rng):
    x = rng.normal(size=(20, 3))
    assert cmd(x, x.copy()) == 0.0


def test_transferability_hits_ceiling_at_zero_discrepancy(rng):
    x = rng.normal(size=(10, 2))
    cfg = CmdConfig(eps=1e-6)
    assert transferability(x, x.copy(), cfg) == pytest.approx(1e6)


def test_hand_mean_shift_case():
    x = np.array([[0.0], [0.0]])
    y = np.array([[1.0], [1.0]])
    cfg = CmdConfig(moments=1, interval=(0.0, 1.0))
    assert cmd(x, y, cfg) == 1.0


def test_symmetry(rng):
    x = rng.normal(size=(15, 4))
    y = rng.normal(size=(9, 4)) + 0.5
    assert abs(cmd(x, y) - cmd(y, x)) <= 1e-12


def test_nonnegative(rng):
    for _ in range(10):
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=(12, 3)) * rng.uniform(0.5, 2.0)
        assert cmd(x, y) >= 0.0


def test_higher_moments_add_signal(rng):
    # same mean, different spread: only orders >= 2 can see it
    x = rng.normal(size=(4000, 1))
    y = 3.0 * rng.normal(size=(4000, 1))
    x -= x.mean()
    y -= y.mean()
    k1 = cmd(x, y, CmdConfig(moments=1))
    k5 = cmd(x, y, CmdConfig(moments=5))
    assert k5 > k1


def test_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        cmd(rng.normal(size=(5, 2)), rng.normal(size=(5, 3)))


def test_minimum_sample_count(rng):
    with pytest.raises(ShapeError):
        cmd(rng.normal(size=(1, 2)), rng.normal(size=(5, 2)))


def test_config_validation():
    with pytest.raises(ConfigError):
        CmdConfig(moments=0)
    with pytest.raises(ConfigError):
        CmdConfig(interval=(1.0, 1.0))
    with pytest.raises(ConfigError):
        CmdConfig(eps=0.0)


def test_constant_dimension_contributes_nothing(rng):
    x = np.concatenate([rng.normal(size=(10, 2)), np.ones((10, 1))], axis=1)
    y = np.concatenate([rng.normal(size=(10, 2)), np.ones((10, 1))], axis=1)
    base = cmd(x[:, :2], y[:, :2])
    assert cmd(x, y) == pytest.approx(base, rel=1e-12)
