"""Pytest configuration and shared fixtures."""

import logging
from logging.handlers import RotatingFileHandler

import numpy as np
import pytest

from config.settings import get_settings
from model.params import ModelParams


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Keep logs and run outputs of every test inside its tmp_path and restore the root logger."""
    monkeypatch.setenv("METASTAB_LOGS_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("METASTAB_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("METASTAB_LOG_TO_FILE", "false")
    get_settings.cache_clear()
    root = logging.getLogger()
    level = root.level
    yield
    get_settings.cache_clear()
    # drop the console and file handlers installed by setup_logging
    for handler in list(root.handlers):
        if type(handler) in (logging.StreamHandler, RotatingFileHandler):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def supercritical():
    """k=1, h=10, lambda_star=1, alpha=1: a = b = 0.1, x_inf = 0.8."""
    return ModelParams.piecewise_linear(n=100, alpha=1.0, h=10.0, k=1.0, lambda_star=1.0)


@pytest.fixture
def dark_red():
    """k=1, h=100, lambda_star=1, alpha=1: a = b = 0.01."""
    return ModelParams.piecewise_linear(n=300, alpha=1.0, h=100.0, k=1.0, lambda_star=1.0)


@pytest.fixture
def subcritical():
    """kh = 0.5 < alpha: the null state attracts everything."""
    return ModelParams.piecewise_linear(n=50, alpha=1.0, h=0.5, k=1.0, lambda_star=1.0)


@pytest.fixture
def stability():
    """k=1, h=0.5, alpha=1 with a saturation level far above the reachable potentials."""
    return ModelParams.piecewise_linear(n=1000, alpha=1.0, h=0.5, k=1.0, lambda_star=2.0)
