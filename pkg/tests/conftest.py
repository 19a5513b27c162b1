"""Shared fixtures. The trained assets are built once per session (a few minutes)."""

import numpy as np
import pytest

from scait.dataset import build_dataset
from scait.harness.config import ExperimentConfig
from scait.harness.sweep import prepare_assets
from scait.nn import Model, ModelSpec

TOY_SPEC = ModelSpec(input_shape=(8, 8), channels=(2, 3, 4), hidden=5, num_classes=6)


@pytest.fixture(scope="session")
def split():
    return build_dataset()


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("run")


@pytest.fixture(scope="session")
def config(workdir):
    return ExperimentConfig(out_dir=str(workdir))


@pytest.fixture(scope="session")
def assets(config):
    """Clean classifier, semantic model and KB trained with the default config."""
    return prepare_assets(config, log=None)


@pytest.fixture
def toy_model():
    return Model.init(TOY_SPEC, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
