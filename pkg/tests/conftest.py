import pytest

from fbcool import config, model
from fbcool.controller import FeedbackConfig
from fbcool.dynamics import DynamicsConfig

_acceptance_lines = []


def record_acceptance(line):
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def cavity():
    return model.CavityParams()


@pytest.fixture
def drive():
    return model.DriveParams()


@pytest.fixture
def feedback():
    return FeedbackConfig()


@pytest.fixture
def dyn():
    return DynamicsConfig()


SMALL = """
n_atoms: 12
storage:
  duration_ms: 60.0
  bin_ms: 1.0
scan:
  attenuation: [1.0, 0.5]
  n_empty: [0.05, 0.1]
  duration_ms: 60.0
calibration:
  duration_ms: 60.0
  tolerance: 0.3
  max_iter: 4
thermometry:
  hold_ms: 1.0
  tail_ms: 1.0
toggle:
  phase_ms: 1.0
  cycles: 2
correlation:
  duration_ms: 4.0
  tau_max_us: 300
  bump_window_us: [40.0, 280.0]
"""


@pytest.fixture
def small_cfg():
    return config.loads(SMALL)


@pytest.fixture
def small_yaml(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p
