import numpy as np
import pytest

from d2dcache.channel import ChannelRealization, ScenarioConfig

ACCEPTANCE_LINES = []


def make_chans(H, gains=None):
    """Realisation from explicit channels; ``gains`` is a K x K D2D gain matrix."""
    H = np.asarray(H, dtype=complex)
    K = H.shape[0]
    if gains is None:
        gains = np.ones((K, K))
    gains = np.array(gains, dtype=complex)
    np.fill_diagonal(gains, 0)
    return ChannelRealization(np.zeros((K, 2)), H, gains)


@pytest.fixture
def unit_config():
    """K=3 scenario with unit powers and noise, so SNRs are read off the gains."""
    return ScenarioConfig(K=3, N=3, M=1, L=2, P_T=1.0, P_d=1.0, N0=1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
