import json
from pathlib import Path

import numpy as np
import pytest

from covertlink.fading import FisherFParams, FtrParams
from covertlink.scenario import load_scenario
from covertlink.sinr_stats import LinkCoefficients, UserChannel

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# single-link outage setup: D_a = 5 m (alpha 2), D_j = 10 m (alpha 3), kappa2 = 1 dB
FIG2_FTR = FtrParams.from_mean(2, 2, 0.7, 10 ** 1.5)
FIG2_FISHER = FisherFParams(3, 3, 1.0)
FIG2_KAPPA2 = 10 ** 0.1


def fig2_channel(p_a_dbw, p_j_dbw, **kw):
    c1 = 5.0 ** -2 * 10 ** (p_a_dbw / 10)
    c2 = 10.0 ** -3 * 10 ** (p_j_dbw / 10)
    return UserChannel(FIG2_FTR, FIG2_FISHER, LinkCoefficients.from_fisher(c1, c2, FIG2_KAPPA2, FIG2_FISHER), **kw)


def load(name):
    return load_scenario((SCENARIOS / name).read_text())


@pytest.fixture(scope="session")
def three_user():
    return load("paper_sec6.json")


@pytest.fixture(scope="session")
def three_user_doc():
    return json.loads((SCENARIOS / "paper_sec6.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
