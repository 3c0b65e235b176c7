import numpy as np
import pytest

from nmdetumble.dynamics import Env, SpacecraftParams
from nmdetumble.geomag import GeoEpoch, load_igrf13


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture(scope="session")
def igrf():
    return load_igrf13()


@pytest.fixture(scope="session")
def epoch():
    return GeoEpoch.from_iso("2024-01-01T00:00:00")


@pytest.fixture
def params():
    return SpacecraftParams()


@pytest.fixture
def env_free(igrf, epoch):
    """Two-body gravity only, no drag."""
    return Env(field_model=igrf, epoch=epoch, j2=False, drag=False, drag_torque=False)


_AC_LINES = pytest.StashKey[list]()


@pytest.fixture
def ac_report(request):
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_AC_LINES, [])

    def report(tag: str, ok: bool, detail: str) -> None:
        line = f"{tag:5s} {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_AC_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int(s[2:].split()[0].rstrip("abc")), s)):
            terminalreporter.write_line(line)
