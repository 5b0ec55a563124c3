import os
import warnings

import pytest

from narrowescape import validation
from narrowescape.errors import GeometryWarning, RegimeWarning

ACCEPTANCE_SEED = 1


def _full_scale():
    return validation.SCALES["full"]


@pytest.fixture(scope="session")
def ball_runs():
    """Unit ball, a = 0.1, 1e5 uniform starts at dt = 1e-4 and 5e-5 (shared by several tests)."""
    return validation.ball_escape_runs(_full_scale(), ACCEPTANCE_SEED)


@pytest.fixture(scope="session")
def leakage_single():
    return validation.leakage_runs([0.5], _full_scale(), ACCEPTANCE_SEED + 1)


@pytest.fixture(scope="session")
def leakage_pair():
    return validation.leakage_runs([0.25, 0.75], _full_scale(), ACCEPTANCE_SEED + 2)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        warnings.simplefilter("ignore", RegimeWarning)
        yield


def pytest_report_header(config):
    return f"narrowescape workers: {os.cpu_count()}"


_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Print one PASS/FAIL line for a criterion plus its rows, then fail if any row failed."""

    def report(number, title, rows):
        ok = all(r.passed for r in rows)
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}"
        detail = []
        for r in rows:
            s = f"    {'ok ' if r.passed else 'BAD'} {r.experiment}: computed {r.computed:.6g}, reference {r.reference:.6g}"
            if r.kind == "relative":
                s += f", rel err {r.relative_error:+.2e} (tol {r.tolerance:.2g})"
            detail.append(s)
        capman = request.config.pluginmanager.get_plugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + "\n".join([line] + detail))
        request.config.stash.setdefault(_RESULTS, []).append(line)
        failed = [r.experiment for r in rows if not r.passed]
        assert not failed, f"criterion {number} failed rows: {failed}"

    return report


@pytest.fixture
def acceptance_seed():
    return ACCEPTANCE_SEED


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
