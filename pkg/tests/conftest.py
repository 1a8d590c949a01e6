import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xmodal.config import ArchConfig, SimConfig
from xmodal.harness.dataset import generate_synthetic_dataset

settings.register_profile("xmodal", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("xmodal")


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_ds")
    return generate_synthetic_dataset(24, root, seed=11, sim=SimConfig(render_size=16))


@pytest.fixture(scope="session")
def mini_arch():
    return ArchConfig.preset("mini")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ------------------------------------------------------------------ acceptance summary

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and not (report.failed or report.skipped)):
        return
    n, title = mark.args
    detail = dict(report.user_properties).get("detail", "")
    if report.skipped:
        status = "SKIP"
        detail = detail or str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else detail
    else:
        status = "PASS" if report.passed else "FAIL"
    if n not in _CRITERIA or status != "PASS":
        _CRITERIA[n] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n} ({title}): {status}" + (f" - {detail}" if detail else ""))
