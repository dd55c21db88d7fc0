from __future__ import annotations

from fractions import Fraction

import pytest

from xferenergy.datasets import generate_dataset, get_spec


@pytest.fixture(scope="session")
def small_html(tmp_path_factory):
    """Twenty scaled-down HTML-like files with their manifest."""
    root = tmp_path_factory.mktemp("html")
    entries = generate_dataset(get_spec("HTML").subset(20), 7, Fraction(1, 16), root)
    return root, entries


# -- acceptance summary -------------------------------------------------------

_VERDICTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _VERDICTS[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[number]
        line = f"{verdict} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
