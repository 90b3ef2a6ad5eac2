import time

import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def criterion(request):
    """Record the measured numbers of one acceptance criterion for the summary line."""

    class Recorder:
        def __init__(self):
            self.details = []
            self.start = time.perf_counter()

        def note(self, text):
            self.details.append(text)

        def elapsed(self):
            return time.perf_counter() - self.start

    rec = Recorder()
    request.node.user_properties.append(("criterion_recorder", rec))
    return rec


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    rec = dict(item.user_properties).get("criterion_recorder")
    notes = "; ".join(rec.details) if rec else ""
    item.config.stash[_LINES][marker.args[0]] = (report.passed, marker.args[1], notes)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        passed, title, notes = lines[n]
        terminalreporter.write_line(f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {title}: {notes}")
