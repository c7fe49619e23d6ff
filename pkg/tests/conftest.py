"""Prints one PASS/FAIL line per acceptance test in the terminal summary."""

_acceptance: dict[str, list] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        if "test_acceptance" in item.nodeid:
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _acceptance[item.nodeid] = [doc, None]


def pytest_runtest_logreport(report):
    entry = _acceptance.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry[1] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for doc, outcome in _acceptance.values():
        verdict = {"passed": "PASS", "failed": "FAIL"}.get(outcome, "SKIP")
        terminalreporter.write_line(f"{verdict}  {doc}")
