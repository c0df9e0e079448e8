import re

_ACCEPTANCE = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")
_results: dict[int, tuple[str, bool]] = {}


def pytest_runtest_logreport(report):
    m = _ACCEPTANCE.search(report.nodeid)
    if not m:
        return
    n, name = int(m.group(1)), m.group(2)
    ok = report.passed if report.when == "call" else not report.failed
    prev = _results.get(n, (name, True))[1]
    _results[n] = (name, prev and ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        name, ok = _results[n]
        terminalreporter.write_line(f"criterion {n:2d} {name}: {'PASS' if ok else 'FAIL'}")
