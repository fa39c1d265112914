import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_AC = re.compile(r"test_ac(\d+)_(\w+)")
_results: dict[int, tuple[str, bool]] = {}


def pytest_runtest_logreport(report):
    m = _AC.search(report.nodeid)
    if not m:
        return
    n, name = int(m.group(1)), m.group(2)
    ok = _results.get(n, (name, True))[1]
    if report.failed or (report.when == "call" and report.skipped):
        ok = False
    _results[n] = (name, ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        name, ok = _results[n]
        terminalreporter.write_line(f"AC{n} {name}: {'PASS' if ok else 'FAIL'}")
