"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import re
from collections import defaultdict

_TITLES = {
    1: "outage guarantee",
    2: "numerics oracles",
    3: "convergence to capacity",
    4: "delayed-ACK metric degeneracy and oracle",
    5: "zero-mean rate bias",
    6: "desk-scale scheduling sweep",
    7: "determinism across worker counts",
}
_outcomes = defaultdict(list)
_details = defaultdict(list)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        _outcomes[n].append((report.nodeid.split("::")[-1], report.outcome))
    if report.when == "call":
        _details[n].extend(v for k, v in report.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_TITLES):
        if n not in _outcomes:
            continue
        results = _outcomes[n]
        ok = all(outcome == "passed" for _, outcome in results)
        failed = [name for name, outcome in results if outcome != "passed"]
        line = f"criterion {n} ({_TITLES[n]}): {'PASS' if ok else 'FAIL'}"
        if failed:
            line += f" [failed: {', '.join(failed)}]"
        tr.write_line(line)
        for d in _details[n]:
            tr.write_line(f"    {d}")
