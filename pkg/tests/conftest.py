import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict = {}


def pytest_runtest_logreport(report):
    # acceptance tests are named test_criterion_<n>_...; keep the call-phase outcome
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        _criteria[name] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")

    def number(name):
        return int(name.split("_")[2])

    for name in sorted(_criteria, key=number):
        outcome, detail = _criteria[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number(name)}: {mark}  {name[len('test_criterion_'):]}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
