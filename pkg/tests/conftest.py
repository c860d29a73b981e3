import re

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = re.search(r"test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("summary", "")
        outcome = "PASS" if report.passed else "FAIL"
        _ACCEPTANCE[int(m.group(1))] = (outcome, m.group(2).replace("_", " "), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        outcome, name, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {outcome}  {name}  [{detail}]")
