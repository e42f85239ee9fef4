"""Acceptance bookkeeping: time budgets and a one-line verdict per criterion."""
import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    label = mark.args[0]
    budget = mark.kwargs.get("max_seconds", mark.args[1] if len(mark.args) > 1 else None)
    entry = _RESULTS.setdefault(label, {"ok": True, "seconds": 0.0, "budget": budget,
                                        "notes": []})
    if report.when == "call":
        entry["seconds"] += report.duration
        if report.passed and budget is not None and report.duration > budget:
            report.outcome = "failed"
            report.longrepr = f"runtime {report.duration:.2f} s exceeds budget {budget} s"
    if report.failed:
        entry["ok"] = False
        entry["notes"].append(f"{report.when} failed")
    elif report.skipped and report.when != "teardown":
        entry["ok"] = False
        entry["notes"].append("skipped")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    width = max(len(k) for k in _RESULTS)
    for label, e in _RESULTS.items():
        verdict = "PASS" if e["ok"] else "FAIL"
        note = f"  ({', '.join(e['notes'])})" if e["notes"] else ""
        tr.write_line(f"{verdict}  {label:<{width}}  {e['seconds']:7.2f} s / {e['budget']} s"
                      f"{note}")
    passed = sum(e["ok"] for e in _RESULTS.values())
    tr.write_line(f"{passed}/{len(_RESULTS)} criteria passed")
