"""Shared pytest configuration.

The acceptance suite (tests/test_acceptance.py) doubles as a release gate;
this hook prints one PASS/FAIL line per acceptance test so the gate's result
can be read off the log without parsing the pytest summary.
"""


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    label = name.removeprefix("test_").replace("_", "-")
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[ACCEPTANCE] {status}: {label}", flush=True)
