import numpy as np
import pytest

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(code, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    code, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        if not rep.passed and not detail:
            crash = getattr(getattr(rep.longrepr, "reprcrash", None), "message", None)
            detail = (crash or rep.outcome).splitlines()[0][:160]
        prev = _ACCEPTANCE.get(code)
        ok = rep.passed and (prev is None or prev[0])
        details = [d for d in ((prev[2] if prev else ""), f"{item.name}: {detail}" if detail else "") if d]
        _ACCEPTANCE[code] = (ok, title, " | ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_ACCEPTANCE, key=lambda c: int(c[2:])):
        ok, title, detail = _ACCEPTANCE[code]
        tail = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{code} {'PASS' if ok else 'FAIL'}  {title}{tail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
