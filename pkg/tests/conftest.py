import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion (all parts must pass)."""

    def record(name: str, ok: bool, detail: str = ""):
        prev_ok, prev_detail = _RESULTS.get(name, (True, ""))
        joined = "; ".join(d for d in (prev_detail, detail) if d)
        _RESULTS[name] = (prev_ok and bool(ok), joined)
        print(f"{name} {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")

    def order(name):
        num = "".join(ch for ch in name[2:] if ch.isdigit())
        return int(num or 0), name

    for name in sorted(_RESULTS, key=order):
        ok, detail = _RESULTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
