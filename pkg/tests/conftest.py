import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """report(tag, ok, detail): one pass/fail line, echoed again in the terminal summary."""
    def _report(tag: str, ok: bool, detail: str = "", expected_fail: bool = False) -> bool:
        status = "PASS" if ok else ("FAIL (expected, see decisions ledger)" if expected_fail
                                    else "FAIL")
        line = f"{tag}: {status}  {detail}".rstrip()
        print(line)
        _LINES.append(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
