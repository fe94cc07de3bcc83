import pytest

_LINES = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""
    seen = []

    def record(label, ok, detail=""):
        seen.append(label)
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        assert ok, f"{label}: {detail}"

    yield record
    if not seen:
        _LINES.append(f"FAIL  {request.node.name}  raised before reaching a verdict")


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
