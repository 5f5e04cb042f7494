import pytest

_LINES: list[str] = []


class _Reporter:
    def __call__(self, number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        _LINES.append(line)
        return ok

    def skip(self, number: int, reason: str) -> None:
        line = f"criterion {number}: SKIP {reason}"
        print(line)
        _LINES.append(line)
        pytest.skip(reason)


@pytest.fixture
def criterion():
    return _Reporter()


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
