import numpy as np
import pytest

from mixvi.model import MixedDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dataset(rng, n, q, cards):
    x = rng.normal(size=(n, q))
    c = np.column_stack([rng.integers(0, d, size=n) for d in cards]) if cards else np.zeros((n, 0), int)
    return MixedDataset(x=x, c=c, cards=tuple(cards))


ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
