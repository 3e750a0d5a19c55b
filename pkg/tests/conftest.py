import numpy as np
import pytest

from postel.graph import build_graph
from postel.stats import LabelState


@pytest.fixture
def triangle():
    return build_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def triangle_labels():
    return LabelState.from_ground_truth(np.array([0, 0, 1]), 2)


@pytest.fixture
def path4():
    return build_graph(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


class CriterionRecorder:
    def __init__(self, number, title, lines):
        self.number, self.title, self.lines = number, title, lines
        self.recorded = False

    def report(self, ok: bool, detail: str):
        line = f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'}  {self.title}: {detail}"
        self.lines.append(line)
        self.recorded = True
        print(line)
        return ok


@pytest.fixture
def criterion(request):
    """Recorder for one acceptance criterion; test names look like ``test_c07_title``."""
    name = request.node.originalname
    number = int(name.split("_")[1][1:])
    title = " ".join(name.split("_")[2:])
    rec = CriterionRecorder(number, title, request.config.stash[_ACCEPTANCE_KEY])
    yield rec
    if not rec.recorded:
        rec.report(False, "did not complete")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
