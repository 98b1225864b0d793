from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CONFIGS = ROOT / "configs"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def breast_cancer_path():
    return DATA / "breast-cancer-wisconsin.data"


@pytest.fixture(scope="session")
def mnist_paths():
    return {
        "train": (DATA / "train-images-idx3-ubyte.gz", DATA / "train-labels-idx1-ubyte.gz"),
        "test": (DATA / "t10k-images-idx3-ubyte.gz", DATA / "t10k-labels-idx1-ubyte.gz"),
    }


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
