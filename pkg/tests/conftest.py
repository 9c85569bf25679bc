import os
from pathlib import Path

import pytest

from analog_shards.learning.mnist import DATA_ENV, DEFAULT_DATA_DIR, TEST_FILES, TRAIN_FILES


def _mnist_available(base: Path) -> bool:
    return all((base / n).exists() or (base / f"{n}.gz").exists() for n in TRAIN_FILES + TEST_FILES)


@pytest.fixture(scope="session")
def mnist_dir():
    base = Path(os.environ.get(DATA_ENV, DEFAULT_DATA_DIR))
    if not _mnist_available(base):
        pytest.skip(f"MNIST IDX files not found in {base} (set {DATA_ENV})")
    return base


@pytest.fixture(scope="session")
def mnist_unit(mnist_dir):
    """3-vs-7 train pool and test set with features in [0, 1]."""
    from analog_shards.learning.mnist import filter_binary, load_mnist_split

    train = filter_binary(load_mnist_split("train", mnist_dir), 3, 7, scale="unit")
    test = filter_binary(load_mnist_split("test", mnist_dir), 3, 7, scale="unit")
    return train, test


# one PASS/FAIL line per acceptance criterion, printed after the run

_ACCEPTANCE_KEY = pytest.StashKey[dict]()
ACCEPTANCE_COUNT = 11


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = {}


@pytest.fixture
def criterion(request):
    """``criterion(number, passed, detail)`` records an acceptance verdict."""
    results = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, passed: bool, detail: str) -> bool:
        results[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, max(max(results), ACCEPTANCE_COUNT) + 1):
        if number not in results:
            terminalreporter.write_line(f"criterion {number:2d}: NOT RUN")
            continue
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
