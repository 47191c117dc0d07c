import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
DATA_DIR = REPO / "data"

sys.path.insert(0, str(REPO / "tests"))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR
