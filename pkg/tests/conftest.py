import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `helpers`

from mrdn import tensor as T


@pytest.fixture(autouse=True)
def _clean_tensor_state():
    """Every test starts in standard precision with an empty tape."""
    T.set_precision("standard")
    T.clear_tape()
    yield
    T.clear_tape()
    T.set_precision("standard")


@pytest.fixture
def wide():
    with T.precision("wide"):
        yield
