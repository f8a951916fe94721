import sys
from pathlib import Path

import pytest

BRIDGE_ROOT = Path(__file__).resolve().parents[1]
REPO_ROOT = BRIDGE_ROOT.parent
# The golden transcript files are shared verbatim with the toolkit's own
# suite: both sides must reproduce the identical bytes.
PRIMARY_DATA = REPO_ROOT / "tests" / "data"

BRIDGE_CMD = [sys.executable, "-m", "pyrolens_bridge"]


@pytest.fixture(scope="session")
def primary_data():
    assert PRIMARY_DATA.is_dir(), f"expected shared transcript fixtures at {PRIMARY_DATA}"
    return PRIMARY_DATA
