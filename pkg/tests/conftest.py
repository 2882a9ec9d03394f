import json
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE.parent / "src" / "nodesplit" / "fixtures"
GOLDEN = HERE / "golden"


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN


def _bundle(name):
    from nodesplit.netmodel import load_network
    from nodesplit.tensorio import load_tensor, load_weights

    return {
        "doc": json.loads((FIXTURES / f"{name}.arch").read_text()),
        "net": load_network(FIXTURES / f"{name}.arch"),
        "weights": load_weights(FIXTURES / f"{name}.dnnw"),
        "input": load_tensor(FIXTURES / f"{name}_input.dnnt"),
    }


@pytest.fixture(scope="session")
def ae1():
    return _bundle("ae1")


@pytest.fixture(scope="session")
def ae2():
    return _bundle("ae2")
