import pytest

from pathlib import Path

from codegraph.graph_store import load_snapshot, save_snapshot
from codegraph.indexer import index_repository

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def alpha_root() -> str:
    return str(FIXTURES / "alpha")


@pytest.fixture(scope="session")
def beta_root() -> str:
    return str(FIXTURES / "beta")


@pytest.fixture(scope="session")
def alpha_indexed(alpha_root):
    return index_repository(alpha_root)


@pytest.fixture(scope="session")
def alpha_graph(alpha_indexed):
    return alpha_indexed[0]


@pytest.fixture(scope="session")
def beta_indexed(beta_root):
    return index_repository(beta_root)


@pytest.fixture(scope="session")
def beta_graph(beta_indexed):
    return beta_indexed[0]


@pytest.fixture(scope="session")
def alpha_snapshot_dir(alpha_graph, tmp_path_factory) -> str:
    directory = tmp_path_factory.mktemp("alpha_snapshot")
    save_snapshot(alpha_graph, str(directory))
    return str(directory)


@pytest.fixture(scope="session")
def alpha_handle(alpha_snapshot_dir):
    return load_snapshot(alpha_snapshot_dir)


@pytest.fixture(scope="session")
def beta_handle(beta_graph, tmp_path_factory):
    directory = tmp_path_factory.mktemp("beta_snapshot")
    save_snapshot(beta_graph, str(directory))
    return load_snapshot(str(directory))
