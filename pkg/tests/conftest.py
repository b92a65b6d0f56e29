import numpy as np
import pytest


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture()
def random_pair(rng):
    return rng.random((32, 32)), rng.random((32, 32))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small on-disk dataset shared by CLI-level tests."""
    from fusemetrics.synth import write_dataset

    root = tmp_path_factory.mktemp("tinyset")
    write_dataset(root, n_scenes=6, size=(48, 48), base_seed=500)
    return root
