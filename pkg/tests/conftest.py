import numpy as np
import pytest

from leafbench.data import SplitSpec, scan_dataset, stratified_split
from leafbench.labels import full_space
from leafbench.toydata import generate_toy_dataset


def tensorflow_available() -> bool:
    import importlib.util

    return importlib.util.find_spec("tensorflow") is not None


requires_tensorflow = pytest.mark.skipif(
    not tensorflow_available(), reason="tensorflow not installed")


@pytest.fixture(scope="session")
def paired_space():
    return full_space("paired")


@pytest.fixture(scope="session")
def shared_space():
    return full_space("shared")


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_dataset")
    generate_toy_dataset(root, images_per_class=8, side=32, seed=7)
    return root


@pytest.fixture(scope="session")
def toy_manifest(toy_root, paired_space):
    manifest = scan_dataset(toy_root, paired_space)
    return stratified_split(manifest, SplitSpec(seed=11))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
