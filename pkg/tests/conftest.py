import pytest
import torch
from hypothesis import settings

from aiosod.config import desk_scale
from aiosod.data.manifest import load_manifest
from aiosod.data.synthetic import make_mixed

torch.set_num_threads(1)

# fixed example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    """Manifests of three small synthetic datasets (4 samples each, one per modality)."""
    root = tmp_path_factory.mktemp("synthetic")
    return make_mixed(root, n_per=4, size=(80, 96), seed=0)


@pytest.fixture(scope="session")
def records(synthetic):
    return {m: load_manifest(p) for m, p in synthetic.items()}


@pytest.fixture()
def desk():
    return desk_scale()
