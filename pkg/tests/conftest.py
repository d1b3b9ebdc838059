import sys
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from microface.data import generate_toy_dataset, load_manifest, make_pairs
from microface.model import ModelConfig
from microface.train import TrainSettings, train_model

# The pinned smoke-test configuration: 8 identities x 20 images, 32x32,
# 8x8 patches, dim 32, depth 2, all components on, seed 1.
SMOKE_MODEL_CFG = ModelConfig(classes=8)
SMOKE_SETTINGS = TrainSettings(epochs=200, seed=1, target_accuracy=0.95)
CORPUS_SEED = 7


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """8 identities x 20 images, 32x32, plus 200 verification pairs."""
    root = tmp_path_factory.mktemp("corpus")
    manifest_path = generate_toy_dataset(root, identities=8, per_id=20, side=32, seed=CORPUS_SEED)
    manifest = load_manifest(manifest_path)
    pairs = make_pairs(manifest, 200, seed=CORPUS_SEED)
    return SimpleNamespace(root=root, manifest_path=manifest_path, manifest=manifest, pairs=pairs)


@pytest.fixture(scope="session")
def smoke_run(toy_corpus):
    """The full-config training run shared by the slower tests."""
    started = time.perf_counter()
    result = train_model(toy_corpus.manifest, SMOKE_MODEL_CFG, SMOKE_SETTINGS)
    elapsed = time.perf_counter() - started
    return SimpleNamespace(result=result, elapsed=elapsed)
