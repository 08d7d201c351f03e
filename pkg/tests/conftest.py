import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symcalc.controller import ToyEncoder
from symcalc.datagen import sample_decoder_dataset, sample_switch_dataset
from symcalc.network import PRIMITIVES, build_complete
from symcalc.training import TrainConfig, train_decoder, train_switch


@pytest.fixture(scope="session")
def provider():
    return ToyEncoder()


@pytest.fixture(scope="session")
def spec10():
    return build_complete(list(PRIMITIVES.values()), n_inputs=2, n_layers=1)


@pytest.fixture(scope="session")
def trained_decoder(provider, spec10):
    """Decoder trained with the two-stage schedule; shared by the end-to-end
    tests and the acceptance suite (training it once keeps the suite fast)."""
    t0 = time.time()
    stage1 = sample_decoder_dataset(1500, seed=100, answer_prefix=True)
    stage2 = sample_decoder_dataset(3000, seed=200, answer_prefix=False)
    config = TrainConfig(learning_rate=6e-4, weight_decay=0.01, effective_batch=8,
                         samples_per_token=400, max_steps=10 ** 9, seed=0)
    params, log = train_decoder(config, provider, spec10,
                                [(stage1, 150), (stage2, 1850)])
    return {"params": params, "log": log, "seconds": time.time() - t0}


@pytest.fixture(scope="session")
def trained_switch(provider):
    t0 = time.time()
    streams = sample_switch_dataset(600, seed=50)
    config = TrainConfig(learning_rate=6e-4, weight_decay=0.01, effective_batch=8,
                         samples_per_token=1, max_steps=2000, seed=1)
    params, log = train_switch(config, provider, streams)
    return {"params": params, "log": log, "seconds": time.time() - t0,
            "train_streams": streams}
