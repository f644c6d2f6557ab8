import numpy as np
import pytest

from pifnet.config import RunConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_config(n: int = 260, seed: int = 0) -> RunConfig:
    """Desk-scale config: small data, small model, few epochs."""
    cfg = RunConfig.defaults()
    cfg.data.n = n
    cfg.data.spike_count = 4
    cfg.data.seed = 11
    cfg.split.test_rows = 30
    cfg.lof.k = 5
    cfg.lof.contamination = 0.05
    cfg.svr.max_rows = 64
    cfg.svr.max_iter = 50000
    cfg.shapley.background_rows = 16
    cfg.shapley.max_samples = 12
    cfg.model.lookback = 12
    cfg.model.patch_length = 4
    cfg.model.stride = 2
    cfg.model.hidden = 8
    cfg.model.layers = 2
    cfg.training.max_epoch = 3
    cfg.training.batch_size = 16
    cfg.training.seed = seed
    cfg.ablation.seeds = (0, 1)
    cfg.sensitivity.max_epoch_grid = (1, 2)
    cfg.sensitivity.lookback_grid = (8, 12)
    cfg.sensitivity.batch_size_grid = (8, 16)
    return cfg
