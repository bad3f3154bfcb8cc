"""Short end-to-end training runs for the variational model."""

import numpy as np
import pytest

from vrnnplan.dataset import generate_dataset
from vrnnplan.errors import TrainingDiverged
from vrnnplan.model import (AdaptationVars, LayerConfig, ModelConfig,
                            forward_posterior, train)
from vrnnplan.numeric import make_rng


def quick_config(epochs=150, lr=0.01, w=0.01, T=30):
    return ModelConfig(layers=(LayerConfig(8, 2, 2.0, w),
                               LayerConfig(4, 1, 4.0, w / 2)),
                       output_dim=2, T=T, w_I=0.001, lr=lr, epochs=epochs,
                       seed=0)


@pytest.fixture(scope="module")
def tiny_dataset():
    return generate_dataset(3, 4)


def test_training_improves_elbo(tiny_dataset):
    cfg = quick_config()
    _, _, hist = train(tiny_dataset, cfg, rng=make_rng(0))
    first = hist["elbo"][:10].mean()
    last = hist["elbo"][-10:].mean()
    assert last > first
    assert hist["accuracy"][-1] > hist["accuracy"][0]


def test_training_is_deterministic(tiny_dataset):
    cfg = quick_config(epochs=40)
    p1, a1, h1 = train(tiny_dataset, cfg, rng=make_rng(5))
    p2, a2, h2 = train(tiny_dataset, cfg, rng=make_rng(5))
    for k in p1.blocks:
        assert np.array_equal(p1.blocks[k], p2.blocks[k])
    for l in range(cfg.n_layers):
        assert np.array_equal(a1.a_mu[l], a2.a_mu[l])
    assert np.array_equal(h1["elbo"], h2["elbo"])


def test_training_seed_changes_outcome(tiny_dataset):
    cfg = quick_config(epochs=40)
    p1, _, _ = train(tiny_dataset, cfg, rng=make_rng(5))
    p2, _, _ = train(tiny_dataset, cfg, rng=make_rng(6))
    assert any(not np.array_equal(p1.blocks[k], p2.blocks[k])
               for k in p1.blocks)


def test_divergence_is_reported(tiny_dataset):
    # A non-finite target makes the very first ELBO non-finite.
    bad = [t for t in tiny_dataset]
    import copy
    bad[0] = copy.deepcopy(bad[0])
    bad[0].positions[5, 0] = np.nan
    cfg = quick_config(epochs=10)
    with pytest.raises(TrainingDiverged) as exc:
        train(bad, cfg, rng=make_rng(0))
    assert exc.value.epoch == 0


def test_posterior_reconstruction_beats_untrained(tiny_dataset):
    cfg = quick_config(epochs=300)
    X = np.stack([t.positions for t in tiny_dataset], axis=1)
    params, A, _ = train(tiny_dataset, cfg, rng=make_rng(1))
    trained = forward_posterior(params, A, cfg, make_rng(2))
    err_trained = np.mean((trained.x - X) ** 2)

    from vrnnplan.model import NetworkParams
    raw = NetworkParams.init_random(cfg, make_rng(1))
    A0 = AdaptationVars.zeros(cfg, X.shape[1])
    untrained = forward_posterior(raw, A0, cfg, make_rng(2))
    err_raw = np.mean((untrained.x - X) ** 2)
    assert err_trained < err_raw / 2
