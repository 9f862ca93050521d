import numpy as np
import pytest

from probqsar.autoencoder import (
    CODE_DIM,
    AutoencoderConfig,
    AutoencoderModel,
    InsufficientData,
    train_autoencoder,
)
from probqsar.nn import DimensionMismatch, NonFiniteValue, Prng, grad_check, mse_loss

SMALL = AutoencoderConfig(input_dim=24, hidden_dim=16, code_dim=6, epochs=40, batch_size=16, lr=3e-3)


def low_rank(n: int, d: int, rank: int, seed: int) -> np.ndarray:
    rng = Prng(seed)
    basis = rng.normal((rank, d)) / np.sqrt(rank)
    return rng.normal((n, rank)) @ basis


class TestShapes:
    def test_default_architecture(self):
        model = AutoencoderModel.init(AutoencoderConfig(), Prng(0))
        dims = [(l.in_dim, l.out_dim) for l in model.encoder.layers + model.decoder.layers]
        assert dims == [(812, 512), (512, 203), (203, 512), (512, 812)]
        assert model.encoder.layers[-1].activation == "identity"
        assert model.decoder.layers[-1].activation == "identity"

    def test_code_dimension(self):
        model = AutoencoderModel.init(AutoencoderConfig(), Prng(0))
        assert model.encode(np.zeros((2, 812))).shape == (2, CODE_DIM)

    def test_encode_deterministic(self):
        model = AutoencoderModel.init(SMALL, Prng(1))
        x = Prng(2).normal((3, 24))
        assert np.array_equal(model.encode(x), model.encode(x))

    def test_wrong_width(self):
        model = AutoencoderModel.init(AutoencoderConfig(), Prng(0))
        with pytest.raises(DimensionMismatch):
            model.encode(np.zeros((1, 811)))
        with pytest.raises(DimensionMismatch):
            model.reconstruct(np.zeros((1, 811)))


class TestTraining:
    def test_loss_decreases_on_low_rank_data(self):
        x = low_rank(200, 24, 3, seed=0)
        model = train_autoencoder(x, SMALL, seed=0)
        assert len(model.loss_history) == SMALL.epochs + 1
        assert model.loss_history[-1] < 0.05 * model.loss_history[0]

    def test_held_out_close_to_train(self):
        x = low_rank(300, 24, 3, seed=1)
        model = train_autoencoder(x[:200], SMALL, seed=0)
        train = model.reconstruct(x[:200])[1].mean()
        held = model.reconstruct(x[200:])[1].mean()
        assert held < 2.0 * train

    def test_deterministic(self):
        x = low_rank(50, 24, 3, seed=2)
        cfg = AutoencoderConfig(24, 16, 6, epochs=3, batch_size=16)
        assert train_autoencoder(x, cfg, 5).to_bytes() == train_autoencoder(x, cfg, 5).to_bytes()

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            train_autoencoder(np.zeros((5, 24)), SMALL)

    def test_non_finite_input(self):
        x = low_rank(20, 24, 2, seed=3)
        x[4, 7] = np.nan
        with pytest.raises(NonFiniteValue):
            train_autoencoder(x, SMALL)

    def test_reconstruct_per_sample(self):
        model = AutoencoderModel.init(SMALL, Prng(0))
        x = Prng(1).normal((4, 24))
        recon, err = model.reconstruct(x)
        assert np.allclose(err, ((recon - x) ** 2).mean(axis=1))


class TestSerialization:
    def test_round_trip(self):
        model = train_autoencoder(low_rank(30, 24, 2, 4), AutoencoderConfig(24, 16, 6, epochs=2), seed=1)
        back = AutoencoderModel.from_bytes(model.to_bytes())
        x = Prng(9).normal((5, 24))
        assert np.array_equal(back.encode(x), model.encode(x))
        assert back.config == model.config


def test_gradients_match_finite_differences():
    cfg = AutoencoderConfig(input_dim=6, hidden_dim=5, code_dim=3)
    model = AutoencoderModel.init(cfg, Prng(3))
    x = Prng(4).normal((4, 6))

    def loss():
        return mse_loss(model.decoder.forward(model.encoder.forward(x, cache=False), cache=False), x)[0]

    _, g = mse_loss(model.decoder.forward(model.encoder.forward(x)), x)
    g_dec, g_code = model.decoder.backward(g)
    g_enc, _ = model.encoder.backward(g_code)
    assert grad_check(model.params(), g_enc + g_dec, loss).max_rel_error < 1e-4
