from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from dagsynth.autodiff import Tensor, gradients, mean
from dagsynth.dag import Dag
from dagsynth.data import encode_table, infer_meta
from dagsynth.training import (
    TrainConfig,
    Trainer,
    TrainingDiverged,
    gradient_penalty,
    kl_term,
    loss_sgan,
    loss_wgan,
    loss_wggp,
    write_history,
)

from oracles import toy_table

TINY = dict(epochs=1, batch_size=50, hidden=6, noise=5, conv=6, critic_layers=1, critic_width=8, mbd_kernels=2, mbd_dims=2)


def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


@pytest.fixture(scope="module")
def toy():
    table = toy_table(200, seed=3)
    metas = infer_meta(table, categorical=["d1", "d2"])
    dag = Dag(("x", "d1", "d2"), (("x", "d1"), ("d1", "d2")))
    return table, metas, dag


# ----------------------------------------------------------------- losses


def test_sgan_half():
    zero = Tensor(np.zeros((7, 1)))
    assert loss_sgan(zero, zero).generator.item() == pytest.approx(math.log(2), abs=1e-15)


def test_sgan_clamped_at_boundary():
    out = loss_sgan(Tensor(np.full((3, 1), 50.0)), Tensor(np.full((3, 1), -1e4)))
    assert np.isfinite(out.discriminator.item())
    assert out.discriminator.item() == pytest.approx(math.log(1e-12), rel=1e-6)


def test_sgan_matches_longhand():
    rng = np.random.default_rng(0)
    r, f = rng.standard_normal((20, 1)), rng.standard_normal((20, 1))
    out = loss_sgan(Tensor(r), Tensor(f))
    assert out.generator.item() == pytest.approx(-np.mean(np.log(_sig(f))), rel=1e-12)
    assert out.discriminator.item() == pytest.approx(-np.mean(np.log(_sig(r))) + np.mean(np.log(_sig(f))), rel=1e-12)


def test_wgan_values():
    rng = np.random.default_rng(1)
    r, f = rng.standard_normal((15, 1)), rng.standard_normal((15, 1))
    out = loss_wgan(Tensor(r), Tensor(f))
    assert out.discriminator.item() == pytest.approx(-r.mean() + f.mean(), rel=1e-12)
    assert out.generator.item() == pytest.approx(-f.mean(), rel=1e-12)
    shifted = loss_wgan(Tensor(r + 3.0), Tensor(f + 3.0))
    assert shifted.discriminator.item() == pytest.approx(out.discriminator.item(), abs=1e-12)
    assert loss_wgan(Tensor(r), Tensor(r)).discriminator.item() == 0.0


def test_wggp_lambda_zero_is_wgan():
    rng = np.random.default_rng(2)
    r, f = Tensor(rng.standard_normal((9, 1))), Tensor(rng.standard_normal((9, 1)))
    a, b = loss_wggp(r, f, gp_lambda=0.0), loss_wgan(r, f)
    assert a.discriminator.item() == b.discriminator.item()
    assert a.generator.item() == b.generator.item()
    with pytest.raises(ValueError):
        loss_wggp(r, f, gp_lambda=-1.0)


def test_penalty_of_unit_linear_map_is_zero():
    w = np.array([[0.6], [0.8]])

    def critic(v):
        return v @ Tensor(w)

    interp = Tensor(np.random.default_rng(3).standard_normal((11, 2)), True)
    assert gradient_penalty(critic, interp).item() == pytest.approx(0.0, abs=1e-10)
    doubled = gradient_penalty(lambda v: v @ Tensor(2 * w), interp).item()
    assert doubled == pytest.approx(1.0, abs=1e-10)


def test_kl_values(toy):
    table, metas, _ = toy
    enc = encode_table(table, metas)
    assert kl_term(enc, enc).item() == pytest.approx(0.0, abs=1e-15)
    meta = [m for m in metas if m.name == "d1"]
    p = encode_table(pd.DataFrame({"d1": [1, 1]}), meta)
    q = encode_table(pd.DataFrame({"d1": [0, 1]}), meta)
    assert kl_term(p, q).item() == pytest.approx(math.log(2), rel=1e-12)


def test_kl_nonnegative_random(toy):
    table, metas, _ = toy
    rng = np.random.default_rng(4)
    enc = encode_table(table, metas)
    for _ in range(50):
        other = enc.take(rng.integers(0, len(table), len(table)))
        assert kl_term(enc, other).item() >= 0.0


# ---------------------------------------------------------------- trainer


@pytest.mark.parametrize("loss", ["SGAN", "WGAN", "WGGP"])
def test_smoke_epoch(toy, loss):
    table, metas, dag = toy
    tr = Trainer(table, dag, metas, TrainConfig(loss=loss, **TINY))
    hist = tr.train()
    assert len(hist) == tr.steps_per_epoch == 4
    assert all(np.isfinite(v) for row in hist for v in row.values())
    assert tr.state.critic_step == 4 * tr.config.critic_steps


def test_clip_postcondition(toy):
    table, metas, dag = toy
    tr = Trainer(table, dag, metas, TrainConfig(loss="WGAN", clip=0.01, **TINY))
    real = tr._next_real()
    for _ in range(3):
        tr.critic_step(real)
        assert all(np.abs(t.data).max() <= 0.01 for t in tr.critic.weights())


def test_steps_touch_only_their_network(toy):
    table, metas, dag = toy
    tr = Trainer(table, dag, metas, TrainConfig(loss="WGGP", **TINY))
    real = tr._next_real()
    gen_before = [t.data.copy() for t in tr.generator.parameters()]
    tr.critic_step(real)
    assert all(np.array_equal(a, t.data) for a, t in zip(gen_before, tr.generator.parameters()))
    critic_before = [t.data.copy() for t in tr.critic.parameters()]
    tr.generator_step(real)
    assert all(np.array_equal(a, t.data) for a, t in zip(critic_before, tr.critic.parameters()))


def test_reproducible_history(toy, tmp_path):
    table, metas, dag = toy
    cfg = TrainConfig(loss="WGAN", **TINY)
    paths = []
    for k in range(2):
        tr = Trainer(table, dag, metas, cfg)
        tr.train()
        paths.append(tmp_path / f"h{k}.csv")
        write_history(tr.state.history, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_text().splitlines()[0] == "step,epoch,L_G,L_D,KL,GP"


def test_divergence_snapshot(toy):
    table, metas, dag = toy
    tr = Trainer(table, dag, metas, TrainConfig(loss="WGAN", **TINY))
    tr.generator.cells[0].params["lstm/W"].data[:] = np.nan
    with pytest.raises(TrainingDiverged) as info:
        tr.step()
    assert "lstm/W" in str(info.value.snapshot)


def test_config_validation():
    for bad in (dict(loss="LSGAN"), dict(epochs=0), dict(gp_lambda=-1), dict(n_critic=0), dict(clip=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
    assert TrainConfig(loss="SGAN").critic_steps == 1
    assert TrainConfig(loss="WGGP").critic_spec().norm == "layer"
    assert TrainConfig(loss="WGAN").learning_rate == 2e-4


def test_generator_gradient_reaches_noise_routes(toy):
    table, metas, dag = toy
    tr = Trainer(table, dag, metas, TrainConfig(loss="WGAN", **TINY))
    fake = tr.generator.forward(20, 0)
    loss = mean(tr.critic(tr._assemble(fake, "synthetic")))
    routes = [t for pair in tr.generator.routes.values() for t in pair]
    assert all(np.any(g.data) for g in gradients(loss, routes))
