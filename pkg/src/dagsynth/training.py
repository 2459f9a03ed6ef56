"""Adversarial losses, the KL auxiliary term and the alternating training loop."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .autodiff import (
    Adam,
    NonFiniteError,
    NonFiniteGradientError,
    RMSProp,
    Tensor,
    clamp_min,
    clip_weights,
    gradients,
    log,
    mean,
    no_grad,
    sigmoid,
    sqrt,
    tsum,
)
from .dag import Dag
from .data.encoding import EncodedTable, encode_table
from .data.table import ColumnMeta
from .discriminator import Discriminator, DiscriminatorSpec, assemble_input
from .generator import Generator, GeneratorSizes

LOSSES = ("SGAN", "WGAN", "WGGP")
DEFAULT_LR = {"SGAN": 1e-3, "WGAN": 2e-4, "WGGP": 1e-4}
# Clipped critics score on a ~1e-3 scale; a unit-weight KL would drown that signal.
DEFAULT_KL_WEIGHT = {"SGAN": 1.0, "WGAN": 0.01, "WGGP": 1.0}
EPS = 1e-12
HISTORY_COLUMNS = ("step", "epoch", "L_G", "L_D", "KL", "GP")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "WGAN"
    epochs: int = 100
    batch_size: int = 500
    lr: float | None = None  # None: per-loss default
    gp_lambda: float = 10.0
    clip: float = 0.01
    n_critic: int | None = None  # None: 1 for SGAN, 5 otherwise
    smoothing: str = "TS"
    gamma: float = 0.2
    kl_weight: float | None = None  # None: per-loss default
    seed: int = 0
    hidden: int = 50
    noise: int = 50
    conv: int = 50
    critic_layers: int = 2
    critic_width: int = 100
    mbd_kernels: int = 10
    mbd_dims: int = 10

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("epochs must be >= 1 and batch_size >= 2")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be >= 0")
        if self.clip <= 0:
            raise ValueError("clip must be > 0")
        if self.kl_weight is not None and self.kl_weight < 0:
            raise ValueError("kl_weight must be >= 0")
        if self.n_critic is not None and self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else DEFAULT_LR[self.loss]

    @property
    def kl_scale(self) -> float:
        return self.kl_weight if self.kl_weight is not None else DEFAULT_KL_WEIGHT[self.loss]

    @property
    def critic_steps(self) -> int:
        if self.n_critic is not None:
            return self.n_critic
        return 1 if self.loss == "SGAN" else 5

    def sizes(self) -> GeneratorSizes:
        return GeneratorSizes(self.hidden, self.noise, self.conv, self.batch_size)

    def critic_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec(
            n_layers=self.critic_layers,
            width=self.critic_width,
            norm="layer" if self.loss == "WGGP" else "batch",
            mbd_kernels=self.mbd_kernels,
            mbd_dims=self.mbd_dims,
            smoothing=self.smoothing,
            gamma=self.gamma,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    generator: Tensor
    discriminator: Tensor
    kl: Tensor | None = None
    gp: Tensor | None = None

    def values(self) -> dict[str, float]:
        def f(t):
            return float("nan") if t is None else t.item()

        return {"L_G": f(self.generator), "L_D": f(self.discriminator), "KL": f(self.kl), "GP": f(self.gp)}


# -------------------------------------------------------------------- losses


def loss_sgan(scores_real: Tensor, scores_synth: Tensor) -> LossBreakdown:
    """L_G = -E log D(G(z)); L_D = -E log D(x) + E log D(G(z)), D = sigmoid(score)."""
    log_real = log(clamp_min(sigmoid(scores_real), EPS))
    log_synth = log(clamp_min(sigmoid(scores_synth), EPS))
    return LossBreakdown(-mean(log_synth), -mean(log_real) + mean(log_synth))


def loss_wgan(scores_real: Tensor, scores_synth: Tensor) -> LossBreakdown:
    return LossBreakdown(-mean(scores_synth), -mean(scores_real) + mean(scores_synth))


def gradient_penalty(critic, interp: Tensor) -> Tensor:
    """E[(||grad_v D(v)||_2 - 1)^2] over interpolated rows; differentiable w.r.t. the critic."""
    scores = critic(interp)
    (g,) = gradients(tsum(scores), [interp], create_graph=True)
    norm = sqrt(tsum(g * g, axis=1) + EPS)
    return mean((norm - 1.0) * (norm - 1.0))


def interpolate(real: Tensor, synth: Tensor, rng: np.random.Generator) -> Tensor:
    u = rng.random((real.shape[0], 1))
    return Tensor(u * real.data + (1.0 - u) * synth.data, requires_grad=True)


def loss_wggp(
    scores_real: Tensor,
    scores_synth: Tensor,
    critic=None,
    interp: Tensor | None = None,
    gp_lambda: float = 10.0,
) -> LossBreakdown:
    if gp_lambda < 0:
        raise ValueError("gp_lambda must be >= 0")
    out = loss_wgan(scores_real, scores_synth)
    if gp_lambda == 0 or critic is None:
        return out
    gp = gradient_penalty(critic, interp)
    return LossBreakdown(out.generator, out.discriminator + gp_lambda * gp, gp=gp)


def _discrete_blocks(encoded: EncodedTable) -> list:
    # the probability block of each continuous column and every one-hot block
    return [encoded.blocks[m.name][-1] for m in encoded.metas]


def kl_term(original: EncodedTable, synthetic: EncodedTable) -> Tensor:
    """Sum over discrete blocks of KL(mean original row || mean synthetic row)."""
    total = Tensor(np.zeros(()))
    for p_block, q_block in zip(_discrete_blocks(original), _discrete_blocks(synthetic)):
        p = np.asarray(getattr(p_block, "data", p_block)).mean(axis=0)
        q = mean(q_block, axis=0) if isinstance(q_block, Tensor) else Tensor(np.mean(q_block, axis=0))
        keep = p > 0
        if not keep.any():
            continue
        idx = np.flatnonzero(keep)
        pk = p[idx]
        total = total + tsum(Tensor(pk) * (Tensor(np.log(pk)) - log(clamp_min(q[idx], EPS))))
    return total


# ------------------------------------------------------------------- trainer


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: dict):
        super().__init__(f"{message}; snapshot: {snapshot}")
        self.snapshot = snapshot


@dataclass
class TrainState:
    """Everything beyond parameters that a resumed run needs."""

    permutation: np.ndarray
    cursor: int = 0
    step: int = 0  # generator steps taken
    critic_step: int = 0
    history: list[dict] = field(default_factory=list)


class Trainer:
    def __init__(
        self,
        table: pd.DataFrame,
        dag: Dag,
        metas: Sequence[ColumnMeta],
        config: TrainConfig = TrainConfig(),
    ):
        self.config = config
        self.dag = dag
        self.metas = list(metas)
        self.encoded = encode_table(table, self.metas)
        n = len(table)
        if n < 2:
            raise ValueError("need at least 2 rows to train")
        self.batch = min(config.batch_size, n)
        self.n_batches = n // self.batch
        self.steps_per_epoch = self.n_batches
        self.generator = Generator.build(dag, self.metas, config.sizes(), seed=config.seed)
        self.critic = Discriminator(config.critic_spec(), self.encoded.width, seed=config.seed + 1)
        lr = config.learning_rate
        if config.loss == "WGAN":
            self.g_opt = RMSProp(self.generator.parameters(), lr)
            self.d_opt = RMSProp(self.critic.parameters(), lr)
        else:
            self.g_opt = Adam(self.generator.parameters(), lr)
            self.d_opt = Adam(self.critic.parameters(), lr)
        self.rng = np.random.default_rng(config.seed + 2)
        self.state = TrainState(self.rng.permutation(n))

    # --------------------------------------------------------- batches

    def _next_real(self) -> EncodedTable:
        st = self.state
        if st.cursor >= self.n_batches:
            st.permutation = self.rng.permutation(len(st.permutation))
            st.cursor = 0
        rows = st.permutation[st.cursor * self.batch : (st.cursor + 1) * self.batch]
        st.cursor += 1
        return self.encoded.take(rows)

    # ----------------------------------------------------------- steps

    def _assemble(self, encoded: EncodedTable, side: str) -> Tensor:
        c = self.config
        return assemble_input(encoded, side, c.smoothing, c.gamma, self.rng)

    def critic_step(self, real: EncodedTable) -> LossBreakdown:
        c = self.config
        with no_grad():
            fake = self.generator.forward(self.batch, self.rng)
        losses = self.critic_loss(real, fake)
        params = self.critic.parameters()
        self.d_opt.step(gradients(losses.discriminator, params))
        if c.loss == "WGAN":
            clip_weights(self.critic.weights(), c.clip)
        self.state.critic_step += 1
        return losses

    def critic_loss(self, real: EncodedTable, fake: EncodedTable) -> LossBreakdown:
        c = self.config
        x_real = self._assemble(real, "original")
        x_fake = self._assemble(fake, "synthetic")
        s_real, s_fake = self.critic(x_real), self.critic(x_fake)
        if c.loss == "SGAN":
            return loss_sgan(s_real, s_fake)
        if c.loss == "WGAN":
            return loss_wgan(s_real, s_fake)
        interp = interpolate(x_real, x_fake, self.rng)
        return loss_wggp(s_real, s_fake, self.critic, interp, c.gp_lambda)

    def generator_step(self, real: EncodedTable) -> LossBreakdown:
        fake = self.generator.forward(self.batch, self.rng)
        out = self.generator_loss(real, fake)
        self.g_opt.step(gradients(out.generator, self.generator.parameters()))
        self.state.step += 1
        return out

    def generator_loss(self, real: EncodedTable, fake: EncodedTable) -> LossBreakdown:
        """Adversarial term plus the weighted KL term; ``discriminator`` is left at zero."""
        c = self.config
        scores = self.critic(self._assemble(fake, "synthetic"))
        if c.loss == "SGAN":
            adv = -mean(log(clamp_min(sigmoid(scores), EPS)))
        else:
            adv = -mean(scores)
        kl = kl_term(real, fake)
        loss = adv + c.kl_scale * kl if c.kl_scale else adv
        return LossBreakdown(loss, Tensor(np.zeros(())), kl=kl)

    def step(self) -> dict:
        """One real batch: n_critic critic updates, then one generator update.

        Each critic update draws a fresh synthetic batch; the generator's KL
        term compares against the same real batch. Returns the history row.
        """
        real = self._next_real()
        try:
            for _ in range(self.config.critic_steps):
                d = self.critic_step(real)
            g = self.generator_step(real)
        except (NonFiniteError, NonFiniteGradientError) as exc:
            raise TrainingDiverged(str(exc), self.snapshot()) from exc
        row = {
            "step": self.state.step,
            "epoch": (self.state.step - 1) // self.steps_per_epoch + 1,
            "L_G": g.generator.item(),
            "L_D": d.discriminator.item(),
            "KL": g.kl.item(),
            "GP": d.gp.item() if d.gp is not None else 0.0,
        }
        self.state.history.append(row)
        return row

    def snapshot(self) -> dict:
        def norms(params):
            return {p.name: float(np.linalg.norm(p.data)) for p in params if not np.isfinite(p.data).all()} or {
                "max_abs": float(max(np.abs(p.data).max() for p in params))
            }

        return {
            "step": self.state.step,
            "critic_step": self.state.critic_step,
            "last": self.state.history[-1] if self.state.history else None,
            "generator": norms(self.generator.parameters()),
            "critic": norms(self.critic.parameters()),
        }

    def train(self, epochs: int | None = None, steps: int | None = None) -> list[dict]:
        """Run ``steps`` generator steps, or enough for ``epochs`` more epochs (default: config)."""
        if steps is None:
            steps = (epochs if epochs is not None else self.config.epochs) * self.steps_per_epoch
        for _ in range(steps):
            self.step()
        return self.state.history

    @property
    def epoch(self) -> int:
        return self.state.step // self.steps_per_epoch

    def sample_encoded(self, n_rows: int, rng: np.random.Generator) -> EncodedTable:
        with no_grad():
            return self.generator.forward(n_rows, rng)


def train(table: pd.DataFrame, dag: Dag, metas: Sequence[ColumnMeta], config: TrainConfig = TrainConfig()) -> Trainer:
    trainer = Trainer(table, dag, metas, config)
    trainer.train()
    return trainer


def write_history(history: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        writer.writeheader()
        for row in history:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
