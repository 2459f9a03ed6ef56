"""Versioned binary checkpoints: JSON header plus little-endian array payloads.

Layout: ``MAGIC | u32 version | u64 header length | header JSON | payloads``.
The header is serialised with sorted keys and no whitespace so that
save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dag import Dag
from .data.mixture import MixtureModel
from .data.table import CATEGORICAL, ColumnMeta
from .generator import Generator
from .training import TrainConfig, Trainer

MAGIC = b"DAGSYNTH"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    dag: Dag
    metas: list[ColumnMeta]
    arrays: dict[str, np.ndarray]
    info: dict  # rng state, counters, history, optimiser step counts

    # ------------------------------------------------------------ build

    @classmethod
    def from_trainer(cls, trainer: Trainer) -> "Checkpoint":
        arrays: dict[str, np.ndarray] = {}
        for name, t in trainer.generator.named_parameters().items():
            arrays[f"generator/{name}"] = t.data
        for name, t in trainer.critic.named_parameters().items():
            arrays[f"critic/{name}"] = t.data
        for prefix, opt in (("g_opt", trainer.g_opt), ("d_opt", trainer.d_opt)):
            for key, arr in opt.state_arrays().items():
                arrays[f"{prefix}/{key}"] = arr
        for m in trainer.metas:
            if m.is_continuous:
                for field in ("means", "stds", "weights"):
                    arrays[f"mixture/{m.name}/{field}"] = getattr(m.mixture, field)
        st = trainer.state
        arrays["state/permutation"] = st.permutation
        info = {
            "rng": trainer.rng.bit_generator.state,
            "cursor": st.cursor,
            "step": st.step,
            "critic_step": st.critic_step,
            "epoch": trainer.epoch,
            "history": st.history,
            "g_opt_steps": trainer.g_opt.step_count,
            "d_opt_steps": trainer.d_opt.step_count,
        }
        return cls(trainer.config, trainer.dag, list(trainer.metas), arrays, info)

    # ---------------------------------------------------------- restore

    def generator(self) -> Generator:
        gen = Generator.build(self.dag, self.metas, self.config.sizes(), seed=self.config.seed)
        for name, t in gen.named_parameters().items():
            t.data = self.arrays[f"generator/{name}"].copy()
        return gen

    def trainer(self, table: pd.DataFrame) -> Trainer:
        """Rebuild a trainer on ``table`` that continues exactly where this one stopped."""
        tr = Trainer(table, self.dag, self.metas, self.config)
        if len(self.arrays["state/permutation"]) != len(table):
            raise CheckpointError("table row count differs from the checkpointed run")
        for prefix, net in (("generator", tr.generator), ("critic", tr.critic)):
            for name, t in net.named_parameters().items():
                t.data = self.arrays[f"{prefix}/{name}"].copy()
        for prefix, opt in (("g_opt", tr.g_opt), ("d_opt", tr.d_opt)):
            cut = len(prefix) + 1
            sub = {k[cut:]: v for k, v in self.arrays.items() if k.startswith(prefix + "/")}
            opt.load_state_arrays(sub, self.info[f"{prefix}_steps"])
        tr.rng.bit_generator.state = self.info["rng"]
        st = tr.state
        st.permutation = self.arrays["state/permutation"].copy()
        st.cursor = self.info["cursor"]
        st.step = self.info["step"]
        st.critic_step = self.info["critic_step"]
        st.history = [dict(r) for r in self.info["history"]]
        return tr

    # ------------------------------------------------------------- I/O

    def to_bytes(self) -> bytes:
        entries, payloads, offset = [], [], 0
        for name in sorted(self.arrays):
            arr = np.asarray(self.arrays[name])
            dtype = "<i8" if arr.dtype.kind in "iu" else "<f8"
            raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
            entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            payloads.append(raw)
            offset += len(raw)
        header = {
            "format": "dagsynth-checkpoint",
            "version": VERSION,
            "config": self.config.to_dict(),
            "dag": self.dag.to_json(),
            "metas": [_meta_json(m) for m in self.metas],
            "info": self.info,
            "arrays": entries,
        }
        text = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
        return MAGIC + struct.pack("<IQ", VERSION, len(text)) + text + b"".join(payloads)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        if not blob.startswith(MAGIC):
            raise CheckpointError("not a checkpoint file (bad magic)")
        pos = len(MAGIC)
        version, size = struct.unpack_from("<IQ", blob, pos)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos += struct.calcsize("<IQ")
        header = json.loads(blob[pos : pos + size].decode("utf-8"))
        base = pos + size
        arrays = {}
        for e in header["arrays"]:
            start = base + e["offset"]
            raw = blob[start : start + e["nbytes"]]
            if len(raw) != e["nbytes"]:
                raise CheckpointError(f"truncated payload for {e['name']}")
            arrays[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
        metas = [_meta_from_json(m, arrays) for m in header["metas"]]
        dag = Dag(tuple(header["dag"]["nodes"]), tuple(tuple(e) for e in header["dag"]["edges"]))
        return cls(TrainConfig(**header["config"]), dag, metas, arrays, header["info"])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


def _meta_json(m: ColumnMeta) -> dict:
    out = {"name": m.name, "kind": m.kind}
    if m.kind == CATEGORICAL:
        out["categories"] = list(m.categories)
    else:
        out["delta"] = m.mixture.delta
    return out


def _meta_from_json(obj: dict, arrays: dict[str, np.ndarray]) -> ColumnMeta:
    if obj["kind"] == CATEGORICAL:
        return ColumnMeta(obj["name"], CATEGORICAL, categories=tuple(obj["categories"]))
    key = f"mixture/{obj['name']}"
    mixture = MixtureModel(
        arrays[f"{key}/means"], arrays[f"{key}/stds"], arrays[f"{key}/weights"], obj["delta"]
    )
    return ColumnMeta(obj["name"], obj["kind"], mixture=mixture)
