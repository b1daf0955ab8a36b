"""Plain-text run configuration.

The format is a strict key = value file with one [section] per subsystem
and # comments. Unknown sections or keys are rejected outright, and the
verbatim text is echoed into every run manifest. Environment variables are
deliberately not consulted: all state flows through the config file and
command-line flags.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .encoders import EncoderConfig
from .finetune import FinetuneConfig
from .fusion import FusionWeights
from .pretrain import PretrainConfig
from .similarity import MODALITIES

_BOOLS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}

#: section -> key -> value kind
SCHEMA: dict[str, dict[str, str]] = {
    "run": {"seed": "int"},
    "chem": {"permissive": "bool"},
    "fingerprint": {"radius": "int", "width": "int"},
    "encoder": {
        "kind": "str", "depth": "int", "hidden_dim": "int",
        "embed_dim": "int", "projection_dim": "int", "readout": "str",
    },
    "similarity": {
        "include_self_pairs": "bool", "tau1": "float", "tau2": "float",
        "atom_chunk": "int",
    },
    "pretrain": {
        "learning_rate": "float", "epochs": "int", "batch_size": "int",
        "modalities": "str_list", "loss": "str",
    },
    "finetune": {
        "epochs": "int", "lr_encoder": "float", "lr_head": "float",
        "batch_size": "int", "patience": "int", "freeze_encoder": "bool",
        "task_type": "str", "ratios": "float_list",
    },
    "fusion": {m: "float" for m in MODALITIES},
    "sensitivity": {"ridge_lambda": "float", "gain_threshold": "float"},
}


class ConfigError(ValueError):
    pass


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in _BOOLS:
                raise ValueError(raw)
            return _BOOLS[raw.lower()]
        if kind == "str":
            return raw.strip("\"'")
        if kind == "str_list":
            return tuple(part.strip().strip("\"'") for part in raw.split(",") if part.strip())
        if kind == "float_list":
            return tuple(float(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from exc
    raise ConfigError(f"{where}: unknown value kind {kind}")


@dataclass
class RunConfig:
    """Parsed configuration plus the verbatim source text."""

    values: dict[str, dict[str, object]] = field(default_factory=dict)
    text: str = ""

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values.setdefault(section, {})[key] = value

    def to_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}

    # ------------------------------------------------------------------
    # typed builders
    # ------------------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.get("run", "seed", 0))

    def encoder_config(self) -> EncoderConfig:
        base = EncoderConfig(kind=str(self.get("encoder", "kind", "gin")), hidden_dim=128)
        return EncoderConfig(
            kind=base.kind,
            depth=int(self.get("encoder", "depth", base.depth)),
            hidden_dim=int(self.get("encoder", "hidden_dim",
                                    300 if base.kind == "dmpnn" else 128)),
            embed_dim=int(self.get("encoder", "embed_dim", base.embed_dim)),
            projection_dim=int(self.get("encoder", "projection_dim", base.projection_dim)),
            readout=str(self.get("encoder", "readout", base.readout)),
        )

    def fusion_weights(self, modalities=None) -> FusionWeights | None:
        section = self.values.get("fusion")
        if not section:
            return FusionWeights.uniform(modalities) if modalities else None
        return FusionWeights({k: float(v) for k, v in section.items()})

    def pretrain_config(self) -> PretrainConfig:
        modalities = self.get("pretrain", "modalities")
        kwargs = dict(
            learning_rate=float(self.get("pretrain", "learning_rate", 0.001)),
            epochs=int(self.get("pretrain", "epochs", 200)),
            batch_size=int(self.get("pretrain", "batch_size", 256)),
            seed=self.seed,
            encoder=self.encoder_config(),
            loss=str(self.get("pretrain", "loss", "alignment")),
            include_self_pairs=bool(self.get("similarity", "include_self_pairs", True)),
            tau1=float(self.get("similarity", "tau1", 1e-5)),
            tau2=float(self.get("similarity", "tau2", 10.0)),
        )
        if modalities:
            kwargs["modalities"] = tuple(modalities)
        cfg = PretrainConfig(**kwargs)
        weights = self.fusion_weights()
        if weights is not None:
            cfg = PretrainConfig(**{**kwargs, "early_weights": weights})
        return cfg

    def finetune_config(self) -> FinetuneConfig:
        return FinetuneConfig(
            epochs=int(self.get("finetune", "epochs", 50)),
            lr_encoder=float(self.get("finetune", "lr_encoder", 1e-4)),
            lr_head=float(self.get("finetune", "lr_head", 1e-3)),
            batch_size=int(self.get("finetune", "batch_size", 64)),
            patience=int(self.get("finetune", "patience", 10)),
            seed=self.seed,
            ratios=tuple(self.get("finetune", "ratios", (0.8, 0.1, 0.1))),
            freeze_encoder=bool(self.get("finetune", "freeze_encoder", False)),
            task_type=str(self.get("finetune", "task_type", "auto")),
            encoder=self.encoder_config(),
        )


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict[str, object]] = {}
    section: str | None = None
    for line_num, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {line_num}: unknown section [{section}]")
            values.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_num}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"line {line_num}: key outside any [section]")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"line {line_num}: unknown key {key!r} in [{section}]")
        values[section][key] = _parse_value(SCHEMA[section][key], raw_value,
                                            f"line {line_num}")
    return RunConfig(values, text)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig({}, "")
    return parse_config(Path(path).read_text())
