"""Fine-tuning on a downstream task under the five initialization/fusion
modes.

none        fresh encoder, readout head
unimodal    encoder initialized from one modality's pretraining checkpoint
early       encoder initialized from the early-fused checkpoint
intermediate  one branch per checkpoint, concat + MLP before the head
late        one branch per checkpoint, per-branch gate and readout,
            prediction = sum of gate * branch prediction

Binary tasks train with logistic loss on logits (the sigmoid is applied
after late fusion's weighted sum) and report ROC-AUC averaged over tasks
with labels present; regression trains with squared loss and reports RMSE.
The checkpoint with the best validation metric is the one evaluated on
test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .data import Dataset
from .encoders import EncoderConfig, encode, init_encoder_params, init_mlp_params, mlp_head
from .featurize import pack_graphs, featurize
from .fusion import (
    LateFusionHead,
    LateFusionResult,
    init_intermediate_params,
    init_late_fusion_params,
    intermediate_fuse,
    late_fuse,
)
from .metrics import pearson, rmse, roc_auc
from .optim import Adam, ParamStore
from .split import SplitAssignment, scaffold_split

MODES = ("none", "unimodal", "early", "intermediate", "late")


@dataclass(frozen=True)
class Metric:
    kind: str  # roc_auc | rmse | pearson
    value: float
    per_task: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "roc_auc" and not 0.0 <= self.value <= 1.0:
            raise ValueError("roc_auc out of [0, 1]")
        if self.kind == "rmse" and self.value < 0:
            raise ValueError("rmse must be non-negative")
        if self.kind == "pearson" and not -1.0 <= self.value <= 1.0:
            raise ValueError("pearson out of [-1, 1]")

    def better_than(self, other: "Metric | None") -> bool:
        if other is None:
            return True
        return self.value > other.value if self.kind == "roc_auc" else self.value < other.value


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 50
    lr_encoder: float = 1e-4
    lr_head: float = 1e-3
    batch_size: int = 64
    patience: int = 10
    seed: int = 0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    freeze_encoder: bool = False
    task_type: str = "auto"  # auto | classification | regression
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(kind="gin", hidden_dim=128))

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.patience < 0:
            raise ValueError("hyperparameters must be positive")
        if self.task_type not in ("auto", "classification", "regression"):
            raise ValueError(f"unknown task_type {self.task_type!r}")


@dataclass
class LateContribution:
    mol_id: str
    modality: str
    gate: float
    prediction: float

    @property
    def contribution(self) -> float:
        return self.gate * self.prediction


@dataclass
class FinetuneResult:
    mode: str
    metric: Metric
    valid_metric: Metric
    predictions: list[tuple[str, str, float]]  # (mol_id, task, score) on test
    split: SplitAssignment
    history: list[float]
    best_epoch: int
    store: ParamStore
    late_report: list[LateContribution] | None = None


def infer_task_type(labels: np.ndarray) -> str:
    present = labels[~np.isnan(labels)]
    return "classification" if np.isin(present, (0.0, 1.0)).all() else "regression"


class _Model:
    """Assembles parameters and the forward pass for one finetune mode."""

    def __init__(self, mode: str, cfg: FinetuneConfig, n_tasks: int,
                 checkpoints: dict[str, dict[str, np.ndarray]] | None,
                 rng: np.random.Generator):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.cfg = cfg
        self.n_tasks = n_tasks
        embed = cfg.encoder.embed_dim
        self.store = ParamStore()
        self.branches: list[str] = []

        if mode in ("none", "unimodal", "early"):
            init_encoder_params(cfg.encoder, rng, self.store)
            if mode != "none":
                if not checkpoints or len(checkpoints) != 1:
                    raise ValueError(f"{mode} mode needs exactly one checkpoint")
                self._load("encoder.", next(iter(checkpoints.values())))
            init_mlp_params(self.store, "head.", [embed, embed, n_tasks], rng)
        else:
            if not checkpoints:
                raise ValueError(f"{mode} mode needs modality checkpoints")
            self.branches = list(checkpoints)
            for name in self.branches:
                init_encoder_params(cfg.encoder, rng, self.store, prefix=f"branch.{name}.")
                self._load(f"branch.{name}.", checkpoints[name])
            if mode == "intermediate":
                init_intermediate_params(self.store, len(self.branches), embed, rng)
                init_mlp_params(self.store, "head.", [embed, embed, n_tasks], rng)
            else:
                self.late_head = LateFusionHead(tuple(self.branches), embed, n_tasks)
                init_late_fusion_params(self.store, self.late_head, rng)

    def _load(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        """Copy pretrained values over matching freshly initialized slots."""
        loaded = 0
        for name, value in arrays.items():
            if not name.startswith("encoder."):
                continue
            target = prefix + name[len("encoder."):]
            if target in self.store:
                if self.store[target].shape != value.shape:
                    raise ValueError(
                        f"checkpoint shape {value.shape} does not fit {target} "
                        f"{self.store[target].shape}; encoder configs differ"
                    )
                self.store.arrays[target] = value.copy()
                loaded += 1
        if loaded == 0:
            raise ValueError("checkpoint shares no parameters with this encoder config")

    def encoder_prefixes(self) -> list[str]:
        if self.mode in ("none", "unimodal", "early"):
            return ["encoder."]
        return [f"branch.{name}." for name in self.branches]

    def forward(self, batch, tape: Tape):
        return model_forward(self.mode, self.store, self.cfg.encoder,
                             self.branches, self.n_tasks, batch, tape)


def model_forward(mode: str, store: ParamStore, encoder_cfg: EncoderConfig,
                  branches: list[str], n_tasks: int, batch, tape: Tape):
    """Forward pass for any finetune mode.

    Returns (logits_or_values [N, n_tasks], late fusion result or None).
    """
    embed = encoder_cfg.embed_dim
    if mode in ("none", "unimodal", "early"):
        out = encode(batch, store, encoder_cfg, tape)
        return mlp_head(out.graph_embedding, store, "head.",
                        [embed, embed, n_tasks], tape), None
    features = {
        name: encode(batch, store, encoder_cfg, tape, prefix=f"branch.{name}.").graph_embedding
        for name in branches
    }
    if mode == "intermediate":
        fused = intermediate_fuse([features[n] for n in branches], store, tape)
        return mlp_head(fused, store, "head.", [embed, embed, n_tasks], tape), None
    head = LateFusionHead(tuple(branches), embed, n_tasks)
    result = late_fuse(features, store, tape, head)
    return result.prediction, result


def _masked_logistic_loss(logits, labels: np.ndarray, mask: np.ndarray):
    y = ad.constant(np.nan_to_num(labels, nan=0.0))
    m = ad.constant(mask.astype(np.float64))
    elem = ad.sub(ad.softplus(logits), ad.mul(logits, y))
    return ad.scale(ad.reduce_sum(ad.mul(elem, m)), 1.0 / max(mask.sum(), 1))


def _masked_squared_loss(values, labels: np.ndarray, mask: np.ndarray):
    y = ad.constant(np.nan_to_num(labels, nan=0.0))
    m = ad.constant(mask.astype(np.float64))
    diff = ad.sub(values, y)
    return ad.scale(ad.reduce_sum(ad.mul(ad.mul(diff, diff), m)), 1.0 / max(mask.sum(), 1))


def _scores(raw: np.ndarray, task_type: str) -> np.ndarray:
    if task_type == "classification":
        return 1.0 / (1.0 + np.exp(-np.clip(raw, -500, 500)))
    return raw


def _evaluate(raw: np.ndarray, labels: np.ndarray, task_type: str,
              task_names: tuple[str, ...]) -> Metric:
    scores = _scores(raw, task_type)
    per_task: dict[str, float] = {}
    for j, task in enumerate(task_names):
        mask = ~np.isnan(labels[:, j])
        if not mask.any():
            continue
        if task_type == "classification":
            present = labels[mask, j]
            if present.min() == present.max():
                warnings.warn(f"task {task!r} has a single class in this split; skipped",
                              stacklevel=2)
                continue
            per_task[task] = roc_auc(scores[mask, j], labels[mask, j])
        else:
            per_task[task] = rmse(scores[mask, j], labels[mask, j])
    if not per_task:
        raise ValueError("no task is evaluable on this split")
    kind = "roc_auc" if task_type == "classification" else "rmse"
    return Metric(kind, float(np.mean(list(per_task.values()))), per_task)


def finetune(dataset: Dataset, mode: str,
             checkpoints: dict[str, dict[str, np.ndarray]] | None,
             cfg: FinetuneConfig,
             split: SplitAssignment | None = None) -> FinetuneResult:
    labels = dataset.labels_array()
    task_type = cfg.task_type if cfg.task_type != "auto" else infer_task_type(labels)
    split = split or scaffold_split(dataset.scaffold_keys(), cfg.ratios, cfg.seed)
    train_idx = split.indices("train")
    valid_idx = split.indices("valid")
    test_idx = split.indices("test")
    if not train_idx or not valid_idx or not test_idx:
        raise ValueError(f"split left a partition empty: {split.counts()}")

    seqs = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng = np.random.default_rng(seqs[0])
    shuffle_rng = np.random.default_rng(seqs[1])
    model = _Model(mode, cfg, len(dataset.task_names), checkpoints, init_rng)

    graphs = [featurize(m) for m in dataset.molecules()]

    lr_overrides = {}
    for prefix in model.encoder_prefixes():
        lr_overrides[prefix] = 0.0 if cfg.freeze_encoder else cfg.lr_encoder
    adam = Adam(model.store, lr=cfg.lr_head, lr_overrides=lr_overrides)

    def predict(indices) -> np.ndarray:
        batch = pack_graphs([graphs[i] for i in indices])
        raw, _ = model.forward(batch, Tape())
        return raw.values

    history: list[float] = []
    best: Metric | None = None
    best_store: ParamStore | None = None
    best_epoch = -1
    stale = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_idx))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            chosen = [train_idx[k] for k in order[start : start + cfg.batch_size]]
            batch = pack_graphs([graphs[i] for i in chosen])
            batch_labels = labels[chosen]
            mask = ~np.isnan(batch_labels)
            if not mask.any():
                continue
            tape = Tape()
            raw, _ = model.forward(batch, tape)
            if task_type == "classification":
                loss = _masked_logistic_loss(raw, batch_labels, mask)
            else:
                loss = _masked_squared_loss(raw, batch_labels, mask)
            grads = backward(loss)
            adam.step(grads)
            epoch_losses.append(float(loss.values))
        history.append(float(np.mean(epoch_losses)) if epoch_losses else float("nan"))

        valid_metric = _evaluate(predict(valid_idx), labels[valid_idx], task_type, dataset.task_names)
        if valid_metric.better_than(best):
            best = valid_metric
            best_store = model.store.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > cfg.patience:
                break

    model.store = best_store if best_store is not None else model.store

    test_batch = pack_graphs([graphs[i] for i in test_idx])
    raw, late_result = model.forward(test_batch, Tape())
    test_metric = _evaluate(raw.values, labels[test_idx], task_type, dataset.task_names)
    scores = _scores(raw.values, task_type)

    ids = dataset.ids()
    predictions = [
        (ids[i], task, float(scores[row, j]))
        for row, i in enumerate(test_idx)
        for j, task in enumerate(dataset.task_names)
    ]
    late_report = None
    if late_result is not None:
        late_report = _late_report(late_result, [ids[i] for i in test_idx])

    return FinetuneResult(
        mode=mode,
        metric=test_metric,
        valid_metric=best,
        predictions=predictions,
        split=split,
        history=history,
        best_epoch=best_epoch,
        store=model.store,
        late_report=late_report,
    )


def _late_report(result: LateFusionResult, mol_ids: list[str]) -> list[LateContribution]:
    rows = []
    for name, gate in result.gates.items():
        preds = result.branch_predictions[name].values
        for row, mol_id in enumerate(mol_ids):
            rows.append(LateContribution(
                mol_id=mol_id,
                modality=name,
                gate=float(gate.values[row, 0]),
                prediction=float(preds[row].mean()),
            ))
    return rows


def finetune_metadata(result: FinetuneResult, dataset: Dataset,
                      cfg: FinetuneConfig, checkpoints) -> dict:
    """Metadata stored next to a fine-tuned model so it can be rebuilt."""
    labels = dataset.labels_array()
    return {
        "mode": result.mode,
        "encoder": cfg.encoder.to_dict(),
        "branches": list(checkpoints) if checkpoints else [],
        "task_names": list(dataset.task_names),
        "task_type": cfg.task_type if cfg.task_type != "auto" else infer_task_type(labels),
        "seed": cfg.seed,
        "ratios": list(cfg.ratios),
    }


def late_contribution_report(dataset: Dataset, arrays: dict[str, np.ndarray],
                             metadata: dict) -> tuple[list[LateContribution], float]:
    """Rebuild a late-fusion model from its checkpoint and report per-branch
    gates, predictions and contributions on the test split.

    Also returns the largest row-wise deviation between the model's final
    prediction and the sum of reported contributions (in exact branch
    order), which is zero up to float associativity by construction.
    """
    if metadata.get("mode") != "late":
        raise ValueError(f"model was fine-tuned in mode {metadata.get('mode')!r}, not late")
    encoder_cfg = EncoderConfig.from_dict(metadata["encoder"])
    branches = list(metadata["branches"])
    n_tasks = len(metadata["task_names"])
    store = ParamStore(arrays)
    split = scaffold_split(dataset.scaffold_keys(), tuple(metadata["ratios"]), metadata["seed"])
    test_idx = split.indices("test")
    batch = pack_graphs([featurize(dataset.records[i].molecule) for i in test_idx])
    raw, result = model_forward("late", store, encoder_cfg, branches, n_tasks, batch, Tape())
    ids = dataset.ids()
    rows = _late_report(result, [ids[i] for i in test_idx])

    recomposed = np.zeros_like(raw.values)
    for name in branches:
        recomposed += result.gates[name].values * result.branch_predictions[name].values
    max_err = float(np.abs(recomposed - raw.values).max())
    return rows, max_err
