"""Request/response models for the HTTP surface.

Small payloads travel inline; datasets, embeddings and checkpoints are
referenced by filesystem paths, which the service and its clients share.
"""

from __future__ import annotations

from pydantic import BaseModel, Field


class AtomSummary(BaseModel):
    element: str
    charge: int
    hydrogens: int
    aromatic: bool
    in_ring: bool


class BondSummary(BaseModel):
    a: int
    b: int
    order: str
    in_ring: bool


class ParseRequest(BaseModel):
    smiles: str
    permissive: bool = False


class ParseResponse(BaseModel):
    smiles: str
    num_atoms: int
    num_bonds: int
    atoms: list[AtomSummary]
    bonds: list[BondSummary]
    scaffold_key: str
    warnings: list[str] = Field(default_factory=list)


class FingerprintRequest(BaseModel):
    smiles: list[str] | None = None
    molecules_csv: str | None = None
    radius: int = 2
    width: int = 2048
    permissive: bool = False


class FingerprintEntry(BaseModel):
    id: str
    hex: str
    set_count: int


class FingerprintResponse(BaseModel):
    radius: int
    width: int
    fingerprints: list[FingerprintEntry]


class SimilarityRequest(BaseModel):
    molecules_csv: str
    modality: str
    embeddings_csv: str | None = None  # graph-level external modalities
    peaks_jsonl: str | None = None  # nmr_peak
    out_csv: str | None = None
    include_self_pairs: bool = True
    tau1: float = 1e-5
    tau2: float = 10.0
    radius: int = 2
    width: int = 2048


class SimilarityResponse(BaseModel):
    modality: str
    level: str
    n: int
    ids: list[str]
    out_csv: str | None = None
    matrix: list[list[float]] | None = None  # inline only for small batches
    max_row_sum_error: float


class PretrainRequest(BaseModel):
    molecules_csv: str
    out_dir: str
    config_path: str | None = None
    embeddings_csv: dict[str, str] = Field(default_factory=dict)  # modality -> path
    peaks_jsonl: str | None = None
    modalities: list[str] | None = None  # override config
    include_early: bool = False
    seed: int | None = None  # override config


class PretrainModalitySummary(BaseModel):
    modality: str
    covered: int
    dropped: int
    final_loss: float
    checkpoint: str


class PretrainResponse(BaseModel):
    manifest_path: str
    seed: int
    modalities: list[PretrainModalitySummary]


class FinetuneRequest(BaseModel):
    molecules_csv: str
    mode: str
    out_dir: str
    checkpoint_dir: str | None = None
    modality: str | None = None  # for unimodal
    modalities: list[str] | None = None  # for intermediate/late
    config_path: str | None = None
    seed: int | None = None


class MetricModel(BaseModel):
    kind: str
    value: float
    per_task: dict[str, float]


class FinetuneResponse(BaseModel):
    manifest_path: str
    mode: str
    seed: int
    metric: MetricModel
    valid_metric: MetricModel
    best_epoch: int
    predictions_csv: str
    model_checkpoint: str
    contributions_csv: str | None = None


class EvaluateRequest(BaseModel):
    predictions_csv: str
    labels_csv: str
    metric: str  # roc_auc | rmse | pearson


class EvaluateResponse(BaseModel):
    metric: str
    value: float
    per_task: dict[str, float]
    n_rows: int


class SensitivityRequest(BaseModel):
    molecules_csv: str
    embeddings_csv: dict[str, str] = Field(default_factory=dict)
    peaks_jsonl: str | None = None
    include_fingerprint: bool = True
    radius: int = 2
    width: int = 2048
    ridge_lambda: float = 1e-6
    gain_threshold: float = 0.15
    out_csv: str | None = None


class SensitivityResponse(BaseModel):
    per_modality: dict[str, float]
    top1: float
    concat: float
    gain: float
    recommendation: str
    n_samples: int
    out_csv: str | None = None


class FuseReportRequest(BaseModel):
    molecules_csv: str
    model_checkpoint: str  # path stem of a late-mode fine-tuned model
    out_csv: str | None = None


class FuseReportResponse(BaseModel):
    out_csv: str | None = None
    rows: int
    max_decomposition_error: float
