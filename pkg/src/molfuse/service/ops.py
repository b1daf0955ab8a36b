"""Implementation behind the HTTP endpoints.

Every function takes a request model and returns a response model; errors
surface as ValueError (mapped to HTTP 400 by the app). File-valued fields
are resolved on the service's filesystem.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from .. import checkpoint as ckpt
from ..chem import parse_smiles
from ..config import load_config
from ..data import (
    Dataset,
    fingerprint_embeddings,
    format_float,
    load_embeddings_csv,
    load_molecules_csv,
    load_peaks_jsonl,
)
from ..fingerprint import morgan_fingerprint
from ..finetune import (
    finetune,
    finetune_metadata,
    late_contribution_report,
)
from ..manifest import build_manifest, write_manifest
from ..metrics import pearson, rmse, roc_auc
from ..pretrain import EARLY, pretrain
from ..scaffold import murcko_scaffold
from ..sensitivity import sensitivity_analysis
from ..similarity import GRAPH_MODALITIES, MODALITIES, target_matrix
from . import schemas as sm

_INLINE_MATRIX_LIMIT = 64


def parse_op(req: sm.ParseRequest) -> sm.ParseResponse:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mol = parse_smiles(req.smiles, permissive=req.permissive)
    return sm.ParseResponse(
        smiles=req.smiles,
        num_atoms=mol.num_atoms,
        num_bonds=mol.num_bonds,
        atoms=[sm.AtomSummary(element=a.element, charge=a.charge, hydrogens=a.hydrogens,
                              aromatic=a.aromatic, in_ring=a.in_ring) for a in mol.atoms],
        bonds=[sm.BondSummary(a=b.a, b=b.b, order=b.order, in_ring=b.in_ring)
               for b in mol.bonds],
        scaffold_key=murcko_scaffold(mol).canonical_key,
        warnings=[str(w.message) for w in caught],
    )


def fingerprint_op(req: sm.FingerprintRequest) -> sm.FingerprintResponse:
    if (req.smiles is None) == (req.molecules_csv is None):
        raise ValueError("give either smiles or molecules_csv (exactly one)")
    if req.smiles is not None:
        pairs = [(s, parse_smiles(s, permissive=req.permissive)) for s in req.smiles]
    else:
        ds = load_molecules_csv(req.molecules_csv, permissive=req.permissive)
        pairs = [(rec.mol_id, rec.molecule) for rec in ds.records]
    entries = []
    for name, mol in pairs:
        fp = morgan_fingerprint(mol, req.radius, req.width)
        entries.append(sm.FingerprintEntry(id=name, hex=fp.to_hex(), set_count=fp.set_count))
    return sm.FingerprintResponse(radius=req.radius, width=req.width, fingerprints=entries)


def _modality_embeddings(dataset: Dataset, modality: str,
                         embeddings_csv: str | None, peaks_jsonl: str | None,
                         radius: int, width: int):
    if modality == "fingerprint":
        return fingerprint_embeddings(dataset, radius, width)
    if modality == "nmr_peak":
        if not peaks_jsonl:
            raise ValueError("nmr_peak needs peaks_jsonl")
        return load_peaks_jsonl(peaks_jsonl)
    if modality in GRAPH_MODALITIES:
        if not embeddings_csv:
            raise ValueError(f"modality {modality!r} needs embeddings_csv")
        return load_embeddings_csv(embeddings_csv, modality)
    raise ValueError(f"unknown modality {modality!r}; expected one of {MODALITIES}")


def _align_to_dataset(dataset: Dataset, embeddings):
    """Keep one embedding per dataset molecule, in dataset order."""
    by_id = {e.molecule_id: e for e in embeddings}
    aligned = [by_id[r.mol_id] for r in dataset.records if r.mol_id in by_id]
    if len(aligned) < 2:
        raise ValueError("fewer than 2 dataset molecules carry this modality")
    return aligned


def write_matrix_csv(path: str | Path, ids, matrix: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *ids])
        for name, row in zip(ids, matrix):
            writer.writerow([name, *(format_float(v) for v in row)])


def similarity_op(req: sm.SimilarityRequest) -> sm.SimilarityResponse:
    dataset = load_molecules_csv(req.molecules_csv)
    embeddings = _modality_embeddings(dataset, req.modality, req.embeddings_csv,
                                      req.peaks_jsonl, req.radius, req.width)
    level = "atom" if req.modality == "nmr_peak" else "graph"
    if level == "graph":
        embeddings = _align_to_dataset(dataset, embeddings)
    matrix = target_matrix(embeddings, level=level,
                           include_self_pairs=req.include_self_pairs,
                           tau1=req.tau1, tau2=req.tau2)
    ids = [i if isinstance(i, str) else f"{i[0]}:{i[1]}" for i in matrix.ids]
    max_err = float(np.abs(matrix.t.sum(axis=1) - 1.0).max())
    out_csv = None
    if req.out_csv:
        write_matrix_csv(req.out_csv, ids, matrix.t)
        out_csv = str(req.out_csv)
    inline = None
    if len(ids) <= _INLINE_MATRIX_LIMIT:
        inline = [[float(v) for v in row] for row in matrix.t]
    return sm.SimilarityResponse(
        modality=req.modality, level=level, n=len(ids), ids=ids,
        out_csv=out_csv, matrix=inline, max_row_sum_error=max_err,
    )


def _gather_embeddings(dataset: Dataset, req, modalities) -> dict:
    out = {}
    for m in modalities:
        if m == EARLY:
            continue
        out[m] = _modality_embeddings(
            dataset, m, req.embeddings_csv.get(m), getattr(req, "peaks_jsonl", None),
            getattr(req, "radius", 2), getattr(req, "width", 2048),
        )
    return out


def pretrain_op(req: sm.PretrainRequest) -> sm.PretrainResponse:
    config = load_config(req.config_path)
    cfg = config.pretrain_config()
    if req.modalities:
        cfg = dc_replace(cfg, modalities=tuple(req.modalities))
    if req.seed is not None:
        cfg = dc_replace(cfg, seed=req.seed)

    dataset = load_molecules_csv(req.molecules_csv)
    embeddings = _gather_embeddings(dataset, req, cfg.modalities)
    out_dir = Path(req.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = pretrain(dataset, embeddings, cfg, out_dir=out_dir,
                       include_early=req.include_early)

    inputs = {"molecules": req.molecules_csv}
    inputs.update({f"embeddings_{m}": p for m, p in req.embeddings_csv.items()})
    if req.peaks_jsonl:
        inputs["peaks"] = req.peaks_jsonl
    if req.config_path:
        inputs["config"] = req.config_path
    summaries = [
        sm.PretrainModalitySummary(
            modality=name,
            covered=res.covered,
            dropped=res.dropped,
            final_loss=res.loss_history[-1],
            checkpoint=str(out_dir / name),
        )
        for name, res in results.items()
    ]
    manifest = build_manifest(
        kind="pretrain", seed=cfg.seed,
        config={"request": req.model_dump(), "pretrain": config.to_dict()},
        config_text=config.text, inputs=inputs,
        results={s.modality: {"final_loss": s.final_loss, "covered": s.covered,
                              "dropped": s.dropped} for s in summaries},
        outputs={s.modality: s.checkpoint for s in summaries},
    )
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    return sm.PretrainResponse(manifest_path=str(manifest_path), seed=cfg.seed,
                               modalities=summaries)


def _load_checkpoints(req: sm.FinetuneRequest) -> dict[str, dict[str, np.ndarray]] | None:
    if req.mode == "none":
        return None
    if not req.checkpoint_dir:
        raise ValueError(f"mode {req.mode!r} needs checkpoint_dir")
    ckpt_dir = Path(req.checkpoint_dir)

    def load_one(name: str):
        base = ckpt_dir / name
        if not base.with_suffix(".json").exists():
            raise ValueError(f"missing checkpoint for {name!r} under {ckpt_dir}")
        arrays, _ = ckpt.load_checkpoint(base)
        return arrays

    if req.mode == "unimodal":
        if not req.modality:
            raise ValueError("unimodal mode needs a modality")
        return {req.modality: load_one(req.modality)}
    if req.mode == "early":
        return {EARLY: load_one(EARLY)}
    names = req.modalities
    if not names:
        names = sorted(
            p.stem for p in ckpt_dir.glob("*.json")
            if p.stem in MODALITIES and p.with_suffix(".bin").exists()
        )
    if not names:
        raise ValueError(f"no modality checkpoints found under {ckpt_dir}")
    return {name: load_one(name) for name in names}


def write_predictions_csv(path: str | Path, predictions, task_names) -> None:
    multi = len(task_names) > 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "score", "task"] if multi else ["id", "score"])
        for mol_id, task, score in predictions:
            row = [mol_id, format_float(score)]
            if multi:
                row.append(task)
            writer.writerow(row)


def write_contributions_csv(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "modality", "w", "p", "w*p"])
        for r in rows:
            writer.writerow([r.mol_id, r.modality, format_float(r.gate),
                             format_float(r.prediction), format_float(r.contribution)])


def finetune_op(req: sm.FinetuneRequest) -> sm.FinetuneResponse:
    config = load_config(req.config_path)
    cfg = config.finetune_config()
    if req.seed is not None:
        cfg = dc_replace(cfg, seed=req.seed)
    dataset = load_molecules_csv(req.molecules_csv)
    checkpoints = _load_checkpoints(req)
    result = finetune(dataset, req.mode, checkpoints, cfg)

    out_dir = Path(req.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictions_csv = out_dir / "predictions.csv"
    write_predictions_csv(predictions_csv, result.predictions, dataset.task_names)
    model_base = out_dir / "model"
    ckpt.save_checkpoint(model_base, result.store.arrays,
                         metadata=finetune_metadata(result, dataset, cfg, checkpoints))
    contributions_csv = None
    if result.late_report is not None:
        contributions_csv = out_dir / "contributions.csv"
        write_contributions_csv(contributions_csv, result.late_report)

    inputs = {"molecules": req.molecules_csv}
    if req.config_path:
        inputs["config"] = req.config_path
    manifest = build_manifest(
        kind="finetune", seed=cfg.seed,
        config={"request": req.model_dump(), "finetune": config.to_dict()},
        config_text=config.text, inputs=inputs,
        results={
            "metric": {"kind": result.metric.kind, "value": result.metric.value,
                       "per_task": result.metric.per_task},
            "valid_metric": {"kind": result.valid_metric.kind,
                             "value": result.valid_metric.value},
            "best_epoch": result.best_epoch,
            "split_counts": result.split.counts(),
        },
        outputs={
            "predictions": str(predictions_csv),
            "model": str(model_base),
            **({"contributions": str(contributions_csv)} if contributions_csv else {}),
        },
    )
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    return sm.FinetuneResponse(
        manifest_path=str(manifest_path),
        mode=req.mode,
        seed=cfg.seed,
        metric=sm.MetricModel(kind=result.metric.kind, value=result.metric.value,
                              per_task=result.metric.per_task),
        valid_metric=sm.MetricModel(kind=result.valid_metric.kind,
                                    value=result.valid_metric.value,
                                    per_task=result.valid_metric.per_task),
        best_epoch=result.best_epoch,
        predictions_csv=str(predictions_csv),
        model_checkpoint=str(model_base),
        contributions_csv=str(contributions_csv) if contributions_csv else None,
    )


def load_predictions_csv(path: str | Path) -> list[tuple[str, str | None, float]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (["id", "score"], ["id", "score", "task"]):
            raise ValueError(f"{path}: expected header 'id,score[,task]'")
        has_task = len(header) == 3
        for row in reader:
            if not row:
                continue
            out.append((row[0], row[2] if has_task else None, float(row[1])))
    return out


def evaluate_op(req: sm.EvaluateRequest) -> sm.EvaluateResponse:
    if req.metric not in ("roc_auc", "rmse", "pearson"):
        raise ValueError(f"unknown metric {req.metric!r}")
    predictions = load_predictions_csv(req.predictions_csv)
    dataset = load_molecules_csv(req.labels_csv)
    labels = dataset.labels_array()
    row_of = {mol_id: i for i, mol_id in enumerate(dataset.ids())}
    task_of = {task: j for j, task in enumerate(dataset.task_names)}

    per_task_scores: dict[str, list[float]] = {}
    per_task_labels: dict[str, list[float]] = {}
    for mol_id, task, score in predictions:
        task = task if task is not None else dataset.task_names[0]
        if mol_id not in row_of:
            raise ValueError(f"prediction for unknown molecule {mol_id!r}")
        if task not in task_of:
            raise ValueError(f"prediction for unknown task {task!r}")
        label = labels[row_of[mol_id], task_of[task]]
        if np.isnan(label):
            continue
        per_task_scores.setdefault(task, []).append(score)
        per_task_labels.setdefault(task, []).append(float(label))

    fn = {"roc_auc": roc_auc, "rmse": rmse, "pearson": pearson}[req.metric]
    per_task = {
        task: fn(np.asarray(per_task_scores[task]), np.asarray(per_task_labels[task]))
        for task in per_task_scores
    }
    if not per_task:
        raise ValueError("no prediction matches a labeled molecule")
    n_rows = sum(len(v) for v in per_task_scores.values())
    return sm.EvaluateResponse(metric=req.metric,
                               value=float(np.mean(list(per_task.values()))),
                               per_task=per_task, n_rows=n_rows)


def sensitivity_op(req: sm.SensitivityRequest) -> sm.SensitivityResponse:
    from ..data import peak_histogram_vectors

    dataset = load_molecules_csv(req.molecules_csv)
    matrices: dict[str, np.ndarray] = {}
    coverage: list[set[str]] = []
    per_modality_vectors: dict[str, dict[str, np.ndarray]] = {}
    for modality, path in req.embeddings_csv.items():
        embs = load_embeddings_csv(path, modality)
        per_modality_vectors[modality] = {e.molecule_id: e.vector for e in embs}
        coverage.append(set(per_modality_vectors[modality]))
    if req.include_fingerprint:
        embs = fingerprint_embeddings(dataset, req.radius, req.width)
        per_modality_vectors["fingerprint"] = {e.molecule_id: e.vector for e in embs}
        coverage.append(set(per_modality_vectors["fingerprint"]))
    if req.peaks_jsonl:
        peak_embs = load_peaks_jsonl(req.peaks_jsonl)
        per_modality_vectors["nmr_peak"] = peak_histogram_vectors(peak_embs)
        coverage.append(set(per_modality_vectors["nmr_peak"]))
    if not per_modality_vectors:
        raise ValueError("no modality embeddings given")

    common = set(dataset.ids())
    for cov in coverage:
        common &= cov
    keep = [i for i, mol_id in enumerate(dataset.ids()) if mol_id in common]
    if len(keep) < 2:
        raise ValueError("fewer than 2 molecules carry every modality")
    ids = dataset.ids()
    labels = dataset.labels_array()[keep]
    for modality, vectors in per_modality_vectors.items():
        matrices[modality] = np.stack([vectors[ids[i]] for i in keep])

    report = sensitivity_analysis(labels, matrices,
                                  ridge_lambda=req.ridge_lambda,
                                  gain_threshold=req.gain_threshold)
    out_csv = None
    if req.out_csv:
        with open(req.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            names = list(report.per_modality)
            writer.writerow([*names, "top1", "concat", "gain", "strategy"])
            writer.writerow([
                *(format_float(report.per_modality[m]) for m in names),
                format_float(report.top1), format_float(report.concat),
                format_float(report.gain), report.recommendation,
            ])
        out_csv = str(req.out_csv)
    return sm.SensitivityResponse(
        per_modality=report.per_modality, top1=report.top1, concat=report.concat,
        gain=report.gain, recommendation=report.recommendation,
        n_samples=len(keep), out_csv=out_csv,
    )


def fuse_report_op(req: sm.FuseReportRequest) -> sm.FuseReportResponse:
    dataset = load_molecules_csv(req.molecules_csv)
    arrays, metadata = ckpt.load_checkpoint(req.model_checkpoint)
    rows, max_err = late_contribution_report(dataset, arrays, metadata)
    out_csv = None
    if req.out_csv:
        write_contributions_csv(req.out_csv, rows)
        out_csv = str(req.out_csv)
    return sm.FuseReportResponse(out_csv=out_csv, rows=len(rows),
                                 max_decomposition_error=max_err)
