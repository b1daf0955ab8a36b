"""Dataset ingestion and desk-scale synthetic data.

File formats:
  molecules      CSV ``id,smiles,<label columns...>``; empty cells = missing
  embeddings     CSV ``id,dim,values...`` (one modality per file)
  atom peaks     JSON lines ``{"id": ..., "peaks": {"<atom index>": ppm}}``

The synthetic corpus samples molecules from a small grammar over chains and
rings, plants a binary property determined by fingerprint bits, and can
derive per-modality embeddings as noisy linear images of those bits with a
controllable relevance knob. That makes the whole pretrain/finetune
pipeline exercisable without any external encoder artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chem import Molecule, parse_smiles
from .fingerprint import morgan_fingerprint
from .scaffold import murcko_scaffold
from .similarity import ModalityEmbedding

FLOAT_FORMAT = ".9g"


def format_float(v: float) -> str:
    return format(float(v), FLOAT_FORMAT)


@dataclass(frozen=True)
class MoleculeRecord:
    mol_id: str
    smiles: str
    molecule: Molecule
    labels: dict[str, float | None]


@dataclass(frozen=True)
class Dataset:
    records: tuple[MoleculeRecord, ...]
    task_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.records)

    def ids(self) -> list[str]:
        return [r.mol_id for r in self.records]

    def molecules(self) -> list[Molecule]:
        return [r.molecule for r in self.records]

    def labels_array(self) -> np.ndarray:
        """[N, n_tasks] float array with NaN for missing labels."""
        out = np.full((len(self.records), len(self.task_names)), np.nan)
        for i, rec in enumerate(self.records):
            for j, task in enumerate(self.task_names):
                v = rec.labels.get(task)
                if v is not None:
                    out[i, j] = v
        return out

    def scaffold_keys(self) -> list[str]:
        return [murcko_scaffold(r.molecule).canonical_key for r in self.records]

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.task_names)


def load_molecules_csv(path: str | Path, permissive: bool = False) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2 or header[0] != "id" or header[1] != "smiles":
            raise ValueError(f"{path}: expected header starting with 'id,smiles'")
        tasks = tuple(header[2:])
        records = []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{row_num}: expected {len(header)} columns")
            labels = {
                task: (float(cell) if cell.strip() != "" else None)
                for task, cell in zip(tasks, row[2:])
            }
            records.append(MoleculeRecord(
                mol_id=row[0],
                smiles=row[1],
                molecule=parse_smiles(row[1], permissive=permissive),
                labels=labels,
            ))
    return Dataset(tuple(records), tasks)


def write_molecules_csv(path: str | Path, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "smiles", *dataset.task_names])
        for rec in dataset.records:
            cells = [
                "" if rec.labels.get(t) is None else format_float(rec.labels[t])
                for t in dataset.task_names
            ]
            writer.writerow([rec.mol_id, rec.smiles, *cells])


def load_embeddings_csv(path: str | Path, modality: str) -> list[ModalityEmbedding]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or header[1] != "dim":
            raise ValueError(f"{path}: expected header 'id,dim,values...'")
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            dim = int(row[1])
            values = np.array([float(v) for v in row[2:]], dtype=np.float64)
            if values.size != dim:
                raise ValueError(f"{path}:{row_num}: dim {dim} but {values.size} values")
            out.append(ModalityEmbedding(modality=modality, molecule_id=row[0], vector=values))
    return out


def write_embeddings_csv(path: str | Path, embeddings: list[ModalityEmbedding]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "dim", "values..."])
        for emb in embeddings:
            writer.writerow([
                emb.molecule_id, emb.vector.size,
                *(format_float(v) for v in emb.vector),
            ])


def load_peaks_jsonl(path: str | Path) -> list[ModalityEmbedding]:
    out = []
    with open(path) as fh:
        for line_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                peaks = {int(k): float(v) for k, v in obj["peaks"].items()}
                mol_id = str(obj["id"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_num}: malformed peak record") from exc
            out.append(ModalityEmbedding(modality="nmr_peak", molecule_id=mol_id, peaks=peaks))
    return out


def write_peaks_jsonl(path: str | Path, embeddings: list[ModalityEmbedding]) -> None:
    with open(path, "w") as fh:
        for emb in embeddings:
            fh.write(json.dumps({
                "id": emb.molecule_id,
                "peaks": {str(k): emb.peaks[k] for k in sorted(emb.peaks)},
            }))
            fh.write("\n")


# ----------------------------------------------------------------------
# synthetic corpus
# ----------------------------------------------------------------------

_TAILS = (
    "C", "CC", "CCC", "CCCC", "CCO", "CCN", "CO", "CN", "CCS",
    "CC(C)C", "C(C)C", "CC(C)O", "CCCN", "CC(N)C",
)


def _random_ring(rng: np.random.Generator) -> str:
    """One ring as a SMILES fragment; substituents attach after it."""
    # Heteroatoms never land on the first or last ring atom: the closing
    # atom takes the substituent bond and must tolerate the extra valence.
    family = rng.random()
    if family < 0.45:
        # aromatic 6-ring with up to two pyridine-like nitrogens
        atoms = ["c"] * 6
        for pos in rng.choice(4, size=int(rng.integers(0, 3)), replace=False):
            atoms[1 + int(pos)] = "n"
    elif family < 0.65:
        # aromatic 5-ring with one heteroatom
        atoms = ["c"] * 5
        atoms[1 + int(rng.integers(0, 3))] = str(rng.choice(("o", "s", "[nH]")))
    else:
        # aliphatic ring of size 5 or 6 with up to one heteroatom
        size = int(rng.choice((5, 6)))
        atoms = ["C"] * size
        if rng.random() < 0.5:
            atoms[1 + int(rng.integers(0, size - 2))] = str(rng.choice(("N", "O", "S")))
    return atoms[0] + "1" + "".join(atoms[1:]) + "1"


def random_smiles(rng: np.random.Generator) -> str:
    """Sample one molecule from the chain/ring grammar."""
    if rng.random() < 0.15:
        return str(rng.choice(_TAILS))
    parts = [_random_ring(rng)]
    if rng.random() < 0.25:  # second ring joined by a short linker
        parts.append(str(rng.choice(("C", "CC", "CO"))))
        parts.append(_random_ring(rng))
    if rng.random() < 0.75:
        parts.append(str(rng.choice(_TAILS)))
    return "".join(parts)


def synthetic_corpus(n: int, seed: int, label_task: str = "activity",
                     fp_width: int = 512) -> Dataset:
    """Random molecules with a binary property planted on fingerprint bits.

    The label thresholds a random +-1-weighted sum over the fingerprint
    bits that vary within the corpus, cut at the median so classes stay
    near-balanced.
    """
    rng = np.random.default_rng(seed)
    smiles: list[str] = []
    seen_count: dict[str, int] = {}
    while len(smiles) < n:
        s = random_smiles(rng)
        # Allow duplicates but cap them, so scaffolds repeat without the
        # corpus collapsing onto a few strings.
        if seen_count.get(s, 0) >= 3:
            continue
        seen_count[s] = seen_count.get(s, 0) + 1
        smiles.append(s)

    molecules = [parse_smiles(s) for s in smiles]
    bits = np.stack([
        morgan_fingerprint(m, radius=2, width=fp_width).bits.astype(np.float64)
        for m in molecules
    ])
    varying = np.flatnonzero(bits.std(axis=0) > 0)
    weights = np.zeros(fp_width)
    weights[varying] = rng.choice((-1.0, 1.0), size=varying.size)
    scores = bits @ weights
    threshold = np.median(scores)
    labels = (scores > threshold).astype(np.float64)

    records = tuple(
        MoleculeRecord(
            mol_id=f"m{i:04d}",
            smiles=s,
            molecule=m,
            labels={label_task: float(labels[i])},
        )
        for i, (s, m) in enumerate(zip(smiles, molecules))
    )
    return Dataset(records, (label_task,))


def fingerprint_embeddings(dataset: Dataset, radius: int = 2,
                           width: int = 2048) -> list[ModalityEmbedding]:
    """The fingerprint modality: bit vectors computed from structure."""
    return [
        ModalityEmbedding(
            modality="fingerprint",
            molecule_id=rec.mol_id,
            vector=morgan_fingerprint(rec.molecule, radius, width).bits.astype(np.float64),
        )
        for rec in dataset.records
    ]


def synthetic_modality_embeddings(dataset: Dataset, modality: str, dim: int,
                                  relevance: float, seed: int,
                                  fp_width: int = 512) -> list[ModalityEmbedding]:
    """Embeddings as noisy linear images of fingerprint bits.

    ``relevance`` in [0, 1] blends the structured image (1.0) with pure
    noise (0.0).
    """
    if not 0.0 <= relevance <= 1.0:
        raise ValueError("relevance must be in [0, 1]")
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(fp_width, dim)) / np.sqrt(fp_width)
    out = []
    for rec in dataset.records:
        bits = morgan_fingerprint(rec.molecule, 2, fp_width).bits.astype(np.float64)
        structured = bits @ mix
        noise = rng.normal(size=dim)
        vec = relevance * structured + (1.0 - relevance) * noise
        out.append(ModalityEmbedding(modality=modality, molecule_id=rec.mol_id, vector=vec))
    return out


def synthetic_peak_embeddings(dataset: Dataset, seed: int) -> list[ModalityEmbedding]:
    """Plausible carbon chemical shifts from local structure plus jitter."""
    rng = np.random.default_rng(seed)
    out = []
    for rec in dataset.records:
        mol = rec.molecule
        adj = mol.neighbors()
        peaks = {}
        for i, atom in enumerate(mol.atoms):
            if atom.element != "C":
                continue
            if atom.aromatic:
                base = 125.0 + 2.0 * len(adj[i])
            elif any(bond.order == "double" and mol.atoms[j].element == "O"
                     for j, bond in adj[i]):
                base = 175.0
            else:
                base = 15.0 + 8.0 * len(adj[i])
            peaks[i] = float(base + rng.normal(scale=1.5))
        if peaks:
            out.append(ModalityEmbedding(modality="nmr_peak", molecule_id=rec.mol_id, peaks=peaks))
    return out


def peak_histogram_vectors(peak_embeddings: list[ModalityEmbedding], bins: int = 32,
                           ppm_range: tuple[float, float] = (0.0, 200.0)) -> dict[str, np.ndarray]:
    """Fixed-length per-molecule descriptor from atom peaks: a normalized
    histogram of chemical shifts (for analyses that need one vector per
    molecule, e.g. the fusion-strategy probe)."""
    out = {}
    for emb in peak_embeddings:
        values = np.fromiter(emb.peaks.values(), dtype=np.float64)
        hist, _ = np.histogram(values, bins=bins, range=ppm_range)
        out[emb.molecule_id] = hist / max(len(values), 1)
    return out


def planted_sensitivity_data(kind: str, n: int = 200, dim: int = 16,
                             seed: int = 0) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Construction datasets for the fusion-strategy analysis.

    "single": labels are an exact linear function of one modality, the
    others are noise (best single fit is already perfect). "complementary":
    labels split their signal across three independent modalities, so only
    the concatenation can fit them.
    """
    rng = np.random.default_rng(seed)
    modalities = ("smiles", "image", "nmr_spectrum")
    x = {m: rng.normal(size=(n, dim)) for m in modalities}
    if kind == "single":
        w = rng.normal(size=dim)
        labels = x["smiles"] @ w
    elif kind == "complementary":
        labels = np.zeros(n)
        for m in modalities:
            labels += x[m] @ rng.normal(size=dim)
    else:
        raise ValueError(f"unknown construction {kind!r}")
    return labels, x
