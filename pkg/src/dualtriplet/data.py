"""Feature-vector datasets: CSV ingestion, synthetic generation, splits.

A dataset is a flat list of samples (id, optional identity label, fixed-dim
feature vector) tagged with the domain it came from. Source datasets must be
fully labeled; target datasets may carry labels for evaluation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DOMAINS = ("source", "target")


class CsvFormatError(ValueError):
    """Malformed feature CSV; the message names the offending line."""


@dataclass(frozen=True)
class Sample:
    id: str
    label: str | None
    features: np.ndarray


class Dataset:
    def __init__(self, domain: str, samples):
        if domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")
        samples = list(samples)
        if not samples:
            raise ValueError("dataset needs at least one sample")
        dim = samples[0].features.shape[0]
        for s in samples:
            if s.features.shape != (dim,):
                raise ValueError(f"sample {s.id!r}: feature dim differs from {dim}")
            if not np.isfinite(s.features).all():
                raise ValueError(f"sample {s.id!r}: non-finite features")
            if domain == "source" and s.label is None:
                raise ValueError(f"source sample {s.id!r} is unlabeled")
        self.domain = domain
        self.samples = samples
        self.dim = int(dim)
        self._features = np.stack([s.features for s in samples]).astype(np.float64)
        self._labels = [s.label for s in samples]

    def __len__(self) -> int:
        return len(self.samples)

    def features(self) -> np.ndarray:
        return self._features

    def labels(self) -> list[str | None]:
        return list(self._labels)

    def label_array(self) -> np.ndarray:
        if any(lab is None for lab in self._labels):
            raise ValueError(f"{self.domain} dataset has unlabeled samples")
        return np.asarray(self._labels, dtype=object)

    def identities(self) -> list[str]:
        return sorted({lab for lab in self._labels if lab is not None})

    def indices_by_identity(self) -> dict[str, np.ndarray]:
        groups: dict[str, list[int]] = {}
        for i, lab in enumerate(self._labels):
            if lab is not None:
                groups.setdefault(lab, []).append(i)
        return {lab: np.asarray(ix, dtype=np.int64) for lab, ix in groups.items()}

    def with_labels(self, mapping: dict[str, str]) -> "Dataset":
        """Copy with labels filled from an id -> label mapping (evaluation only)."""
        relabeled = [
            Sample(s.id, mapping.get(s.id, s.label), s.features) for s in self.samples
        ]
        return Dataset(self.domain, relabeled)


def dataset_from_arrays(x, labels=None, domain="source", id_prefix="r") -> Dataset:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    labs = [None] * len(x) if labels is None else [str(v) for v in labels]
    if len(labs) != len(x):
        raise ValueError("labels length does not match feature rows")
    samples = [
        Sample(f"{id_prefix}{i:05d}", labs[i], x[i].copy()) for i in range(len(x))
    ]
    return Dataset(domain, samples)


# ---------------------------------------------------------------------------
# Feature CSV format: header `id,label,f0,...,f{d-1}`, LF endings, empty label
# means unlabeled. Lines starting with '#' before the header are ignored
# (used for provenance comments).
# ---------------------------------------------------------------------------


def load_feature_csv(path, domain: str = "source") -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lineno = 0
    header = None
    while lineno < len(lines):
        if not lines[lineno].startswith("#"):
            header = lines[lineno]
            break
        lineno += 1
    if header is None:
        raise CsvFormatError(f"{path}: no header line found")
    cols = header.split(",")
    if len(cols) < 3 or cols[0] != "id" or cols[1] != "label":
        raise CsvFormatError(f"{path} line {lineno + 1}: header must start 'id,label,f0,...'")
    dim = len(cols) - 2
    for k, name in enumerate(cols[2:]):
        if name != f"f{k}":
            raise CsvFormatError(f"{path} line {lineno + 1}: feature column {k} must be named f{k}")
    samples = []
    for offset, line in enumerate(lines[lineno + 1 :], start=lineno + 2):
        cells = line.split(",")
        if len(cells) != dim + 2:
            raise CsvFormatError(
                f"{path} line {offset}: expected {dim + 2} fields, got {len(cells)}"
            )
        try:
            feats = np.array([float(c) for c in cells[2:]], dtype=np.float64)
        except ValueError:
            raise CsvFormatError(f"{path} line {offset}: non-numeric feature value") from None
        if not np.isfinite(feats).all():
            raise CsvFormatError(f"{path} line {offset}: non-finite feature value")
        label = cells[1] if cells[1] != "" else None
        samples.append(Sample(cells[0], label, feats))
    if not samples:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(domain, samples)


def save_feature_csv(dataset: Dataset, path, provenance: dict | None = None) -> None:
    from .provenance import config_comment  # local import to keep data standalone

    rows = ["id,label," + ",".join(f"f{k}" for k in range(dataset.dim))]
    for s in dataset.samples:
        feats = ",".join(repr(float(v)) for v in s.features)
        rows.append(f"{s.id},{s.label or ''},{feats}")
    text = "\n".join(rows) + "\n"
    if provenance is not None:
        text = config_comment(provenance) + text
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def save_truth_csv(truth: dict[str, str], path, provenance: dict | None = None) -> None:
    from .provenance import config_comment

    text = "\n".join(["id,label"] + [f"{sid},{lab}" for sid, lab in truth.items()]) + "\n"
    if provenance is not None:
        text = config_comment(provenance) + text
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_truth_csv(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln and not ln.startswith("#")]
    if not lines or lines[0] != "id,label":
        raise CsvFormatError(f"{path}: truth file must start with 'id,label'")
    truth = {}
    for offset, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2 or not cells[1]:
            raise CsvFormatError(f"{path} line {offset}: expected 'id,label'")
        truth[cells[0]] = cells[1]
    return truth


# ---------------------------------------------------------------------------
# Synthetic two-domain generator. Identity centers are Gaussian; the target
# domain sees the same identities through a fixed affine map (plane rotations
# + isotropic scale + translation) plus observation noise.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    identities: int = 20
    per_identity: int = 30
    dim: int = 32
    intra_class_sigma: float = 0.18
    inter_class_sigma: float = 0.35
    rotations: tuple[float, ...] = (30.0,)
    scale: float = 1.5
    translation: tuple[float, ...] | float = 0.0
    noise_sigma: float = 0.05
    seed: int = 42

    def validate(self) -> None:
        if self.identities < 2:
            raise ValueError("identities must be >= 2 (between-class pairs need two)")
        if self.per_identity < 2:
            raise ValueError("per_identity must be >= 2 (within-class pairs need two)")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.intra_class_sigma <= 0 or self.inter_class_sigma <= 0:
            raise ValueError("class sigmas must be positive")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if len(self.rotations) > self.dim // 2:
            raise ValueError("more plane rotations than coordinate planes")

    def translation_vector(self) -> np.ndarray:
        t = self.translation
        if np.isscalar(t):
            return np.full(self.dim, float(t))
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (self.dim,):
            raise ValueError("translation vector length must equal dim")
        return t

    def transform_matrix(self) -> np.ndarray:
        """scale * (composition of plane rotations), rotation k acting on
        coordinates (2k, 2k+1)."""
        mat = np.eye(self.dim)
        for k, angle_deg in enumerate(self.rotations):
            theta = math.radians(angle_deg)
            c, s = math.cos(theta), math.sin(theta)
            rot = np.eye(self.dim)
            i, j = 2 * k, 2 * k + 1
            rot[i, i], rot[i, j] = c, -s
            rot[j, i], rot[j, j] = s, c
            mat = rot @ mat
        return self.scale * mat


def gen_synthetic(cfg: SynthConfig) -> tuple[Dataset, Dataset, dict[str, str]]:
    """Seeded (source, target, target ground truth) triple.

    Source rows are center + intra-class noise. Target rows are the affine
    map applied to an independent draw of the same construction, plus
    observation noise. The target dataset is emitted unlabeled; ground truth
    comes back as a separate id -> label mapping. RNG consumption does not
    depend on the transform parameters, so runs with the same seed use
    matched draws.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    centers = rng.standard_normal((cfg.identities, cfg.dim)) * cfg.inter_class_sigma
    src_noise = rng.standard_normal((cfg.identities, cfg.per_identity, cfg.dim))
    tgt_noise = rng.standard_normal((cfg.identities, cfg.per_identity, cfg.dim))
    obs_noise = rng.standard_normal((cfg.identities, cfg.per_identity, cfg.dim))

    mat = cfg.transform_matrix()
    shift = cfg.translation_vector()

    source_samples, target_samples, truth = [], [], {}
    for c in range(cfg.identities):
        label = f"p{c:03d}"
        for k in range(cfg.per_identity):
            feats = centers[c] + cfg.intra_class_sigma * src_noise[c, k]
            source_samples.append(Sample(f"s{c:03d}_{k:03d}", label, feats))
        for k in range(cfg.per_identity):
            construction = centers[c] + cfg.intra_class_sigma * tgt_noise[c, k]
            feats = mat @ construction + shift + cfg.noise_sigma * obs_noise[c, k]
            sid = f"t{c:03d}_{k:03d}"
            target_samples.append(Sample(sid, None, feats))
            truth[sid] = label
    return (
        Dataset("source", source_samples),
        Dataset("target", target_samples),
        truth,
    )


def split_by_identity(dataset: Dataset, fractions, seed: int) -> list[Dataset]:
    """Partition a labeled dataset into identity-disjoint parts.

    Fractions must be positive and sum to at most 1; any remainder of
    identities is dropped. Every part must receive at least one identity.
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if sum(fractions) > 1.0 + 1e-9:
        raise ValueError("fractions must sum to at most 1")
    identities = dataset.identities()
    n = len(identities)
    if n < len(fractions):
        raise ValueError(f"cannot split {n} identities into {len(fractions)} parts")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    # Cumulative-rounding allocation keeps exact ratios like 2/3 + 1/3 intact.
    bounds = [0]
    acc = 0.0
    for f in fractions:
        acc += f
        bounds.append(int(math.floor(acc * n + 1e-9)))
    counts = [bounds[i + 1] - bounds[i] for i in range(len(fractions))]
    if any(c == 0 for c in counts):
        raise ValueError("a split received zero identities; use fewer parts")
    parts = []
    by_id = dataset.indices_by_identity()
    for i in range(len(fractions)):
        chosen = {identities[j] for j in order[bounds[i] : bounds[i + 1]]}
        keep = sorted(
            int(ix) for lab in chosen for ix in by_id[lab]
        )
        parts.append(Dataset(dataset.domain, [dataset.samples[ix] for ix in keep]))
    return parts
