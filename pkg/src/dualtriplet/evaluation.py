"""Verification metrics, distance histograms, and the outer pair classifier.

Distances score pairs: smaller means more likely the same identity. AUC is
the exact Mann-Whitney statistic P(genuine < impostor) + 0.5 P(tie),
computed by rank sums with midranks for ties.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .losses import pairwise_distances
from .mining import split_wc_bc
from .net import MlpNet, SgdOptimizer
from .provenance import config_comment


def _nonempty(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    return arr


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(genuine_distances, impostor_distances) -> float:
    """Probability a genuine distance ranks below an impostor one (ties half)."""
    g = _nonempty(genuine_distances, "genuine_distances")
    i = _nonempty(impostor_distances, "impostor_distances")
    ranks = _midranks(np.concatenate([g, i]))
    u_greater = ranks[: g.size].sum() - g.size * (g.size + 1) / 2.0
    return float(1.0 - u_greater / (g.size * i.size))


def rank1_accuracy(gallery_emb, gallery_labels, probe_emb, probe_labels) -> float:
    """Fraction of probes whose nearest gallery entry shares their identity.

    The gallery must hold exactly one entry per identity; equidistant
    templates resolve to the lowest gallery index.
    """
    gallery_emb = np.asarray(gallery_emb, dtype=np.float64)
    probe_emb = np.asarray(probe_emb, dtype=np.float64)
    gallery_labels = list(gallery_labels)
    probe_labels = list(probe_labels)
    if len(gallery_labels) == 0 or len(probe_labels) == 0:
        raise ValueError("gallery and probes must be nonempty")
    if len(set(gallery_labels)) != len(gallery_labels):
        raise ValueError("gallery must hold one entry per identity")
    diff = probe_emb[:, None, :] - gallery_emb[None, :, :]
    nearest = np.argmin(np.sqrt(np.sum(diff * diff, axis=2)), axis=1)
    hits = sum(
        1 for p, g in enumerate(nearest) if probe_labels[p] == gallery_labels[int(g)]
    )
    return hits / len(probe_labels)


def tpr_at_far(genuine_distances, impostor_distances, far: float) -> float:
    """True-positive rate at the largest threshold keeping FAR within ``far``.

    The threshold is the largest t with (impostors strictly below t) / n at
    most ``far``; the return value is the fraction of genuine distances
    strictly below t.
    """
    if not 0.0 < far < 1.0:
        raise ValueError("far must lie strictly between 0 and 1")
    g = _nonempty(genuine_distances, "genuine_distances")
    i = np.sort(_nonempty(impostor_distances, "impostor_distances"))
    allowed = int(math.floor(far * i.size))
    if allowed >= i.size:
        return 1.0
    threshold = i[allowed]
    return float(np.count_nonzero(g < threshold) / g.size)


@dataclass(frozen=True)
class Histogram:
    """Fixed-width bins with per-bin wc/bc counts; outliers clip to the edges."""

    edges: np.ndarray
    wc_counts: np.ndarray
    bc_counts: np.ndarray


def wcbc_histogram(wc, bc, bins: int, lo: float, hi: float) -> Histogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not hi > lo:
        raise ValueError("range must be nonempty")
    edges = lo + (hi - lo) * np.arange(bins + 1) / bins

    def count(values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return np.zeros(bins, dtype=np.int64)
        idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
        return np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)

    return Histogram(edges, count(wc), count(bc))


def write_histogram_csv(path, entries, provenance: dict | None = None) -> None:
    """``entries`` is a list of (domain, Histogram) pairs."""
    lines = ["bin_lo,bin_hi,wc_count,bc_count,domain"]
    for domain, hist in entries:
        for b in range(len(hist.wc_counts)):
            lines.append(
                f"{float(hist.edges[b])!r},{float(hist.edges[b + 1])!r},"
                f"{int(hist.wc_counts[b])},{int(hist.bc_counts[b])},{domain}"
            )
    text = "\n".join(lines) + "\n"
    if provenance is not None:
        text = config_comment(provenance) + text
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def dissimilarity(x_query, x_template) -> np.ndarray:
    """Componentwise absolute difference; keeps the embedding dimension."""
    q = np.asarray(x_query, dtype=np.float64)
    t = np.asarray(x_template, dtype=np.float64)
    if q.shape != t.shape:
        raise ValueError("query and template dims differ")
    return np.abs(q - t)


def pair_features(x_query, x_template, mode: str = "dissimilarity") -> np.ndarray:
    """Feature vector for a (query, template) pair fed to the pair classifier.

    ``dissimilarity`` keeps the embedding dimension via |q - t|; ``concat``
    stacks the two streams instead, doubling it, so the two input variants
    can be compared.
    """
    if mode == "dissimilarity":
        return dissimilarity(x_query, x_template)
    if mode == "concat":
        q = np.asarray(x_query, dtype=np.float64)
        t = np.asarray(x_template, dtype=np.float64)
        if q.shape != t.shape:
            raise ValueError("query and template dims differ")
        return np.concatenate([q, t], axis=-1)
    raise ValueError(f"unknown pair feature mode {mode!r}")


# ---------------------------------------------------------------------------
# Outer pair classifier: a two-layer net with a logistic head, trained with
# cross-entropy on dissimilarity vectors and pseudo-labels.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OuterClassifierConfig:
    # None resolves to max(input_dim, 16); narrower layers on all-positive
    # dissimilarity inputs can die wholesale under relu
    hidden_dim: int | None = None
    epochs: int = 200
    learning_rate: float = 0.5
    momentum: float = 0.9
    seed: int = 0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_outer_classifier(x, y, cfg: OuterClassifierConfig = OuterClassifierConfig()) -> MlpNet:
    """Full-batch gradient training of the match/non-match scorer.

    ``y`` holds 1 for same-identity (wc) pairs and 0 otherwise; both classes
    must be present. Returns the trained net; score with
    ``classifier_scores``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or len(x) != y.size:
        raise ValueError("x must be (n, d) with one label per row")
    if not (np.any(y == 1.0) and np.any(y == 0.0)):
        raise ValueError("both classes must be present to train the classifier")
    hidden = cfg.hidden_dim or max(x.shape[1], 16)
    rng = np.random.default_rng(cfg.seed)
    net = MlpNet.initialize((x.shape[1], hidden, 1), rng, normalize_output=False)
    opt = SgdOptimizer(cfg.learning_rate, cfg.momentum)
    for _ in range(cfg.epochs):
        logits, tape = net.forward(x)
        p = _sigmoid(logits[:, 0])
        grad_logit = ((p - y) / y.size)[:, None]
        opt.step(net, net.backward(tape, grad_logit))
    return net


def classifier_scores(net: MlpNet, x) -> np.ndarray:
    """Match scores in (0, 1); larger means more likely the same identity."""
    logits = net.embed(np.asarray(x, dtype=np.float64))
    return _sigmoid(logits[:, 0])


# ---------------------------------------------------------------------------
# Whole-dataset verification report.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    auc: float
    rank1: float
    tpr_at_far: list[tuple[float, float]]
    n_genuine: int
    n_impostor: int
    histogram_path: str

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "rank1": self.rank1,
            "tpr_at_far": [{"far": f, "tpr": t} for f, t in self.tpr_at_far],
            "n_genuine": self.n_genuine,
            "n_impostor": self.n_impostor,
            "histogram_path": self.histogram_path,
        }


def genuine_impostor_distances(embeddings, labels):
    """All-pair distances split by identity; labels must be complete."""
    return split_wc_bc(pairwise_distances(embeddings), labels)


def first_template_gallery(embeddings, labels):
    """Gallery of each identity's first sample; the rest become probes."""
    seen: dict[str, int] = {}
    probe_rows, probe_labels = [], []
    for i, lab in enumerate(labels):
        if lab not in seen:
            seen[lab] = i
        else:
            probe_rows.append(i)
            probe_labels.append(lab)
    gal_rows = [seen[lab] for lab in seen]
    return (
        embeddings[gal_rows],
        list(seen),
        embeddings[probe_rows],
        probe_labels,
    )


def evaluate_model(
    net: MlpNet,
    features,
    labels,
    fars=(0.01,),
    hist_bins: int = 40,
    hist_range: tuple[float, float] = (0.0, 2.0),
    histogram_path: str = "",
) -> tuple[EvalReport, Histogram]:
    """Verification metrics of an embedding net over one labeled dataset."""
    emb = net.embed(np.asarray(features, dtype=np.float64))
    labels = list(labels)
    genuine, impostor = genuine_impostor_distances(emb, labels)
    gal_emb, gal_labels, probe_emb, probe_labels = first_template_gallery(emb, labels)
    report = EvalReport(
        auc=roc_auc(genuine, impostor),
        rank1=rank1_accuracy(gal_emb, gal_labels, probe_emb, probe_labels),
        tpr_at_far=[(float(f), tpr_at_far(genuine, impostor, float(f))) for f in fars],
        n_genuine=int(genuine.size),
        n_impostor=int(impostor.size),
        histogram_path=str(histogram_path),
    )
    hist = wcbc_histogram(genuine, impostor, hist_bins, hist_range[0], hist_range[1])
    return report, hist


def write_report_json(path, report: EvalReport, provenance: dict | None = None) -> None:
    doc = report.to_dict()
    if provenance is not None:
        doc["config"] = provenance
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
