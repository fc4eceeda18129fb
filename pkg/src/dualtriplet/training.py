"""Training loops: source pretraining and dual-domain adaptation.

Each adaptation batch embeds a labeled source batch and an unlabeled target
batch with the single shared net, derives mining windows from the source
batch's distance statistics, pseudo-labels the target pair distances, and
takes one SGD step on the combined hinge objective. Three scenarios exist:
``ls`` (source term only), ``lt`` (target term only; source batches still
feed the windows), and ``ls+lt`` (both).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .losses import LossConfig, batch_loss_and_grads, pairwise_distances
from .mining import (
    PseudoLabeledPairs,
    constitute_target_pairs,
    distance_stats,
    mining_windows,
    pseudo_label,
    split_wc_bc,
)
from .net import MlpNet, SgdOptimizer
from .provenance import config_comment

SCENARIOS = ("ls", "lt", "ls+lt")

_EMPTY_TRIPLETS = np.empty((0, 3), dtype=np.int64)
_EMPTY_PAIRS = np.empty((0, 4), dtype=np.int64)


class MisalignmentError(RuntimeError):
    """Target-only adaptation found no pseudo-labeled pairs for a whole epoch."""


class MisalignmentWarning(UserWarning):
    """More than half of all batches yielded zero target pairs."""


@dataclass(frozen=True)
class TrainConfig:
    persons_per_batch: int = 5
    images_per_person: int = 20
    epochs: int = 40
    alpha: float = 0.2
    lambda_: float = 1.0
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 42
    scenario: str = "ls+lt"
    hidden_dims: tuple[int, ...] = (32, 16)
    normalize_output: bool = True
    whole_set_stats: bool = False

    def validate(self) -> None:
        if self.persons_per_batch < 2:
            raise ValueError("persons_per_batch must be >= 2 (triplets need a negative)")
        if self.images_per_person < 2:
            raise ValueError("images_per_person must be >= 2 (triplets need a positive)")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if not self.hidden_dims:
            raise ValueError("hidden_dims must name at least the embedding size")
        LossConfig(self.alpha, self.lambda_)

    @property
    def batch_size(self) -> int:
        return self.persons_per_batch * self.images_per_person

    def loss_config(self) -> LossConfig:
        return LossConfig(self.alpha, self.lambda_)


def make_source_batch(dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator):
    """P distinct identities with K samples each (resampling small identities).

    Returns (features, labels); deterministic given the generator state.
    """
    identities = dataset.identities()
    if len(identities) < cfg.persons_per_batch:
        raise ValueError(
            f"need >= {cfg.persons_per_batch} identities, dataset has {len(identities)}"
        )
    by_id = dataset.indices_by_identity()
    chosen = rng.choice(len(identities), size=cfg.persons_per_batch, replace=False)
    rows: list[int] = []
    for ident_idx in chosen:
        pool = by_id[identities[int(ident_idx)]]
        take = rng.choice(
            pool.size, size=cfg.images_per_person, replace=pool.size < cfg.images_per_person
        )
        rows.extend(int(pool[t]) for t in take)
    labels = dataset.labels()
    return (
        dataset.features()[rows],
        np.asarray([labels[r] for r in rows], dtype=object),
    )


def make_target_batch(dataset: Dataset, size: int, rng: np.random.Generator):
    """Uniform draw of ``size`` samples (with replacement only if needed).

    Returns (features, dataset row indices); labels are never touched.
    """
    n = len(dataset)
    idx = rng.choice(n, size=size, replace=n < size)
    return dataset.features()[idx], idx


def mine_source_triplets(embeddings: np.ndarray, labels, alpha: float) -> np.ndarray:
    """Batch-all mining: every margin-violating (anchor, positive, negative).

    Emits each ordered (a, p) pair of one identity against every sample n of
    another identity whose hinge is strictly positive, in lexicographic
    order. Returns an (m, 3) index array.
    """
    labels = np.asarray(labels, dtype=object)
    n = len(labels)
    dist = pairwise_distances(embeddings)
    same = labels[:, None] == labels[None, :]
    ap_ok = same & ~np.eye(n, dtype=bool)
    violation = dist[:, :, None] - dist[:, None, :] + alpha > 0.0
    mask = ap_ok[:, :, None] & (~same)[:, None, :] & violation
    return np.argwhere(mask).astype(np.int64)


class TrainResult(NamedTuple):
    net: MlpNet
    loss_history: list[float]


def train_source(cfg: TrainConfig, source: Dataset) -> TrainResult:
    """Supervised triplet pretraining on the labeled source domain.

    The net is initialized from the run seed; every epoch runs
    ceil(n / batch) batches of sample -> embed -> mine -> step. The loss
    history holds per-epoch mean batch losses.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    net = MlpNet.initialize((source.dim, *cfg.hidden_dims), rng, cfg.normalize_output)
    opt = SgdOptimizer(cfg.learning_rate, cfg.momentum)
    loss_cfg = cfg.loss_config()
    n_batches = max(1, math.ceil(len(source) / cfg.batch_size))
    no_target = np.empty((0, source.dim))
    history: list[float] = []
    for _epoch in range(cfg.epochs):
        total = 0.0
        for _b in range(n_batches):
            x, labels = make_source_batch(source, cfg, rng)
            triplets = mine_source_triplets(net.embed(x), labels, cfg.alpha)
            res = batch_loss_and_grads(net, x, triplets, no_target, _EMPTY_PAIRS, loss_cfg)
            opt.step(net, res.grads)
            total += res.source_term
        history.append(total / n_batches)
    return TrainResult(net, history)


@dataclass(frozen=True)
class EpochDiagnostics:
    """End-of-epoch snapshot over the full datasets in the current embedding.

    Target-side statistics use ground-truth labels when provided (synthetic
    oracle only) and are nan otherwise. ``n_checked``/``n_correct`` count
    pseudo-labels audited against that truth; they stay out of the CSV.
    """

    epoch: int
    n_wc_labeled: int
    n_bc_labeled: int
    mu_wc_s: float
    sigma_wc_s: float
    mu_bc_s: float
    sigma_bc_s: float
    mu_wc_t: float
    mu_bc_t: float
    alignment_gap: float
    n_checked: int = 0
    n_correct: int = 0


class AdaptResult(NamedTuple):
    net: MlpNet
    loss_history: list[tuple[float, float, float]]
    diagnostics: list[EpochDiagnostics]


def _population_stats(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    mean = float(values.mean())
    return mean, float(np.sqrt(np.mean((values - mean) ** 2)))


def _epoch_diagnostics(
    epoch: int,
    net: MlpNet,
    source: Dataset,
    target: Dataset,
    truth_labels: np.ndarray | None,
    n_wc: int,
    n_bc: int,
    n_checked: int,
    n_correct: int,
) -> EpochDiagnostics:
    s_wc, s_bc = split_wc_bc(
        pairwise_distances(net.embed(source.features())), source.label_array()
    )
    mu_wc_s, sigma_wc_s = _population_stats(s_wc)
    mu_bc_s, sigma_bc_s = _population_stats(s_bc)
    if truth_labels is not None:
        t_wc, t_bc = split_wc_bc(
            pairwise_distances(net.embed(target.features())), truth_labels
        )
        mu_wc_t, _ = _population_stats(t_wc)
        mu_bc_t, _ = _population_stats(t_bc)
        gap = abs(mu_wc_s - mu_wc_t) + abs(mu_bc_s - mu_bc_t)
    else:
        mu_wc_t = mu_bc_t = gap = float("nan")
    return EpochDiagnostics(
        epoch, n_wc, n_bc, mu_wc_s, sigma_wc_s, mu_bc_s, sigma_bc_s,
        mu_wc_t, mu_bc_t, gap, n_checked, n_correct,
    )


def adapt(
    cfg: TrainConfig,
    source: Dataset,
    target: Dataset,
    init: MlpNet,
    target_truth: dict[str, str] | None = None,
) -> AdaptResult:
    """Adapt a pretrained embedding to the target domain.

    One epoch is ceil(|target| / batch) batches. All randomness comes from
    one generator seeded with cfg.seed, and every draw happens in every
    scenario, so scenario runs on the same data consume identical streams.
    Diagnostics row 0 describes the initial net before any update.

    Raises MisalignmentError when scenario ``lt`` passes a whole epoch
    without a single pseudo-labeled pair (there is nothing to train on).
    """
    cfg.validate()
    if source.dim != target.dim:
        raise ValueError("source and target feature dims differ")
    if init.dims[0] != source.dim:
        raise ValueError("net input dim does not match the datasets")
    rng = np.random.default_rng(cfg.seed)
    net = init.copy()
    opt = SgdOptimizer(cfg.learning_rate, cfg.momentum)
    loss_cfg = cfg.loss_config()
    n_batches = max(1, math.ceil(len(target) / cfg.batch_size))
    truth_labels = None
    if target_truth is not None:
        truth_labels = np.asarray(
            [target_truth[s.id] for s in target.samples], dtype=object
        )
    diagnostics = [_epoch_diagnostics(0, net, source, target, truth_labels, 0, 0, 0, 0)]
    history: list[tuple[float, float, float]] = []
    zero_batches = 0
    total_batches = 0
    for epoch in range(1, cfg.epochs + 1):
        n_wc = n_bc = n_checked = n_correct = 0
        any_pairs = False
        sums = np.zeros(3)
        for _b in range(n_batches):
            xs, labels = make_source_batch(source, cfg, rng)
            xt, t_idx = make_target_batch(target, cfg.batch_size, rng)
            s_emb = net.embed(xs)
            if cfg.whole_set_stats:
                wc, bc = split_wc_bc(
                    pairwise_distances(net.embed(source.features())),
                    source.label_array(),
                )
            else:
                wc, bc = split_wc_bc(pairwise_distances(s_emb), labels)
            windows = mining_windows(distance_stats(wc, bc))
            labeled = pseudo_label(pairwise_distances(net.embed(xt)), windows)
            quads = constitute_target_pairs(labeled, rng)
            triplets = mine_source_triplets(s_emb, labels, cfg.alpha)

            n_wc += labeled.n_wc
            n_bc += labeled.n_bc
            total_batches += 1
            if len(quads):
                any_pairs = True
            else:
                zero_batches += 1
            if truth_labels is not None:
                batch_truth = truth_labels[t_idx]
                n_checked += labeled.n_wc + labeled.n_bc
                n_correct += _count_correct(labeled, batch_truth)

            use_triplets = triplets if cfg.scenario != "lt" else _EMPTY_TRIPLETS
            use_pairs = quads if cfg.scenario != "ls" else _EMPTY_PAIRS
            res = batch_loss_and_grads(net, xs, use_triplets, xt, use_pairs, loss_cfg)
            opt.step(net, res.grads)
            sums += (res.source_term, res.target_term, res.total)
        if cfg.scenario == "lt" and not any_pairs:
            raise MisalignmentError(
                f"epoch {epoch}: no batch produced pseudo-labeled target pairs; "
                "the source and target distance distributions are too misaligned "
                "for target-only adaptation"
            )
        history.append(
            (
                float(sums[0] / n_batches),
                float(sums[1] / n_batches),
                float(sums[2] / n_batches),
            )
        )
        diagnostics.append(
            _epoch_diagnostics(
                epoch, net, source, target, truth_labels, n_wc, n_bc, n_checked, n_correct
            )
        )
    if total_batches and 2 * zero_batches > total_batches:
        warnings.warn(
            f"{zero_batches} of {total_batches} batches yielded zero target pairs; "
            "source and target distance distributions may be badly misaligned",
            MisalignmentWarning,
            stacklevel=2,
        )
    return AdaptResult(net, history, diagnostics)


def _count_correct(labeled: PseudoLabeledPairs, batch_truth: np.ndarray) -> int:
    correct = 0
    if labeled.n_wc:
        correct += int(
            (batch_truth[labeled.wc_pairs[:, 0]] == batch_truth[labeled.wc_pairs[:, 1]]).sum()
        )
    if labeled.n_bc:
        correct += int(
            (batch_truth[labeled.bc_pairs[:, 0]] != batch_truth[labeled.bc_pairs[:, 1]]).sum()
        )
    return correct


# ---------------------------------------------------------------------------
# CSV emission (formats shared with the CLI).
# ---------------------------------------------------------------------------


def write_loss_csv(path, rows, provenance: dict | None = None) -> None:
    """Rows of (epoch, scenario, source_loss, target_loss, total_loss)."""
    lines = ["epoch,scenario,source_loss,target_loss,total_loss"]
    for epoch, scenario, ls, lt, total in rows:
        lines.append(f"{epoch},{scenario},{ls!r},{lt!r},{total!r}")
    text = "\n".join(lines) + "\n"
    if provenance is not None:
        text = config_comment(provenance) + text
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def loss_rows_from_history(history, scenario: str):
    rows = []
    for epoch, entry in enumerate(history, start=1):
        if isinstance(entry, tuple):
            ls, lt, total = entry
        else:
            ls, lt, total = entry, 0.0, entry
        rows.append((epoch, scenario, float(ls), float(lt), float(total)))
    return rows


def write_diagnostics_csv(path, diagnostics, provenance: dict | None = None) -> None:
    lines = [
        "epoch,n_wc_labeled,n_bc_labeled,mu_wc_s,sigma_wc_s,mu_bc_s,sigma_bc_s,"
        "mu_wc_t,mu_bc_t,alignment_gap"
    ]
    for d in diagnostics:
        lines.append(
            f"{d.epoch},{d.n_wc_labeled},{d.n_bc_labeled},{d.mu_wc_s!r},"
            f"{d.sigma_wc_s!r},{d.mu_bc_s!r},{d.sigma_bc_s!r},{d.mu_wc_t!r},"
            f"{d.mu_bc_t!r},{d.alignment_gap!r}"
        )
    text = "\n".join(lines) + "\n"
    if provenance is not None:
        text = config_comment(provenance) + text
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
