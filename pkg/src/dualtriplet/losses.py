"""Euclidean pair distances and the two hinge losses with their gradients.

The combined objective is

    total = mean(active source hinges) + lambda * mean(active target hinges)

where a source hinge is max(d(a,p) - d(a,n) + alpha, 0) over labeled
triplets and a target hinge is max(d_wc - d_bc + alpha, 0) over
pseudo-labeled distance pairs. Hinge terms that are zero (including exactly
at the boundary) contribute no gradient; both terms share one margin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .net import (
    ZERO_GUARD,
    DegenerateEmbeddingError,
    Gradients,
    MlpNet,
    NonFiniteError,
)


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.2
    lambda_: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if self.lambda_ < 0.0:
            raise ValueError("lambda_ must be nonnegative")


def pairwise_distances(x: np.ndarray, block: int = 256) -> np.ndarray:
    """Non-squared Euclidean distance matrix; symmetric, zero diagonal.

    Computed from explicit row differences (not the Gram expansion) so it
    matches a scalar-loop oracle to machine precision.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if x.ndim != 2 or n < 2:
        raise ValueError("need a 2-D matrix with at least two rows")
    out = np.empty((n, n))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        diff = x[lo:hi, None, :] - x[None, :, :]
        out[lo:hi] = np.sqrt(np.sum(diff * diff, axis=2))
    return out


def source_triplet_loss(d_ap: float, d_an: float, alpha: float) -> float:
    """Hinge on labeled distances: zero iff d_an >= d_ap + alpha."""
    return max(d_ap - d_an + alpha, 0.0)


def target_triplet_loss(d_wc: float, d_bc: float, alpha: float) -> float:
    """Same hinge over pseudo-labeled within/between-class distances."""
    return max(d_wc - d_bc + alpha, 0.0)


def dual_loss(l_s: float, l_t: float, lambda_: float) -> float:
    """Weighted sum of the two terms; exact l_s + l_t at lambda 1."""
    return l_s + lambda_ * l_t


class DualLossResult(NamedTuple):
    total: float
    source_term: float
    target_term: float
    grads: Gradients


def _hinge_coeffs(dist: np.ndarray, quads: np.ndarray, alpha: float):
    """Mean active hinge plus the pair-coefficient matrix of its gradient.

    ``quads`` rows are (i1, j1, i2, j2): hinge = d(i1,j1) - d(i2,j2) + alpha.
    The returned C satisfies dLoss/dE = sum_ij C_ij dd_ij/dE with the mean's
    1/n_active already folded in.
    """
    n = dist.shape[0]
    coeffs = np.zeros(n * n)
    if len(quads) == 0:
        return 0.0, coeffs.reshape(n, n)
    d_pos = dist[quads[:, 0], quads[:, 1]]
    d_neg = dist[quads[:, 2], quads[:, 3]]
    hinge = d_pos - d_neg + alpha
    active = hinge > 0.0
    n_active = int(active.sum())
    if n_active == 0:
        return 0.0, coeffs.reshape(n, n)
    weight = 1.0 / n_active
    live = quads[active]
    np.add.at(coeffs, live[:, 0] * n + live[:, 1], weight)
    np.add.at(coeffs, live[:, 2] * n + live[:, 3], -weight)
    return float(hinge[active].mean()), coeffs.reshape(n, n)


def _coeff_embedding_grad(emb: np.ndarray, dist: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """dLoss/dEmbeddings for a loss of the form sum_ij C_ij * d_ij.

    Uses dd_ij/dE_i = (E_i - E_j)/d_ij with the derivative defined as 0 when
    d_ij vanishes (identical embeddings).
    """
    sym = coeffs + coeffs.T
    scale = np.where(dist > ZERO_GUARD, sym / np.maximum(dist, ZERO_GUARD), 0.0)
    return scale.sum(axis=1)[:, None] * emb - scale @ emb


def batch_loss_and_grads(
    net: MlpNet,
    source_x: np.ndarray,
    triplets: np.ndarray,
    target_x: np.ndarray,
    pairs: np.ndarray,
    cfg: LossConfig,
) -> DualLossResult:
    """Combined loss over one batch and its parameter gradients.

    ``triplets`` is an (m, 3) index array (anchor, positive, negative) into
    the source batch; ``pairs`` is an (m, 4) array (wc_i, wc_j, bc_k, bc_l)
    into the target batch. Either may be empty, dropping that term. One
    shared net embeds both batches.
    """
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 4)

    src_emb, src_tape = net.forward(np.asarray(source_x, dtype=np.float64))
    tgt_emb, tgt_tape = net.forward(np.asarray(target_x, dtype=np.float64))

    src_grad_emb = np.zeros_like(src_emb)
    source_term = 0.0
    if len(triplets):
        d_src = pairwise_distances(src_emb)
        quads = triplets[:, [0, 1, 0, 2]]
        source_term, coeffs = _hinge_coeffs(d_src, quads, cfg.alpha)
        src_grad_emb = _coeff_embedding_grad(src_emb, d_src, coeffs)

    tgt_grad_emb = np.zeros_like(tgt_emb)
    target_term = 0.0
    if len(pairs):
        d_tgt = pairwise_distances(tgt_emb)
        target_term, coeffs = _hinge_coeffs(d_tgt, pairs, cfg.alpha)
        tgt_grad_emb = _coeff_embedding_grad(tgt_emb, d_tgt, cfg.lambda_ * coeffs)

    total = dual_loss(source_term, target_term, cfg.lambda_)
    grads = net.backward(src_tape, src_grad_emb)
    grads += net.backward(tgt_tape, tgt_grad_emb)
    if not (np.isfinite(total) and grads.all_finite()):
        raise NonFiniteError("non-finite loss or gradient in batch evaluation")
    return DualLossResult(total, source_term, target_term, grads)


# ---------------------------------------------------------------------------
# Finite-difference verification of the combined loss, used by tests and the
# `grad-check` CLI command.
# ---------------------------------------------------------------------------


def _random_check_instance(rng: np.random.Generator):
    """A small net plus batches whose hinges and relu units sit safely away
    from their kinks, so central differences stay valid."""
    margin = 5e-3
    for _ in range(200):
        in_dim = int(rng.integers(2, 5))
        hidden = int(rng.integers(2, 8))
        out_dim = int(rng.integers(2, 5))
        # Unnormalized embeddings make the distance loss invariant to the
        # final bias (its true gradient is exactly 0, below finite-difference
        # noise), so the hinge-loss check always normalizes.
        net = MlpNet.initialize((in_dim, hidden, out_dim), rng, True)
        n_src = int(rng.integers(5, 9))
        n_tgt = int(rng.integers(5, 9))
        source_x = rng.standard_normal((n_src, in_dim))
        target_x = rng.standard_normal((n_tgt, in_dim))
        labels = np.arange(n_src) % 2
        cand = [
            (a, p, n)
            for a in range(n_src)
            for p in range(n_src)
            if p != a and labels[p] == labels[a]
            for n in range(n_src)
            if labels[n] != labels[a]
        ]
        trip = np.asarray(cand, dtype=np.int64)[: int(rng.integers(2, 6))]
        pair_rows = []
        for _ in range(int(rng.integers(2, 5))):
            i, j = rng.choice(n_tgt, size=2, replace=False)
            k, l = rng.choice(n_tgt, size=2, replace=False)
            if {int(i), int(j)} != {int(k), int(l)}:
                pair_rows.append((i, j, k, l))
        if len(pair_rows) < 2:
            continue
        prs = np.asarray(pair_rows, dtype=np.int64)
        cfg = LossConfig(alpha=0.2, lambda_=float(rng.choice([0.5, 1.0, 2.0])))

        try:
            s_emb, s_tape = net.forward(source_x)
            t_emb, t_tape = net.forward(target_x)
        except DegenerateEmbeddingError:
            continue
        d_s = pairwise_distances(s_emb)
        d_t = pairwise_distances(t_emb)
        slacks = np.concatenate(
            [
                d_s[trip[:, 0], trip[:, 1]] - d_s[trip[:, 0], trip[:, 2]] + cfg.alpha,
                d_t[prs[:, 0], prs[:, 1]] - d_t[prs[:, 2], prs[:, 3]] + cfg.alpha,
            ]
        )
        preacts = np.concatenate([z.ravel() for z in s_tape.preacts + t_tape.preacts])
        if np.abs(slacks).min() < margin or np.abs(preacts).min() < margin:
            continue
        if not np.any(slacks > 0):
            continue
        # Distances on unit-norm embeddings are kinked at 0 (coincident) and
        # stationary at 2 (antipodal); keep every involved pair well inside.
        involved = np.concatenate(
            [
                d_s[trip[:, 0], trip[:, 1]],
                d_s[trip[:, 0], trip[:, 2]],
                d_t[prs[:, 0], prs[:, 1]],
                d_t[prs[:, 2], prs[:, 3]],
            ]
        )
        if involved.min() < 0.05 or involved.max() > 1.95:
            continue
        # A true gradient below the checker's 1e-12 denominator guard drowns
        # in finite-difference noise; demand clearly-nonzero components.
        res = batch_loss_and_grads(net, source_x, trip, target_x, prs, cfg)
        magnitudes = np.abs(res.grads.flat())
        nonzero = magnitudes[magnitudes > 0.0]
        if nonzero.size == 0 or nonzero.min() < 1e-8:
            continue
        return net, source_x, trip, target_x, prs, cfg
    raise RuntimeError("could not build a hinge-safe check instance")


def run_grad_check_suite(
    n_instances: int = 20,
    seed: int = 20240915,
    h: float = 1e-5,
    flip_sign: bool = False,
) -> float:
    """Worst relative gradient error across random loss instances.

    ``flip_sign`` corrupts one analytic gradient block on purpose; it exists
    so the detector itself can be shown to fire.
    """
    from .net import grad_check

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        net, source_x, trip, target_x, prs, cfg = _random_check_instance(rng)

        def loss_and_grad(current: MlpNet):
            res = batch_loss_and_grads(current, source_x, trip, target_x, prs, cfg)
            grads = res.grads
            if flip_sign:
                grads = Gradients(
                    [-w if i == 0 else w for i, w in enumerate(grads.weights)],
                    list(grads.biases),
                )
            return res.total, grads

        worst = max(worst, grad_check(loss_and_grad, net, h))
    return worst
