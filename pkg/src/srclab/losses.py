"""Contrastive losses over paired embeddings, with hand-written gradients.

Both losses share one softmax core. The weighted form multiplies each
negative's exponential by a per-pair weight, implemented as a logit
offset of log(w) on off-diagonal entries; the plain form is the same
computation with zero offsets. Weights are constants here: no gradient
flows through them (the regulator that produced them is a separate,
frozen computation).

Per anchor i the weighted loss is

    L_i = -log[ exp(s_ii/tau) / (exp(s_ii/tau) + sum_{j != i} w_ij exp(s_ij/tau)) ]

with s the cosine similarity matrix. Each L_i is >= 0 because the
denominator contains the numerator's term (weights are positive).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .numerics import Mat64, Vec64, cosine_sim_matrix, log_sum_exp_rows

Direction = Literal["a_to_b", "b_to_a", "symmetric_sum"]

WEIGHT_ROW_MEAN_TOL = 1e-6


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    direction: Direction = "symmetric_sum"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.direction not in ("a_to_b", "b_to_a", "symmetric_sum"):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class LossOutput:
    """Loss value with gradients and per-anchor decomposition.

    value is the mean of per_anchor over anchors that still had at least
    one negative (all of them unless an exclusion mask was used); skipped
    counts the anchors that lost every negative and contributed nothing.
    For symmetric_sum, per_anchor is the sum of the two directions' terms.
    """

    value: float
    grad_a: Mat64
    grad_b: Mat64
    per_anchor: Vec64
    skipped: int = 0


def _validate_embeddings(emb_a: Mat64, emb_b: Mat64) -> tuple[Mat64, Mat64]:
    a = np.asarray(emb_a, dtype=np.float64)
    b = np.asarray(emb_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("embeddings must be 2-D (batch, dim)")
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"paired batches must match in length: {a.shape[0]} vs {b.shape[0]}"
        )
    if a.shape[0] < 2:
        raise ValueError("contrastive batch needs at least 2 pairs")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("embeddings contain non-finite entries")
    return a, b


def _validate_weights(
    weights: Mat64, n: int, exclude: np.ndarray | None
) -> tuple[Mat64, np.ndarray]:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n, n):
        raise ValueError(f"weights must be ({n}, {n}), got {w.shape}")
    off = ~np.eye(n, dtype=bool)
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != (n, n):
            raise ValueError(f"exclude mask must be ({n}, {n}), got {exclude.shape}")
        if np.any(np.diag(exclude)):
            raise ValueError("cannot exclude the positive (diagonal) slot")
        off = off & ~exclude
    if np.any(w[off] <= 0):
        raise ValueError("negative-slot weights must be strictly positive")
    if not np.all(np.isfinite(w[off])):
        raise ValueError("weights contain non-finite entries")
    counts = off.sum(axis=1)
    active = counts > 0
    if np.any(active):
        sums = np.where(off, w, 0.0).sum(axis=1)
        means = sums[active] / counts[active]
        dev = np.max(np.abs(means - 1.0))
        if dev > WEIGHT_ROW_MEAN_TOL:
            raise ValueError(
                f"weight rows must average 1 over live negatives "
                f"(max deviation {dev:.3e} > {WEIGHT_ROW_MEAN_TOL:.0e})"
            )
    return w, off


def _directional_loss(
    anchors: Mat64,
    candidates: Mat64,
    tau: float,
    log_w_off: Mat64 | None,
    live_off: np.ndarray | None,
) -> tuple[float, Mat64, Mat64, Vec64, int]:
    """Shared core: anchors against candidates, positives on the diagonal.

    log_w_off carries log-weights on off-diagonal slots (0 on the
    diagonal); live_off marks usable negative slots. Returns the loss,
    gradients w.r.t. anchors and candidates, per-anchor terms, and the
    skipped-anchor count.
    """
    n = anchors.shape[0]
    norm_a = np.linalg.norm(anchors, axis=1, keepdims=True)
    norm_c = np.linalg.norm(candidates, axis=1, keepdims=True)
    sims = cosine_sim_matrix(anchors, candidates)
    logits = sims / tau
    if log_w_off is not None:
        logits = logits + log_w_off
    if live_off is not None:
        dead = ~live_off & ~np.eye(n, dtype=bool)
        logits = np.where(dead, -np.inf, logits)

    lse = log_sum_exp_rows(logits)
    diag = np.diag(logits)
    per_anchor = lse - diag

    if live_off is None:
        active = np.ones(n, dtype=bool)
    else:
        active = live_off.sum(axis=1) > 0
    n_active = int(active.sum())
    skipped = n - n_active
    per_anchor = np.where(active, per_anchor, 0.0)
    value = float(per_anchor[active].mean()) if n_active else 0.0

    if n_active == 0:
        zero_a = np.zeros_like(anchors)
        return 0.0, zero_a, np.zeros_like(candidates), per_anchor, skipped

    with np.errstate(invalid="ignore"):
        probs = np.exp(logits - lse[:, None])
    probs = np.where(np.isfinite(logits), probs, 0.0)
    g_logits = (probs - np.eye(n)) / (tau * n_active)
    g_logits[~active] = 0.0

    # chain rule through cosine: s_ij = a_hat_i . c_hat_j
    a_hat = anchors / norm_a
    c_hat = candidates / norm_c
    row_dot = np.sum(g_logits * sims, axis=1, keepdims=True)
    col_dot = np.sum(g_logits * sims, axis=0)[:, None]
    grad_anchors = (g_logits @ c_hat - row_dot * a_hat) / norm_a
    grad_candidates = (g_logits.T @ a_hat - col_dot * c_hat) / norm_c
    return value, grad_anchors, grad_candidates, per_anchor, skipped


def info_nce(emb_a: Mat64, emb_b: Mat64, cfg: LossConfig) -> LossOutput:
    """Plain contrastive loss: every negative weighs 1."""
    a, b = _validate_embeddings(emb_a, emb_b)
    return _dispatch(a, b, cfg, None, None, None, None)


def srcl(
    emb_a: Mat64,
    emb_b: Mat64,
    weights: Mat64,
    cfg: LossConfig,
    exclude: np.ndarray | None = None,
) -> LossOutput:
    """Weighted contrastive loss; one weight matrix serves the configured direction.

    weights[i, j] scales candidate j inside anchor i's denominator; the
    diagonal is unused. For direction b_to_a the matrix is read with
    anchors indexing rows as well (i.e. pass the b-anchored weights).
    symmetric_sum needs two distinct matrices; use srcl_symmetric.
    """
    if cfg.direction == "symmetric_sum":
        raise ValueError("symmetric_sum needs two weight matrices; use srcl_symmetric")
    a, b = _validate_embeddings(emb_a, emb_b)
    if cfg.direction == "a_to_b":
        return _dispatch(a, b, cfg, weights, exclude, None, None)
    return _dispatch(a, b, cfg, None, None, weights, exclude)


def srcl_symmetric(
    emb_a: Mat64,
    emb_b: Mat64,
    weights_ab: Mat64,
    weights_ba: Mat64,
    cfg: LossConfig,
    exclude_ab: np.ndarray | None = None,
    exclude_ba: np.ndarray | None = None,
) -> LossOutput:
    """Sum of the two directional weighted losses."""
    a, b = _validate_embeddings(emb_a, emb_b)
    base = LossConfig(tau=cfg.tau, direction="symmetric_sum")
    return _dispatch(a, b, base, weights_ab, exclude_ab, weights_ba, exclude_ba)


def _prep_offsets(
    weights: Mat64 | None, n: int, exclude: np.ndarray | None
) -> tuple[Mat64 | None, np.ndarray | None]:
    if weights is None:
        if exclude is None:
            return None, None
        w = np.ones((n, n))
    else:
        w = weights
    w, live = _validate_weights(w, n, exclude)
    log_w = np.zeros((n, n))
    log_w[live] = np.log(w[live])
    return log_w, live


def _dispatch(
    a: Mat64,
    b: Mat64,
    cfg: LossConfig,
    weights_ab: Mat64 | None,
    exclude_ab: np.ndarray | None,
    weights_ba: Mat64 | None,
    exclude_ba: np.ndarray | None,
) -> LossOutput:
    n = a.shape[0]
    if cfg.direction in ("a_to_b", "symmetric_sum"):
        log_w, live = _prep_offsets(weights_ab, n, exclude_ab)
        v_ab, ga_ab, gb_ab, pa_ab, sk_ab = _directional_loss(a, b, cfg.tau, log_w, live)
    if cfg.direction in ("b_to_a", "symmetric_sum"):
        log_w, live = _prep_offsets(weights_ba, n, exclude_ba)
        v_ba, gb_ba, ga_ba, pa_ba, sk_ba = _directional_loss(b, a, cfg.tau, log_w, live)

    if cfg.direction == "a_to_b":
        return LossOutput(v_ab, ga_ab, gb_ab, pa_ab, sk_ab)
    if cfg.direction == "b_to_a":
        return LossOutput(v_ba, ga_ba, gb_ba, pa_ba, sk_ba)
    return LossOutput(
        value=v_ab + v_ba,
        grad_a=ga_ab + ga_ba,
        grad_b=gb_ab + gb_ba,
        per_anchor=pa_ab + pa_ba,
        skipped=sk_ab + sk_ba,
    )
