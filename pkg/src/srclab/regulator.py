"""Negative-pair weight regulation.

The regulator turns similarity estimates into per-negative weights: the
more similar a candidate looks to the anchor, the more likely it is a
false negative, and the smaller its weight. Weights are inverse
similarity, normalized to mean 1 over each anchor's negatives, so the
overall repulsion budget per anchor is unchanged and only its allocation
moves (this also makes the delta knob inert: it cancels in the
normalization; it stays configurable because it documents the raw-weight
scale).

Similarity comes from a frozen teacher early in training and from the
student itself later; alpha blends the two exp-similarities and slides
from 1 to 0 over the run.

Two conditions make the weights safe for the loss's information bound,
and both have checkers here: each weight row must anti-correlate with
the similarity (hence with the density ratio the similarity estimates),
and each row must keep mean 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Mat64, Vec64

DEFAULT_WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class AlphaSchedule:
    """Monotone blend schedule: alpha(0) = 1 (all teacher), alpha(T) = 0.

    kind "linear" is 1 - t/T; "cosine" is 0.5 (1 + cos(pi t / T)), which
    holds on to the teacher longer in the middle of training.
    """

    kind: str = "linear"

    def __post_init__(self):
        if self.kind not in ("linear", "cosine"):
            raise ValueError(f"unknown alpha schedule {self.kind!r}")


def alpha_at(schedule: AlphaSchedule, step: int, total_steps: int) -> float:
    """Blend coefficient at `step` of a `total_steps`-long run.

    Steps past the end clamp to 0 (pure student), so a trained state can
    keep emitting weights after its schedule is exhausted.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if step < 0:
        raise ValueError("step must be >= 0")
    t = min(step, total_steps) / total_steps
    if schedule.kind == "linear":
        return 1.0 - t
    return 0.5 * (1.0 + np.cos(np.pi * t))


@dataclass(frozen=True)
class RegulatorConfig:
    """Weight-construction knobs.

    weight_temperature sharpens the similarities the weights are built
    from: exp(cos / T) instead of exp(cos). None keeps the plain form.
    Small T makes the weights nearly binary, which also suppresses hard
    true negatives, so values well above the loss temperature are the
    useful range.
    """

    delta: float = 1.0
    alpha_schedule: AlphaSchedule = field(default_factory=AlphaSchedule)
    weight_floor: float = DEFAULT_WEIGHT_FLOOR
    weight_temperature: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.weight_floor < 1:
            raise ValueError("weight_floor must be in (0, 1)")
        if self.weight_temperature is not None and not self.weight_temperature > 0:
            raise ValueError("weight_temperature must be positive")


@dataclass(frozen=True)
class WeightMatrix:
    """Per-pair negative weights; diagonal slots are unused (set to 1).

    floor_hits counts similarity entries clipped up to the floor before
    inversion; nonzero values mean some similarities were pathologically
    small.
    """

    w: Mat64
    floor_hits: int = 0

    @property
    def n(self) -> int:
        return self.w.shape[0]


class TeacherHandle:
    """Frozen snapshot of an encoder pair used as the similarity teacher.

    Parameters are copied and write-protected at construction; the handle
    only exposes forward passes. Any object with forward(X) -> embeddings
    and a params dict works as an encoder.
    """

    def __init__(self, enc_a, enc_b, final_loss: float, steps: int):
        self.enc_a = enc_a.copy_frozen()
        self.enc_b = enc_b.copy_frozen()
        self.final_loss = float(final_loss)
        self.steps = int(steps)

    def embed_a(self, raw_a: Mat64) -> Mat64:
        return self.enc_a.forward(raw_a)

    def embed_b(self, raw_b: Mat64) -> Mat64:
        return self.enc_b.forward(raw_b)

    def checksum(self) -> float:
        """Cheap tamper check: sum of absolute parameter values."""
        total = 0.0
        for enc in (self.enc_a, self.enc_b):
            for arr in enc.params.values():
                total += float(np.abs(arr).sum())
        return total


def exp_similarity(cos_matrix: Mat64, tau: float | None = None) -> Mat64:
    """exp(cos) similarities, optionally sharpened as exp(cos / tau)."""
    c = np.asarray(cos_matrix, dtype=np.float64)
    if tau is not None:
        if not tau > 0:
            raise ValueError("tau must be positive")
        c = c / tau
    return np.exp(c)


def blended_similarity(
    teacher_sims: Mat64, student_sims: Mat64, alpha: float
) -> Mat64:
    """Convex blend alpha * teacher + (1 - alpha) * student, elementwise.

    Inputs are exp-similarities, so they must be strictly positive; the
    blend inherits that.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    t = np.asarray(teacher_sims, dtype=np.float64)
    s = np.asarray(student_sims, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {s.shape}")
    if np.any(t <= 0) or np.any(s <= 0):
        raise ValueError("exp-similarities must be strictly positive")
    return alpha * t + (1.0 - alpha) * s


def weights_from_similarity(
    sims: Mat64 | Vec64,
    delta: float = 1.0,
    floor: float = DEFAULT_WEIGHT_FLOOR,
) -> WeightMatrix:
    """Inverse-similarity weights, mean 1 per anchor row.

    For an N x N similarity matrix the diagonal (positive slot) is left
    out of the normalization and set to 1 in the output. A 1-D input is
    treated as a single row of negatives. Raw weights are
    delta / max(sim, floor); dividing by the row mean then cancels delta
    exactly.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not 0 < floor < 1:
        raise ValueError("floor must be in (0, 1)")
    s = np.asarray(sims, dtype=np.float64)
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("similarities must be finite and strictly positive")

    if s.ndim == 1:
        if s.size < 1:
            raise ValueError("empty similarity row")
        floored = np.maximum(s, floor)
        hits = int(np.sum(s < floor))
        raw = delta / floored
        w = raw / raw.mean()
        return WeightMatrix(w=w, floor_hits=hits)

    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("similarity matrix must be square (anchors x candidates)")
    n = s.shape[0]
    if n < 2:
        raise ValueError("need at least one negative per anchor")
    floored = np.maximum(s, floor)
    hits = int(np.sum(s < floor))
    raw = delta / floored
    off = ~np.eye(n, dtype=bool)
    row_means = np.where(off, raw, 0.0).sum(axis=1) / (n - 1)
    w = raw / row_means[:, None]
    w[np.eye(n, dtype=bool)] = 1.0
    return WeightMatrix(w=w, floor_hits=hits)


def weight_similarity_covariance(w_row: Vec64, s_row: Vec64) -> float:
    """Population covariance between one row's weights and similarities.

    The safety condition is that this is <= 0 for the similarity values
    the weights were built from (weights fall when similarity rises);
    the sign also transfers to any density ratio the similarity tracks
    monotonically.
    """
    w = np.asarray(w_row, dtype=np.float64).ravel()
    s = np.asarray(s_row, dtype=np.float64).ravel()
    if w.shape != s.shape or w.size < 2:
        raise ValueError("need two same-length rows with at least 2 entries")
    return float(np.mean((w - w.mean()) * (s - s.mean())))


def max_row_mean_deviation(weights: WeightMatrix | Mat64) -> float:
    """Largest |row mean - 1| over anchors' negative slots."""
    w = weights.w if isinstance(weights, WeightMatrix) else np.asarray(weights)
    if w.ndim == 1:
        return float(abs(w.mean() - 1.0))
    n = w.shape[0]
    off = ~np.eye(n, dtype=bool)
    means = np.where(off, w, 0.0).sum(axis=1) / (n - 1)
    return float(np.max(np.abs(means - 1.0)))


def covariance_report(weights: WeightMatrix, sims: Mat64) -> np.ndarray:
    """Per-row weight/similarity covariances over negative slots."""
    w = weights.w
    n = w.shape[0]
    s = np.asarray(sims, dtype=np.float64)
    if s.shape != w.shape:
        raise ValueError("similarity shape must match weights")
    off = ~np.eye(n, dtype=bool)
    out = np.empty(n)
    for i in range(n):
        out[i] = weight_similarity_covariance(w[i, off[i]], s[i, off[i]])
    return out
