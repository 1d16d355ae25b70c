"""Synthetic data with known ground truth.

Two families live here. Discrete joint distributions over small alphabets
give exact mutual information and density ratios, so Monte Carlo bound
estimates can be checked against closed forms. Continuous two-modality
worlds give paired embeddings with controlled noise and deliberately
injected false negatives (batch slots that reuse a concept already in the
batch), with the ground-truth false-negative mask carried alongside so
the regulator can be scored against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Mat64, make_rng

MAX_ALPHABET = 64


@dataclass(frozen=True)
class DiscreteJoint:
    """Joint distribution p(x, y) over {0..Kx-1} x {0..Ky-1}.

    The table is validated once at construction: nonnegative entries,
    total mass 1 within 1e-12, and strictly positive marginals (a symbol
    that never occurs has no density ratio and no business in the
    alphabet).
    """

    table: Mat64

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2:
            raise ValueError("joint table must be 2-D")
        if t.shape[0] > MAX_ALPHABET or t.shape[1] > MAX_ALPHABET:
            raise ValueError(f"alphabet sizes {t.shape} exceed {MAX_ALPHABET}")
        if np.any(t < 0):
            raise ValueError("joint table has negative entries")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ValueError(f"joint table mass {t.sum()!r} is not 1 within 1e-12")
        if np.any(t.sum(axis=1) <= 0) or np.any(t.sum(axis=0) <= 0):
            raise ValueError("joint table has a zero marginal")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def nx(self) -> int:
        return self.table.shape[0]

    @property
    def ny(self) -> int:
        return self.table.shape[1]

    def marginal_x(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.table.sum(axis=0)

    def conditional_y_given_x(self) -> Mat64:
        """Rows are p(y | x)."""
        return self.table / self.marginal_x()[:, None]


def make_bsc_joint(p_agree: float) -> DiscreteJoint:
    """Binary joint with uniform marginals and P(x == y) = p_agree.

    The table is [[p/2, (1-p)/2], [(1-p)/2, p/2]] with p = p_agree.
    p_agree = 0.5 is independence; 0 and 1 are excluded because they zero
    out cells the density-ratio oracle must divide by.
    """
    if not 0.0 < p_agree < 1.0:
        raise ValueError(f"p_agree must be in (0, 1), got {p_agree}")
    p = float(p_agree)
    table = np.array([[p / 2, (1 - p) / 2], [(1 - p) / 2, p / 2]])
    return DiscreteJoint(table)


def make_deterministic_joint(k: int) -> DiscreteJoint:
    """Uniform x with y == x always; mutual information is exactly log k."""
    if not 2 <= k <= MAX_ALPHABET:
        raise ValueError(f"k must be in [2, {MAX_ALPHABET}], got {k}")
    return DiscreteJoint(np.eye(k) / k)


def make_uniform_mixing_joint(k: int, p_agree: float) -> DiscreteJoint:
    """k-symbol joint, uniform marginals, diagonal mass p_agree per row.

    Off-diagonal mass spreads uniformly, so every density ratio is
    strictly positive. The k = 2 case coincides with make_bsc_joint.
    """
    if not 2 <= k <= MAX_ALPHABET:
        raise ValueError(f"k must be in [2, {MAX_ALPHABET}], got {k}")
    if not 0.0 < p_agree < 1.0:
        raise ValueError(f"p_agree must be in (0, 1), got {p_agree}")
    off = (1.0 - p_agree) / (k - 1)
    row = np.full((k, k), off / k)
    np.fill_diagonal(row, p_agree / k)
    return DiscreteJoint(row)


def mixture_conditional(joint: DiscreteJoint, eta: float) -> Mat64:
    """Negative-process channel q(y | x) = eta p(y|x) + (1 - eta) p(y).

    This is the distribution negatives are actually drawn from; eta = 0
    is the independent (marginal) process and eta = 1 draws negatives
    straight from the anchor's conditional. Note the y-marginal of the
    process is p(y) for every eta.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    cond = joint.conditional_y_given_x()
    return eta * cond + (1.0 - eta) * joint.marginal_y()[None, :]


def sample_batch_with_dependence(
    joint: DiscreteJoint, n: int, eta: float, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Draw one contrastive batch over the joint's alphabet.

    The anchor pair (x, ys[0]) comes from the joint; the n - 1 negatives
    ys[1:] are iid from the eta-mixture q(y | x). Returns (x, ys) with
    the positive at index 0.
    """
    if n < 2:
        raise ValueError(f"batch size must be >= 2, got {n}")
    flat = rng.choice(joint.nx * joint.ny, p=joint.table.ravel())
    x, y_pos = divmod(int(flat), joint.ny)
    q = mixture_conditional(joint, eta)[x]
    ys = np.empty(n, dtype=np.int64)
    ys[0] = y_pos
    ys[1:] = rng.choice(joint.ny, size=n - 1, p=q)
    return x, ys


def sample_batches_vectorized(
    joint: DiscreteJoint, n: int, eta: float, n_batches: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n_batches batches at once: (xs, ys) of shapes (B,), (B, n).

    Same process as sample_batch_with_dependence, vectorized for the
    Monte Carlo verifiers (1e5 batches per grid cell).
    """
    if n < 2:
        raise ValueError(f"batch size must be >= 2, got {n}")
    if n_batches < 1:
        raise ValueError("n_batches must be positive")
    flat = rng.choice(joint.nx * joint.ny, size=n_batches, p=joint.table.ravel())
    xs = flat // joint.ny
    ys = np.empty((n_batches, n), dtype=np.int64)
    ys[:, 0] = flat % joint.ny
    q = mixture_conditional(joint, eta)
    # Inverse CDF per anchor row: count thresholds each uniform exceeds.
    # Alphabets are <= 64, so the (B, n-1, Ky) comparison stays cheap.
    cdf = np.cumsum(q, axis=1)
    u = rng.random(size=(n_batches, n - 1))
    idx = (u[:, :, None] > cdf[xs][:, None, :]).sum(axis=2)
    # float error can leave cdf[-1] a hair under 1; clip the overflow bin
    ys[:, 1:] = np.minimum(idx, joint.ny - 1)
    return xs, ys


@dataclass(frozen=True)
class WorldSpec:
    """Recipe for a continuous two-modality world.

    Each concept owns one prototype per modality. A pair is a noisy copy
    of its concept's prototypes in both modalities. False negatives are
    injected per batch slot: with probability false_neg_rate the slot
    reuses a concept already present in the batch (full duplicate), and
    with probability partial_overlap * false_neg_rate it takes an even
    blend of a present concept and a fresh one (partial duplicate).

    style_dim > 0 adds a nuisance channel: each slot draws a style vector
    shared by its two views and mapped into both raw spaces through fixed
    random matrices. Styles are fresh per slot, so a duplicate is the
    same concept in a new style. Style carries pair identity but, being
    low-dimensional and continuous, it is a much noisier matching signal
    than the concept, which makes over-reliance on it costly.
    """

    n_concepts: int
    dim_a: int
    dim_b: int
    emb_noise: float
    false_neg_rate: float = 0.0
    partial_overlap: float = 0.0
    style_dim: int = 0
    style_scale: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_concepts < 1:
            raise ValueError("n_concepts must be >= 1")
        if self.dim_a < 1 or self.dim_b < 1:
            raise ValueError("modality dims must be >= 1")
        if self.emb_noise < 0:
            raise ValueError("emb_noise must be >= 0")
        if not 0.0 <= self.false_neg_rate < 1.0:
            raise ValueError("false_neg_rate must be in [0, 1)")
        if not 0.0 <= self.partial_overlap <= 1.0:
            raise ValueError("partial_overlap must be in [0, 1]")
        if self.false_neg_rate * (1.0 + self.partial_overlap) >= 1.0:
            raise ValueError(
                "false_neg_rate * (1 + partial_overlap) must stay below 1: "
                "slot-type probabilities would exceed unit mass"
            )
        if self.n_concepts < 2 and self.false_neg_rate > 0:
            raise ValueError("false negatives need at least 2 concepts to reuse")
        if self.style_dim < 0:
            raise ValueError("style_dim must be >= 0")
        if self.style_scale < 0:
            raise ValueError("style_scale must be >= 0")
        if self.style_scale > 0 and self.style_dim == 0:
            raise ValueError("style_scale > 0 needs style_dim >= 1")


@dataclass(frozen=True)
class PairBatch:
    """One batch of paired observations with ground truth attached.

    raw_a[i] and raw_b[i] are the two modality views of slot i.
    concept_ids[i] is the slot's primary concept; blend_ids[i] is the
    secondary concept of a partial duplicate, or -1. mask[i, j] is True
    exactly when slot j's candidate shares a concept with slot i's anchor
    for j != i; the diagonal (the positive) is always False.
    """

    raw_a: Mat64
    raw_b: Mat64
    concept_ids: np.ndarray
    blend_ids: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        n = self.raw_a.shape[0]
        if not (
            self.raw_b.shape[0] == n
            and self.concept_ids.shape == (n,)
            and self.blend_ids.shape == (n,)
            and self.mask.shape == (n, n)
        ):
            raise ValueError("inconsistent batch field shapes")
        if self.mask.dtype != np.bool_:
            raise ValueError("mask must be boolean")
        if np.any(np.diag(self.mask)):
            raise ValueError("mask diagonal must be False (positives are not negatives)")

    @property
    def n(self) -> int:
        return self.raw_a.shape[0]


def _prototypes(spec: WorldSpec, rng: np.random.Generator) -> tuple[Mat64, Mat64]:
    """Unit-norm concept prototypes for both modalities."""
    pa = rng.normal(size=(spec.n_concepts, spec.dim_a))
    pb = rng.normal(size=(spec.n_concepts, spec.dim_b))
    pa /= np.linalg.norm(pa, axis=1, keepdims=True)
    pb /= np.linalg.norm(pb, axis=1, keepdims=True)
    return pa, pb


def _style_maps(spec: WorldSpec, rng: np.random.Generator) -> tuple[Mat64, Mat64]:
    """Unit-row maps from style space into each modality's raw space.

    Must be drawn from the same generator as the prototypes, after them,
    so style-free worlds consume exactly the prototype draws and stay
    bit-compatible.
    """
    sa = rng.normal(size=(spec.style_dim, spec.dim_a))
    sb = rng.normal(size=(spec.style_dim, spec.dim_b))
    sa /= np.linalg.norm(sa, axis=1, keepdims=True)
    sb /= np.linalg.norm(sb, axis=1, keepdims=True)
    return sa, sb


def _add_styles(spec, base_a, base_b, style_a, style_b, rng) -> None:
    """Draw one fresh style per slot and add it to both views in place."""
    n = base_a.shape[0]
    s = rng.normal(size=(n, spec.style_dim))
    gain = spec.style_scale / np.sqrt(spec.style_dim)
    base_a += gain * (s @ style_a)
    base_b += gain * (s @ style_b)


def _concept_overlap_mask(slot_sets: list[frozenset]) -> np.ndarray:
    n = len(slot_sets)
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j and slot_sets[i] & slot_sets[j]:
                mask[i, j] = True
    return mask


def gen_world(spec: WorldSpec, batch_n: int, rng: np.random.Generator | None = None):
    """Yield an endless stream of PairBatch drawn from the world.

    Prototypes are fixed by spec.seed; the batch stream is driven by
    `rng` (defaults to a fresh generator from spec.seed, stream 1, so the
    prototype draw and the batch stream never share state). Slot types:
    fresh concept, full duplicate (prob false_neg_rate), or partial
    duplicate (prob partial_overlap * false_neg_rate). Duplicates reuse a
    concept uniformly from the slots already placed, so slot 0 is always
    fresh.
    """
    if batch_n < 2:
        raise ValueError("batch_n must be >= 2")
    if rng is None:
        rng = make_rng(spec.seed, stream=1)
    fixed = make_rng(spec.seed, stream=0)
    proto_a, proto_b = _prototypes(spec, fixed)
    styled = spec.style_dim > 0 and spec.style_scale > 0
    if styled:
        style_a, style_b = _style_maps(spec, fixed)
    rho = spec.false_neg_rate
    p_partial = spec.partial_overlap * rho
    while True:
        concept = np.empty(batch_n, dtype=np.int64)
        blend = np.full(batch_n, -1, dtype=np.int64)
        base_a = np.empty((batch_n, spec.dim_a))
        base_b = np.empty((batch_n, spec.dim_b))
        slot_sets: list[frozenset] = []
        for i in range(batch_n):
            u = rng.random() if i > 0 else 1.0
            if u < rho:
                # full duplicate: reuse a concept already in the batch
                c = int(concept[rng.integers(0, i)])
                concept[i] = c
                base_a[i] = proto_a[c]
                base_b[i] = proto_b[c]
                slot_sets.append(frozenset((c,)))
            elif u < rho + p_partial:
                # partial duplicate: even blend of a present concept and a fresh one
                c = int(concept[rng.integers(0, i)])
                other = int(rng.integers(0, spec.n_concepts))
                concept[i] = c
                blend[i] = other
                base_a[i] = 0.5 * (proto_a[c] + proto_a[other])
                base_b[i] = 0.5 * (proto_b[c] + proto_b[other])
                slot_sets.append(frozenset((c, other)))
            else:
                c = int(rng.integers(0, spec.n_concepts))
                concept[i] = c
                base_a[i] = proto_a[c]
                base_b[i] = proto_b[c]
                slot_sets.append(frozenset((c,)))
        if styled:
            _add_styles(spec, base_a, base_b, style_a, style_b, rng)
        raw_a = base_a + spec.emb_noise * rng.normal(size=base_a.shape)
        raw_b = base_b + spec.emb_noise * rng.normal(size=base_b.shape)
        yield PairBatch(
            raw_a=raw_a,
            raw_b=raw_b,
            concept_ids=concept,
            blend_ids=blend,
            mask=_concept_overlap_mask(slot_sets),
        )


def distinct_concept_batch(
    spec: WorldSpec, rng: np.random.Generator
) -> PairBatch:
    """One clean evaluation batch: every concept exactly once, fresh noise.

    Retrieval over this batch is well-posed (each query has a unique true
    match) , so it serves as the validation set for trained encoders.
    """
    fixed = make_rng(spec.seed, stream=0)
    proto_a, proto_b = _prototypes(spec, fixed)
    n = spec.n_concepts
    if n < 2:
        raise ValueError("need at least 2 concepts for a retrieval batch")
    concept = np.arange(n, dtype=np.int64)
    base_a = proto_a.copy()
    base_b = proto_b.copy()
    if spec.style_dim > 0 and spec.style_scale > 0:
        style_a, style_b = _style_maps(spec, fixed)
        _add_styles(spec, base_a, base_b, style_a, style_b, rng)
    raw_a = base_a + spec.emb_noise * rng.normal(size=base_a.shape)
    raw_b = base_b + spec.emb_noise * rng.normal(size=base_b.shape)
    return PairBatch(
        raw_a=raw_a,
        raw_b=raw_b,
        concept_ids=concept,
        blend_ids=np.full(n, -1, dtype=np.int64),
        mask=np.zeros((n, n), dtype=bool),
    )
