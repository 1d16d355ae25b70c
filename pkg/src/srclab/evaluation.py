"""Retrieval metrics and weight diagnostics for trained encoder pairs.

Evaluation batches come from the world's distinct-concept sampler, so
every query has exactly one true match and R@K is well defined. All
metrics are deterministic: ranking ties break toward the lower gallery
index, and the repeated-evaluation protocol draws its noise from a fixed
seed, which makes scores comparable across training methods (both arms
see the same evaluation noise).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import Mat64, cosine_sim_matrix, make_rng
from .regulator import TeacherHandle, alpha_at
from .synth import WorldSpec, distinct_concept_batch, gen_world
from .trainer import Encoder, TrainConfig, TrainResult, student_weights, train_student

# seed of the shared evaluation noise stream; every repeated evaluation
# starts an identical generator so different models are scored on
# literally the same batches
EVAL_SEED = 999

# rng stream id for histogram batches under the config seed (the trainer
# owns 10..13)
_STREAM_HISTOGRAM = 20


@dataclass(frozen=True)
class RetrievalReport:
    """Recall at K for both retrieval directions.

    r_at_ab[k] is the fraction of a-side queries whose true b-side match
    ranks in the top K, and r_at_ba the reverse. n_queries counts queries
    per direction, summed over evaluation repeats.
    """

    r_at_ab: dict[int, float]
    r_at_ba: dict[int, float]
    n_queries: int

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if set(self.r_at_ab) != set(self.r_at_ba):
            raise ValueError("directions must report the same K values")
        for r_at in (self.r_at_ab, self.r_at_ba):
            last = 0.0
            for k in sorted(r_at):
                v = r_at[k]
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"recall out of range at K={k}: {v}")
                if v < last:
                    raise ValueError("recall must be monotone in K")
                last = v

    @property
    def r1_mean(self) -> float:
        """Average of the two directions' R@1; the headline scalar."""
        return 0.5 * (self.r_at_ab[1] + self.r_at_ba[1])


@dataclass(frozen=True)
class WeightHistogram:
    """Distribution of emitted negative weights over fresh batches.

    Both loss directions are pooled, so the counts sum to
    2 * n_batches * n * (n - 1). Split means separate slots that truly
    share a concept with their anchor (injected duplicates) from
    genuinely distinct slots, using the generator's ground-truth mask.
    """

    edges: np.ndarray
    counts: np.ndarray
    n_batches: int
    mean_false_neg: float
    mean_true_neg: float

    def __post_init__(self):
        if self.edges.ndim != 1 or self.counts.ndim != 1:
            raise ValueError("edges and counts must be 1-d")
        if len(self.edges) != len(self.counts) + 1:
            raise ValueError("need one more edge than count")
        if np.any(self.counts < 0):
            raise ValueError("negative bin count")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def recall_at_k(
    query_embs: Mat64,
    gallery_embs: Mat64,
    ground_truth_index: np.ndarray,
    ks: tuple[int, ...] = (1, 5, 10),
) -> dict[int, float]:
    """Fraction of queries whose true match ranks in the top K by cosine.

    Ties break toward the lower gallery index, so a distractor earlier in
    the gallery beats an equally similar true match. That keeps the metric
    deterministic and slightly pessimistic.
    """
    sims = cosine_sim_matrix(query_embs, gallery_embs)
    n_q, n_g = sims.shape
    truth = np.asarray(ground_truth_index, dtype=np.int64)
    if truth.shape != (n_q,):
        raise ValueError("need one ground-truth index per query")
    if truth.min() < 0 or truth.max() >= n_g:
        raise ValueError("ground-truth index outside the gallery")
    ks = tuple(int(k) for k in ks)
    for k in ks:
        if not 1 <= k <= n_g:
            raise ValueError(f"K={k} exceeds gallery size {n_g}")
    s_true = sims[np.arange(n_q), truth]
    better = (sims > s_true[:, None]).sum(axis=1)
    tie_lower = (
        (sims == s_true[:, None]) & (np.arange(n_g)[None, :] < truth[:, None])
    ).sum(axis=1)
    rank = better + tie_lower
    return {k: float(np.mean(rank < k)) for k in ks}


def retrieval_report(
    enc_a: Encoder,
    enc_b: Encoder,
    batch,
    ks: tuple[int, ...] = (1, 5, 10),
) -> RetrievalReport:
    """Both-direction R@K on one paired batch (slot i matches slot i)."""
    emb_a = enc_a.forward(batch.raw_a)
    emb_b = enc_b.forward(batch.raw_b)
    truth = np.arange(batch.n, dtype=np.int64)
    return RetrievalReport(
        r_at_ab=recall_at_k(emb_a, emb_b, truth, ks),
        r_at_ba=recall_at_k(emb_b, emb_a, truth, ks),
        n_queries=batch.n,
    )


def repeated_retrieval(
    enc_a: Encoder,
    enc_b: Encoder,
    spec: WorldSpec,
    reps: int = 128,
    ks: tuple[int, ...] = (1, 5, 10),
    rng: np.random.Generator | None = None,
) -> RetrievalReport:
    """R@K averaged over `reps` fresh distinct-concept batches.

    A single batch's R@1 is quantized to multiples of 1/n and noisy at
    the level that matters for method comparisons; averaging over fresh
    evaluation noise fixes that. With the default rng every call scores
    on the same batch sequence, so reports for different models are
    paired.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if rng is None:
        rng = make_rng(EVAL_SEED)
    sum_ab = dict.fromkeys(ks, 0.0)
    sum_ba = dict.fromkeys(ks, 0.0)
    for _ in range(reps):
        rep = retrieval_report(enc_a, enc_b, distinct_concept_batch(spec, rng), ks)
        for k in ks:
            sum_ab[k] += rep.r_at_ab[k]
            sum_ba[k] += rep.r_at_ba[k]
    return RetrievalReport(
        r_at_ab={k: sum_ab[k] / reps for k in ks},
        r_at_ba={k: sum_ba[k] / reps for k in ks},
        n_queries=reps * spec.n_concepts,
    )


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    report: RetrievalReport
    skipped_rows: int  # anchors that lost every negative during training


def threshold_mask_sweep(
    spec: WorldSpec,
    cfg: TrainConfig,
    thresholds: list[float],
    teacher: TeacherHandle | None = None,
    reps: int = 128,
) -> list[SweepPoint]:
    """Retrain the student at each exclusion threshold and score R@K.

    Every cell starts from the same seed (hence the same initialization
    and batch sequence) and shares one teacher, so the threshold is the
    only thing that varies. Thresholds must be ascending and start from a
    full retrain; cells below the smallest emitted weight reproduce the
    unmasked run exactly.
    """
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be ascending")
    if cfg.loss != "srcl":
        raise ValueError("the sweep only makes sense for the weighted loss")
    points = []
    for theta in thresholds:
        res = train_student(spec, replace(cfg, mask_threshold=theta), teacher=teacher)
        if teacher is None:
            teacher = res.teacher  # train once, reuse for the rest
        rep = repeated_retrieval(res.enc_a, res.enc_b, spec, reps=reps)
        skipped = sum(row.skipped for row in res.history)
        points.append(SweepPoint(threshold=theta, report=rep, skipped_rows=skipped))
    return points


def sweep_csv(points: list[SweepPoint]) -> str:
    lines = ["threshold,r_at_1_ab,r_at_1_ba,skipped_rows"]
    for p in points:
        lines.append(
            f"{p.threshold:g},{p.report.r_at_ab[1]:.10g},"
            f"{p.report.r_at_ba[1]:.10g},{p.skipped_rows}"
        )
    return "\n".join(lines) + "\n"


def weight_histogram(
    result: TrainResult, n_batches: int, bins: int = 40
) -> WeightHistogram:
    """Histogram the regulator's raw emitted weights over fresh batches.

    Weights are taken before any threshold masking (the histogram is the
    diagnostic that justifies a threshold) at the blend the run ended on.
    A plain-loss result weighs every negative 1, which shows up as a
    single spike.
    """
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    cfg = result.config
    spec = result.world
    if cfg.loss == "srcl" and result.teacher is None:
        raise ValueError("weighted-loss result is missing its teacher")
    batches = gen_world(
        spec, cfg.batch_n, make_rng(cfg.seed, stream=_STREAM_HISTOGRAM)
    )
    alpha = alpha_at(cfg.regulator.alpha_schedule, cfg.steps - 1, cfg.steps)
    off = ~np.eye(cfg.batch_n, dtype=bool)
    pool, pool_fn, pool_tn = [], [], []
    for _ in range(n_batches):
        batch = next(batches)
        if cfg.loss == "srcl":
            w_ab, w_ba = student_weights(
                result.teacher,
                result.enc_a,
                result.enc_b,
                batch.raw_a,
                batch.raw_b,
                alpha,
                cfg,
            )
            wm_ab, wm_ba = w_ab.w, w_ba.w
        else:
            wm_ab = wm_ba = np.ones((batch.n, batch.n))
        fn = batch.mask & off
        tn = ~batch.mask & off
        pool.append(wm_ab[off])
        pool.append(wm_ba[off])
        pool_fn.extend((wm_ab[fn], wm_ba[fn.T]))
        pool_tn.extend((wm_ab[tn], wm_ba[tn.T]))
    flat = np.concatenate(pool)
    w_max = max(float(flat.max()), 1.0)
    counts, edges = np.histogram(flat, bins=bins, range=(0.0, w_max))
    flat_fn = np.concatenate(pool_fn)
    flat_tn = np.concatenate(pool_tn)
    return WeightHistogram(
        edges=edges,
        counts=counts,
        n_batches=n_batches,
        mean_false_neg=float(flat_fn.mean()) if flat_fn.size else float("nan"),
        mean_true_neg=float(flat_tn.mean()) if flat_tn.size else float("nan"),
    )
