"""Acceptance suite: every claim the package makes, checked end to end.

Each test covers one claim, prints a single PASS/FAIL verdict line
(visible with -s, and in the captured output on failure), and asserts
at the tolerance the claim is stated with. Wall-clock budgets are
asserted where a claim includes one; they are sized for a plain
container with no GPU.

The retrieval claims share one set of trained models through a
module-scoped fixture: ten seeds of the headline world, trained once
with the weighted loss and once with the plain loss. The fixture's
build time is charged to the retrieval-win test, which carries the
time budget.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pytest

from srclab import cli
from srclab.losses import LossConfig, info_nce, srcl, srcl_symmetric
from srclab.miverify import (
    deterministic_equality_cell,
    jensen_gap,
    verify_basic_bound,
    verify_controllability,
    verify_general_bound,
)
from srclab.numerics import make_rng
from srclab.regulator import (
    covariance_report,
    exp_similarity,
    max_row_mean_deviation,
    weights_from_similarity,
)
from srclab.synth import (
    WorldSpec,
    make_bsc_joint,
    make_deterministic_joint,
    make_uniform_mixing_joint,
)
from srclab.trainer import TrainConfig, TrainResult, train_student
from srclab.evaluation import repeated_retrieval, threshold_mask_sweep


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# ---------------------------------------------------------------- regulator

SWEEP_INVOCATIONS = 1000
SWEEP_TAUS = (0.05, 0.1, 0.5)
SWEEP_DELTAS = (0.5, 1.0, 2.0)
WEIGHT_FLOOR = 1e-6


def _random_similarity(rng, i: int) -> np.ndarray:
    n = int(rng.integers(4, 129))
    cos = rng.uniform(-1.0, 1.0, size=(n, n))
    return exp_similarity(cos, tau=SWEEP_TAUS[i % len(SWEEP_TAUS)])


def test_regulated_weight_rows_stay_mean_one():
    rng = make_rng(101)
    t0 = time.monotonic()
    worst = 0.0
    for i in range(SWEEP_INVOCATIONS):
        sims = _random_similarity(rng, i)
        wm = weights_from_similarity(
            sims, delta=SWEEP_DELTAS[i % len(SWEEP_DELTAS)], floor=WEIGHT_FLOOR
        )
        worst = max(worst, max_row_mean_deviation(wm))
    elapsed = time.monotonic() - t0
    ok = worst < 1e-9 and elapsed < 10.0
    _verdict(
        "regulated weight rows stay mean-one",
        ok,
        f"max row-mean deviation {worst:.3e} over {SWEEP_INVOCATIONS}"
        f" invocations, {elapsed:.1f}s",
    )
    assert worst < 1e-9
    assert elapsed < 10.0


def test_weights_anticorrelate_with_similarity():
    # Strictness is claimed per row wherever the floored similarities
    # actually vary; rows the floor flattens (and the deliberately
    # constant invocations) must sit at zero covariance instead.
    rng = make_rng(202)
    t0 = time.monotonic()
    worst_strict = -math.inf
    worst_const = 0.0
    n_const_rows = 0
    for i in range(SWEEP_INVOCATIONS):
        if i % 25 == 0:
            n = int(rng.integers(4, 129))
            sims = np.full((n, n), float(np.exp(rng.uniform(-1.0, 1.0))))
        else:
            sims = _random_similarity(rng, i)
        n = sims.shape[0]
        wm = weights_from_similarity(
            sims, delta=SWEEP_DELTAS[i % len(SWEEP_DELTAS)], floor=WEIGHT_FLOOR
        )
        covs = covariance_report(wm, sims)
        neg = np.where(~np.eye(n, dtype=bool), np.maximum(sims, WEIGHT_FLOOR), np.nan)
        varying = (np.nanmax(neg, axis=1) - np.nanmin(neg, axis=1)) > 0.0
        if varying.any():
            worst_strict = max(worst_strict, float(covs[varying].max()))
        if (~varying).any():
            n_const_rows += int((~varying).sum())
            worst_const = max(worst_const, float(np.abs(covs[~varying]).max()))
    elapsed = time.monotonic() - t0
    ok = worst_strict < 0.0 and worst_const <= 1e-12 and elapsed < 10.0
    _verdict(
        "weights anticorrelate with similarity",
        ok,
        f"max covariance on varying rows {worst_strict:.3e}, "
        f"|cov| on {n_const_rows} constant rows <= {worst_const:.3e}, {elapsed:.1f}s",
    )
    assert worst_strict < 0.0
    assert worst_const <= 1e-12
    assert elapsed < 10.0


# ------------------------------------------------------------------- bounds

MC_BATCHES = 100_000


def test_contrastive_bound_holds_on_channel_grid():
    t0 = time.monotonic()
    stream = 0
    checked = 0
    for p in (0.6, 0.8, 0.95):
        joint = make_bsc_joint(p)
        for n in (2, 8, 32, 128):
            rep = verify_basic_bound(joint, n, MC_BATCHES, make_rng(0, stream))
            stream += 1
            assert rep.passed, f"p={p} N={n}"
            assert (
                math.log(n) - rep.loss_estimate <= rep.mi_pos + 3.0 * rep.stderr
            ), f"p={p} N={n}"
            checked += 1
    eq = deterministic_equality_cell(4)
    eq_ok = abs(eq.gap) <= 1e-9 and eq.loss_estimate == 0.0
    elapsed = time.monotonic() - t0
    ok = eq_ok and elapsed < 120.0
    _verdict(
        "contrastive bound holds on the channel grid",
        ok,
        f"{checked} Monte Carlo cells at {MC_BATCHES} batches, "
        f"deterministic-cell gap {eq.gap:.2e}, {elapsed:.1f}s",
    )
    assert eq_ok
    assert elapsed < 120.0


def test_bound_survives_duplicate_positive_contamination():
    t0 = time.monotonic()
    joint = make_bsc_joint(0.8)
    stream = 200
    checked = 0
    for eta in (0.1, 0.3, 0.5):
        for n in (8, 32):
            rep = verify_general_bound(joint, eta, n, MC_BATCHES, make_rng(0, stream))
            stream += 1
            assert rep.applicable, f"eta={eta} N={n}"
            assert rep.passed, f"eta={eta} N={n}"
            assert (
                rep.mi_pos - rep.mi_neg_expect
                >= math.log(n) - rep.loss_estimate - 3.0 * rep.stderr
            ), f"eta={eta} N={n}"
            checked += 1
    flagged = verify_general_bound(
        make_deterministic_joint(4), 0.9, 8, MC_BATCHES, make_rng(0, stream)
    )
    flag_ok = (not flagged.applicable) and flagged.passed
    elapsed = time.monotonic() - t0
    ok = flag_ok and elapsed < 120.0
    _verdict(
        "bound survives duplicate-positive contamination",
        ok,
        f"{checked} mixture cells pass, eta=0.9 cell flagged inapplicable"
        f" (share {flagged.premise.fn_share:.2f}), {elapsed:.1f}s",
    )
    assert flag_ok
    assert elapsed < 120.0


def test_ratio_estimates_obey_jensen_ordering():
    worst_slack = math.inf
    for p in (0.6, 0.8, 0.95):
        joint = make_bsc_joint(p)
        for eta in (0.0, 0.1, 0.3, 0.5):
            jr = jensen_gap(joint, eta)
            assert jr.lhs <= jr.rhs + 1e-12, f"p={p} eta={eta}"
            assert jr.lhs <= jr.rhs_global + 1e-12, f"p={p} eta={eta}"
            # dependent channels must be strictly inside the inequality
            assert jr.rhs - jr.lhs > 1e-9, f"p={p} eta={eta}"
            worst_slack = min(worst_slack, jr.rhs - jr.lhs)
    flat = jensen_gap(make_bsc_joint(0.5), 0.3)
    eq_gap = abs(flat.rhs - flat.lhs)
    ok = eq_gap <= 1e-12
    _verdict(
        "ratio estimates obey Jensen ordering",
        ok,
        f"min strict slack {worst_slack:.3e}, constant-ratio gap {eq_gap:.1e}",
    )
    assert eq_gap <= 1e-12


def test_negative_pool_information_is_steerable():
    worst_residual = 0.0
    for label, joint in (
        ("two-symbol", make_bsc_joint(0.8)),
        ("four-symbol", make_uniform_mixing_joint(4, 0.7)),
    ):
        for eta in (0.5, 0.95, 1.0):
            rep = verify_controllability(joint, eta, enforce_optimum=eta >= 0.95)
            assert rep.weighted_premise_holds, f"{label} eta={eta}"
            assert rep.max_mean_dev < 1e-9, f"{label} eta={eta}"
            assert rep.max_covariance <= 1e-12, f"{label} eta={eta}"
            if rep.optimum_enforced:
                assert abs(rep.residual) < 0.05, f"{label} eta={eta}"
                worst_residual = max(worst_residual, abs(rep.residual))
    _verdict(
        "negative-pool information is steerable",
        True,
        f"worst enforced-optimum residual {worst_residual:.4f} nats (< 0.05)",
    )


# ------------------------------------------------------------------- losses

def test_analytic_gradients_match_finite_differences(tmp_path):
    assert cli.GRAD_INSTANCES == 100
    t0 = time.monotonic()
    rc = cli.main(["gradcheck", "--out", str(tmp_path)])
    elapsed = time.monotonic() - t0
    lines = [
        json.loads(row)
        for row in (tmp_path / "gradcheck.jsonl").read_text().splitlines()
    ]
    cells = [row for row in lines if row.get("kind") == "gradcheck"]
    worst = max(row["max_rel_err"] for row in cells)
    ok = rc == 0 and len(cells) == 8 and worst < 1e-4 and elapsed < 30.0
    _verdict(
        "analytic gradients match finite differences",
        ok,
        f"{cli.GRAD_INSTANCES} instances per loss, both directions,"
        f" worst rel err {worst:.2e}, {elapsed:.1f}s",
    )
    assert rc == 0
    assert len(cells) == 8
    assert all(row["passed"] for row in cells)
    assert worst < 1e-4
    assert elapsed < 30.0


def test_unit_weights_reduce_weighted_loss_to_plain():
    rng = make_rng(808)
    taus = (0.05, 0.1, 0.5, 1.0)
    directions = ("a_to_b", "b_to_a", "symmetric_sum")
    worst = 0.0
    for i in range(1000):
        n = int(rng.integers(2, 17))
        d = int(rng.integers(3, 9))
        a = rng.normal(size=(n, d))
        b = rng.normal(size=(n, d))
        cfg = LossConfig(tau=taus[i % 4], direction=directions[i % 3])
        base = info_nce(a, b, cfg)
        ones = np.ones((n, n))
        if cfg.direction == "symmetric_sum":
            out = srcl_symmetric(a, b, ones, ones, cfg)
        else:
            out = srcl(a, b, ones, cfg)
        worst = max(
            worst,
            abs(out.value - base.value),
            float(np.abs(out.grad_a - base.grad_a).max()),
            float(np.abs(out.grad_b - base.grad_b).max()),
            float(np.abs(out.per_anchor - base.per_anchor).max()),
        )
    ok = worst < 1e-12
    _verdict(
        "unit weights reduce the weighted loss to the plain one",
        ok,
        f"max |difference| {worst:.1e} over 1000 batches, values and gradients",
    )
    assert worst < 1e-12


# ---------------------------------------------------------------- retrieval

HEADLINE_SEEDS = range(10)
SWEEP_THRESHOLDS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


@dataclass(frozen=True)
class _SeedRun:
    seed: int
    spec: WorldSpec
    cfg: TrainConfig
    weighted: TrainResult
    r1_weighted: float
    r1_plain: float


@pytest.fixture(scope="module")
def headline() -> tuple[list[_SeedRun], float]:
    runs = []
    t0 = time.monotonic()
    for seed in HEADLINE_SEEDS:
        spec = WorldSpec(
            n_concepts=64,
            dim_a=32,
            dim_b=48,
            emb_noise=0.1,
            false_neg_rate=0.3,
            partial_overlap=0.5,
            seed=seed,
        )
        cfg = TrainConfig(
            steps=2000,
            batch_n=64,
            lr=0.05,
            momentum=0.9,
            tau=0.1,
            loss="srcl",
            emb_dim=8,
            teacher_steps=500,
            teacher_emb_dim=32,
            mask_threshold=0.45,
            seed=seed,
        )
        weighted = train_student(spec, cfg)
        plain = train_student(spec, replace(cfg, loss="infonce"))
        r1_w = repeated_retrieval(weighted.enc_a, weighted.enc_b, spec).r1_mean
        r1_p = repeated_retrieval(plain.enc_a, plain.enc_b, spec).r1_mean
        runs.append(_SeedRun(seed, spec, cfg, weighted, r1_w, r1_p))
    return runs, time.monotonic() - t0


def test_weighted_training_wins_retrieval_under_duplicates(headline):
    runs, setup_s = headline
    t0 = time.monotonic()
    diffs = [run.r1_weighted - run.r1_plain for run in runs]
    wins = sum(d > 0.0 for d in diffs)
    mean_diff = float(np.mean(diffs))
    elapsed = setup_s + (time.monotonic() - t0)
    ok = wins >= 8 and mean_diff > 0.0 and elapsed < 600.0
    _verdict(
        "weighted training wins retrieval under duplicates",
        ok,
        f"wins {wins}/10 paired seeds, mean R@1 edge {mean_diff:+.4f}, {elapsed:.0f}s",
    )
    assert wins >= 8
    assert mean_diff > 0.0
    assert elapsed < 600.0


def test_exclusion_threshold_peaks_inside_the_grid(headline):
    runs, _ = headline
    interior = 0
    peaks = []
    for run in runs:
        points = threshold_mask_sweep(
            run.spec, run.cfg, SWEEP_THRESHOLDS, teacher=run.weighted.teacher
        )
        scores = [point.report.r1_mean for point in points]
        best = int(np.argmax(scores))
        peaks.append(SWEEP_THRESHOLDS[best])
        if 0 < best < len(SWEEP_THRESHOLDS) - 1:
            interior += 1
    ok = interior >= 7
    _verdict(
        "exclusion threshold peaks inside the grid",
        ok,
        f"interior peak in {interior}/10 seeds, peak thresholds {peaks}",
    )
    assert interior >= 7


def test_duplicate_slots_carry_lower_weight(headline):
    runs, _ = headline
    gaps = []
    for run in runs:
        tail = run.weighted.history[-200:]
        fn = float(np.nanmean([row.mean_false_neg_weight for row in tail]))
        tn = float(np.nanmean([row.mean_true_neg_weight for row in tail]))
        gaps.append(tn - fn)
    separated = sum(g > 0.0 for g in gaps)
    ok = separated == len(runs)
    _verdict(
        "duplicate slots carry lower weight than clean slots",
        ok,
        f"separation in {separated}/10 seeds, weight gap"
        f" min {min(gaps):.3f} / mean {float(np.mean(gaps)):.3f}",
    )
    assert separated == len(runs)


# ------------------------------------------------------------ reproducibility

RERUN_CONFIG = """\
[world]
n_concepts = 16
dim_a = 10
dim_b = 12
emb_noise = 0.1
false_neg_rate = 0.3
partial_overlap = 0.5
seed = 7

[train]
steps = 60
batch_n = 16
lr = 0.05
momentum = 0.9
tau = 0.1
loss = srcl
emb_dim = 6
teacher_steps = 50
mask_threshold = 0.45
seed = 7

[verify]
mc_batches = 1500
seed = 0
p_agree = 0.8
n_values = 2,8
eta_values = 0.3
eta_n_values = 8

[eval]
reps = 8
ks = 1,5
hist_batches = 5
hist_bins = 10
thresholds = 0.0,0.5
"""


def _run_every_command(cfg_path: Path, out: Path) -> None:
    for command in ("train", "eval", "sweep", "verify-bounds", "gradcheck"):
        rc = cli.main([command, str(cfg_path), "--out", str(out)])
        assert rc == 0, command


def test_command_reruns_are_byte_identical(tmp_path):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(RERUN_CONFIG)
    first = tmp_path / "first"
    second = tmp_path / "second"
    _run_every_command(cfg_path, first)
    _run_every_command(cfg_path, second)

    names = sorted(p.name for p in first.iterdir())
    assert names == sorted(p.name for p in second.iterdir())
    assert "student.ckpt" in names and "teacher.ckpt" in names
    diffs = [n for n in names if (first / n).read_bytes() != (second / n).read_bytes()]
    ok = not diffs
    _verdict(
        "command reruns are byte-identical",
        ok,
        f"{len(names)} artifacts compared across five commands"
        + (f", differing: {diffs}" if diffs else ", all identical"),
    )
    assert not diffs
