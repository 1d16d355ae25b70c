"""Numerical verification of the information bounds behind the losses.

Every check here contrasts a Monte Carlo estimate of a contrastive loss
(with the critic fixed to the true density ratio, the idealized optimum)
against exact quantities computed by direct summation over a small
discrete joint. The three claims under test:

* basic bound, independent negatives: I(x, y) >= log N - L;
* general bound, negatives drawn from an eta-mixture of the anchor's
  conditional and the marginal: I(x, y) - I_neg >= log N - L, where
  I_neg is the mutual information carried by the negative process;
* controllability: with inverse-ratio weights normalized to unit mean
  over the negative process, the weighted loss's leftover term
  E log(1/w) matches I_neg, so the weights decide how much negative
  information survives in the bound.

The general bound's derivation assumes false negatives are a minority of
the negative pool and that the positive dominates them in expected
density ratio; `ratio_premise` checks both and the bound reports are
flagged inapplicable (not failed) when either breaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import Mat64, make_rng
from .synth import DiscreteJoint, mixture_conditional, sample_batches_vectorized

PREMISE_TOL = 1e-12
EQUALITY_TOL = 1e-9
MINORITY_SHARE = 0.5


@dataclass(frozen=True)
class DensityRatioOracle:
    """Exact density ratios r(x, y) = p(y|x) / p(y) for a discrete joint.

    Rows satisfy sum_y p(y) r(x, y) = 1 (the ratio is a density w.r.t.
    the marginal); entries are 0 exactly where p(x, y) = 0.
    """

    joint: DiscreteJoint
    ratios: Mat64

    @classmethod
    def from_joint(cls, joint: DiscreteJoint) -> "DensityRatioOracle":
        cond = joint.conditional_y_given_x()
        ratios = cond / joint.marginal_y()[None, :]
        ratios = ratios.copy()
        ratios.setflags(write=False)
        return cls(joint=joint, ratios=ratios)

    def normalization_defect(self) -> float:
        """max_x |sum_y p(y) r(x, y) - 1|; should be float noise."""
        s = self.ratios @ self.joint.marginal_y()
        return float(np.max(np.abs(s - 1.0)))


def exact_mi(joint: DiscreteJoint) -> float:
    """Mutual information in nats by direct summation, skipping zero cells."""
    t = joint.table
    px = joint.marginal_x()[:, None]
    py = joint.marginal_y()[None, :]
    nz = t > 0
    return float(np.sum(t[nz] * np.log(t[nz] / (px * py)[nz])))


def mixture_mi(joint: DiscreteJoint, eta: float) -> float:
    """Mutual information of the negative process (anchor x, negative y).

    The process draws x ~ p(x) and y ~ q(y|x) with q the eta-mixture; its
    y-marginal is p(y), so this is sum_x p(x) sum_y q log(q / p(y)).
    eta = 0 gives 0 (independent negatives); eta = 1 gives exact_mi.
    """
    q = mixture_conditional(joint, eta)
    px = joint.marginal_x()
    py = joint.marginal_y()
    nz = q > 0
    contrib = np.zeros_like(q)
    contrib[nz] = q[nz] * np.log(q[nz] / np.broadcast_to(py, q.shape)[nz])
    return float(px @ contrib.sum(axis=1))


def expected_ratio_positive(joint: DiscreteJoint) -> float:
    """E over positive pairs of the density ratio; 1 + chi-square, >= 1."""
    oracle = DensityRatioOracle.from_joint(joint)
    return float(np.sum(joint.table * oracle.ratios))


def expected_ratio_negative(joint: DiscreteJoint, eta: float) -> float:
    """E over the negative process of the (true) density ratio."""
    oracle = DensityRatioOracle.from_joint(joint)
    q = mixture_conditional(joint, eta)
    return float(joint.marginal_x() @ np.sum(q * oracle.ratios, axis=1))


@dataclass(frozen=True)
class PremiseReport:
    """Applicability of the general bound's derivation to a construction.

    ratio_lhs / ratio_rhs are the expected density ratios at negatives
    and positives; dominance requires lhs <= rhs. fn_share measures how
    much of the positives' informativeness the negatives carry,
    (E_neg[r] - 1) / (E_pos[r] - 1); the derivation treats false
    negatives as a minority, so shares above 1/2 are flagged. For the
    eta-mixture the share equals eta exactly.
    """

    ratio_lhs: float
    ratio_rhs: float
    fn_share: float
    dominance_holds: bool
    minority_holds: bool

    @property
    def applicable(self) -> bool:
        return self.dominance_holds and self.minority_holds


def ratio_premise(joint: DiscreteJoint, eta: float) -> PremiseReport:
    lhs = expected_ratio_negative(joint, eta)
    rhs = expected_ratio_positive(joint)
    denom = rhs - 1.0
    share = (lhs - 1.0) / denom if denom > PREMISE_TOL else 0.0
    return PremiseReport(
        ratio_lhs=lhs,
        ratio_rhs=rhs,
        fn_share=share,
        dominance_holds=lhs <= rhs + PREMISE_TOL,
        minority_holds=share <= MINORITY_SHARE + PREMISE_TOL,
    )


@dataclass(frozen=True)
class BoundReport:
    """One grid cell of a bound verification.

    lhs >= rhs is the claim; gap = lhs - rhs. rhs = log N - L_hat where
    L_hat is the Monte Carlo loss with the oracle ratio as critic.
    passed uses a 3-standard-error allowance on the estimate; an
    inapplicable cell records quantities but asserts nothing.
    """

    name: str
    n: int
    eta: float
    n_batches: int
    mi_pos: float
    mi_neg_expect: float
    loss_estimate: float
    stderr: float
    lhs: float
    rhs: float
    applicable: bool
    passed: bool
    premise: PremiseReport

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs


def _mc_ratio_loss(
    joint: DiscreteJoint,
    eta: float,
    n: int,
    n_batches: int,
    rng: np.random.Generator,
    chunk: int = 50_000,
) -> tuple[float, float]:
    """Monte Carlo contrastive loss with the oracle ratio as critic.

    Per batch: positive pair from the joint, n - 1 negatives from the
    eta-mixture, loss = -log[r_pos / (r_pos + sum_j r_j)]. Returns the
    mean and its standard error.
    """
    oracle = DensityRatioOracle.from_joint(joint)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_batches:
        b = min(chunk, n_batches - done)
        xs, ys = sample_batches_vectorized(joint, n, eta, b, rng)
        r = oracle.ratios[xs[:, None], ys]
        r_pos = r[:, 0]
        losses = np.log(r_pos + r[:, 1:].sum(axis=1)) - np.log(r_pos)
        total += float(losses.sum())
        total_sq += float((losses**2).sum())
        done += b
    mean = total / n_batches
    var = max(total_sq / n_batches - mean**2, 0.0)
    stderr = math.sqrt(var / n_batches)
    return mean, stderr


def verify_basic_bound(
    joint: DiscreteJoint, n: int, n_batches: int, rng: np.random.Generator
) -> BoundReport:
    """Check I >= log N - L_hat with negatives iid from the marginal."""
    return verify_general_bound(joint, 0.0, n, n_batches, rng, name="basic")


def verify_general_bound(
    joint: DiscreteJoint,
    eta: float,
    n: int,
    n_batches: int,
    rng: np.random.Generator,
    name: str = "general",
) -> BoundReport:
    """Check I - I_neg >= log N - L_hat with eta-mixture negatives.

    The premise is evaluated first; when it fails the cell is flagged
    inapplicable and passed stays True vacuously (nothing is asserted),
    so grid runners can tell "held" from "out of scope".
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if n_batches < 2:
        raise ValueError("n_batches must be >= 2")
    premise = ratio_premise(joint, eta)
    mi_pos = exact_mi(joint)
    mi_neg = mixture_mi(joint, eta)
    loss, stderr = _mc_ratio_loss(joint, eta, n, n_batches, rng)
    lhs = mi_pos - mi_neg
    rhs = math.log(n) - loss
    return BoundReport(
        name=name,
        n=n,
        eta=eta,
        n_batches=n_batches,
        mi_pos=mi_pos,
        mi_neg_expect=mi_neg,
        loss_estimate=loss,
        stderr=stderr,
        lhs=lhs,
        rhs=rhs,
        applicable=premise.applicable,
        passed=(lhs >= rhs - 3.0 * stderr) if premise.applicable else True,
        premise=premise,
    )


def deterministic_equality_cell(k: int = 4) -> BoundReport:
    """Closed-form tightness cell: k-symbol deterministic joint, N = k.

    With the batch holding each symbol exactly once, every negative has
    ratio 0, the positive has ratio k, so L = 0 and
    log N - L = log k = I: the bound is met with equality. No sampling
    is involved; stderr is 0.
    """
    from .synth import make_deterministic_joint

    joint = make_deterministic_joint(k)
    oracle = DensityRatioOracle.from_joint(joint)
    # anchor symbol 0, positive symbol 0, negatives = the other k - 1 symbols
    r_pos = oracle.ratios[0, 0]
    r_negs = oracle.ratios[0, 1:]
    loss = float(np.log(r_pos + r_negs.sum()) - np.log(r_pos))
    mi = exact_mi(joint)
    premise = ratio_premise(joint, 0.0)
    return BoundReport(
        name="deterministic-equality",
        n=k,
        eta=0.0,
        n_batches=0,
        mi_pos=mi,
        mi_neg_expect=0.0,
        loss_estimate=loss,
        stderr=0.0,
        lhs=mi,
        rhs=math.log(k) - loss,
        applicable=True,
        passed=abs(mi - (math.log(k) - loss)) <= EQUALITY_TOL,
        premise=premise,
    )


@dataclass(frozen=True)
class JensenReport:
    """Both sides of E log(ratio) <= log E(ratio) over the negative process.

    lhs = E_x E_{y~q} log r(x, y); rhs = E_x log E_{y~q} r(x, y) (the
    per-anchor form the bound derivation actually uses); rhs_global
    applies the outer expectation before the log. lhs is -inf when the
    negative process can land on zero-ratio cells.
    """

    lhs: float
    rhs: float
    rhs_global: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + PREMISE_TOL


def jensen_gap(joint: DiscreteJoint, eta: float) -> JensenReport:
    oracle = DensityRatioOracle.from_joint(joint)
    q = mixture_conditional(joint, eta)
    px = joint.marginal_x()
    r = oracle.ratios

    lhs_rows = np.zeros(joint.nx)
    for x in range(joint.nx):
        live = q[x] > 0
        if np.any(r[x, live] <= 0):
            lhs_rows[x] = -np.inf
        else:
            lhs_rows[x] = float(q[x, live] @ np.log(r[x, live]))
    lhs = float(px @ lhs_rows) if np.all(np.isfinite(lhs_rows)) else -math.inf

    row_means = np.sum(q * r, axis=1)
    rhs = float(px @ np.log(row_means))
    rhs_global = float(math.log(px @ row_means))
    return JensenReport(lhs=lhs, rhs=rhs, rhs_global=rhs_global)


@dataclass(frozen=True)
class ControllabilityReport:
    """Idealized-optimum weight construction versus the exact target.

    predicted = E log(1/w) under the negative process; target is the
    process's mutual information. residual = predicted - target is
    exactly log E_q[1/r] - KL(q || p(.|x)) averaged over anchors, which
    vanishes when negatives are drawn from the anchor conditional itself
    (eta = 1) over a full-support joint. optimum_enforced marks cells
    where the construction pins the residual near zero by design.
    """

    eta: float
    predicted_mi_neg: float
    target_mi_neg: float
    residual: float
    max_mean_dev: float
    max_covariance: float
    weighted_premise_holds: bool
    optimum_enforced: bool


def inverse_ratio_weights(ratios_row: np.ndarray) -> np.ndarray:
    """Raw weights proportional to 1 / ratio (the safe direction)."""
    return 1.0 / ratios_row


def verify_controllability(
    joint: DiscreteJoint,
    eta: float,
    enforce_optimum: bool = False,
    weight_rule: Callable[[np.ndarray], np.ndarray] = inverse_ratio_weights,
) -> ControllabilityReport:
    """Build oracle-ratio weights and compare E log(1/w) with the target.

    Weights follow the regulator's recipe with the batch mean replaced by
    the process expectation: raw = weight_rule(r), then normalized so
    E_{y~q(.|x)}[w] = 1 per anchor. Both safety conditions are verified
    on the construction before any information quantity is computed; a
    weight rule that correlates positively with the ratio is rejected.
    """
    oracle = DensityRatioOracle.from_joint(joint)
    q = mixture_conditional(joint, eta)
    px = joint.marginal_x()
    cond = joint.conditional_y_given_x()
    r = oracle.ratios

    n_anchors = joint.nx
    predicted_rows = np.zeros(n_anchors)
    mean_devs = np.zeros(n_anchors)
    covs = np.zeros(n_anchors)
    premise_ok = True

    for x in range(n_anchors):
        live = q[x] > 0
        if np.any(r[x, live] <= 0):
            raise ValueError(
                "controllability construction needs strictly positive ratios "
                "on the negative process's support"
            )
        rx = r[x, live]
        qx = q[x, live]
        raw = np.asarray(weight_rule(rx), dtype=np.float64)
        if raw.shape != rx.shape or np.any(raw <= 0):
            raise ValueError("weight rule must return positive weights per slot")
        w = raw / float(qx @ raw)

        mean_devs[x] = abs(float(qx @ w) - 1.0)
        cov = float(qx @ (w * rx)) - float(qx @ w) * float(qx @ rx)
        covs[x] = cov
        if cov > PREMISE_TOL:
            raise ValueError(
                "weight rule violates the covariance condition: weights must "
                "anti-correlate with the density ratio"
            )
        # weighted covariance inequality: E[w r] <= E[r] (given E[w] = 1)
        if float(qx @ (w * rx)) > float(qx @ rx) + PREMISE_TOL:
            raise ValueError("weighted mean ratio exceeded the unweighted mean")
        # weighted premise: weighted negatives stay below the positive's
        # conditional expected ratio
        pos_ratio = float(cond[x] @ r[x])
        if float(qx @ (w * rx)) > pos_ratio + PREMISE_TOL:
            premise_ok = False
        predicted_rows[x] = float(qx @ np.log(1.0 / w))

    predicted = float(px @ predicted_rows)
    target = mixture_mi(joint, eta)
    return ControllabilityReport(
        eta=eta,
        predicted_mi_neg=predicted,
        target_mi_neg=target,
        residual=predicted - target,
        max_mean_dev=float(mean_devs.max()),
        max_covariance=float(covs.max()),
        weighted_premise_holds=premise_ok,
        optimum_enforced=enforce_optimum,
    )


def bound_gap_curve(
    joint: DiscreteJoint,
    ns: list[int],
    eta: float,
    n_batches: int,
    seed: int,
) -> list[BoundReport]:
    """Bound reports across batch sizes, one independent RNG stream each."""
    return [
        verify_general_bound(
            joint, eta, n, n_batches, make_rng(seed, stream=i),
            name="basic" if eta == 0.0 else "general",
        )
        for i, n in enumerate(ns)
    ]
