"""Float64 numerical primitives shared by every other module.

All array code in this package goes through the helpers here so that the
conventions are set once: double precision everywhere, cosine similarity
clamped to [-1, 1], log-sum-exp via max shift, and a counter-based RNG
(numpy's Philox) so that a seed fully determines the stream on every
platform.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Vec64 = np.ndarray
Mat64 = np.ndarray


class DegenerateInputError(ValueError):
    """Raised when an input is structurally unusable (zero norm, empty)."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return a deterministic generator for (seed, stream).

    Philox is counter-based: the state is a 64-bit key plus a counter, no
    platform entropy is involved, and equal (seed, stream) pairs give
    bit-identical draw sequences everywhere. Distinct stream ids give
    independent substreams of the same seed.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not isinstance(stream, (int, np.integer)) or stream < 0:
        raise ValueError("stream must be a nonnegative integer")
    # Philox takes a 128-bit key: low word = seed (as unsigned 64-bit),
    # high word = stream, so (seed, stream) pairs never collide.
    key = (int(seed) & 0xFFFFFFFFFFFFFFFF) | (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _as_f64(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise DegenerateInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def cosine_sim(a: Vec64, b: Vec64) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Inputs are normalized here; callers never pre-normalize. A zero-norm
    vector has no direction, so it is rejected rather than mapped to 0.
    """
    av = _as_f64(a, "a").ravel()
    bv = _as_f64(b, "b").ravel()
    if av.shape != bv.shape:
        raise ValueError(f"shape mismatch: {av.shape} vs {bv.shape}")
    na = np.linalg.norm(av)
    nb = np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine_sim: zero-norm input")
    return float(np.clip(av @ bv / (na * nb), -1.0, 1.0))


def cosine_sim_matrix(a: Mat64, b: Mat64) -> Mat64:
    """All-pairs cosine similarities: rows of `a` against rows of `b`.

    Returns an N x M matrix with entries clamped to [-1, 1]. Any zero-norm
    row in either input is rejected.
    """
    am = np.atleast_2d(_as_f64(a, "a"))
    bm = np.atleast_2d(_as_f64(b, "b"))
    if am.shape[1] != bm.shape[1]:
        raise ValueError(f"dim mismatch: {am.shape[1]} vs {bm.shape[1]}")
    na = np.linalg.norm(am, axis=1)
    nb = np.linalg.norm(bm, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateInputError("cosine_sim_matrix: zero-norm row")
    sims = (am / na[:, None]) @ (bm / nb[:, None]).T
    return np.clip(sims, -1.0, 1.0)


def log_sum_exp(xs: Vec64) -> float:
    """log(sum(exp(xs))) over all entries, with the max shifted out.

    Accepts -inf entries (they drop out of the sum); an all--inf input
    returns -inf. Empty input is rejected: the empty sum has no log.
    """
    arr = np.asarray(xs, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DegenerateInputError("log_sum_exp: empty input")
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise ValueError("log_sum_exp: input must be < +inf and not NaN")
    m = np.max(arr)
    if not np.isfinite(m):
        return float("-inf")
    return float(np.log(np.sum(np.exp(arr - m))) + m)


def log_sum_exp_rows(xs: Mat64) -> np.ndarray:
    """Row-wise log_sum_exp of a 2-D array; same conventions as above."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise DegenerateInputError("log_sum_exp_rows: need a nonempty 2-D array")
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise ValueError("log_sum_exp_rows: input must be < +inf and not NaN")
    m = np.max(arr, axis=1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(arr - m), axis=1)) + m[:, 0]
    return out


def softmax(xs: Vec64, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax along `axis`; rows sum to 1 exactly as computed."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise DegenerateInputError("softmax: empty input")
    if np.any(np.isnan(arr)) or np.any(arr == np.inf):
        raise ValueError("softmax: input must be < +inf and not NaN")
    m = np.max(arr, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(arr - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def grad_check(
    f: Callable[[np.ndarray], float],
    analytic_grad: np.ndarray,
    point: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between `analytic_grad` and central differences.

    Per coordinate k the numeric gradient is
    (f(x + h e_k) - f(x - h e_k)) / (2h) and the error is
    |num - ana| / max(1, |ana|), so tiny gradients are compared absolutely
    and large ones relatively. Returns the max over coordinates.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step {step} outside [1e-7, 1e-3]")
    x = np.array(point, dtype=np.float64)
    ana = np.asarray(analytic_grad, dtype=np.float64)
    if ana.shape != x.shape:
        raise ValueError(f"gradient shape {ana.shape} does not match point {x.shape}")
    flat = x.ravel()
    ana_flat = ana.ravel()
    worst = 0.0
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + step
        f_plus = f(x)
        flat[k] = keep - step
        f_minus = f(x)
        flat[k] = keep
        num = (f_plus - f_minus) / (2.0 * step)
        err = abs(num - ana_flat[k]) / max(1.0, abs(ana_flat[k]))
        if err > worst:
            worst = err
    return worst
