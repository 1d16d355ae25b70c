"""Training loops for the two-tower contrastive models.

Everything is hand-rolled on numpy: encoders with analytic gradients,
momentum SGD, and two loops. The teacher trains on a cleaned copy of the
world (no injected duplicates) with the plain loss; the student trains
on the noisy world with either the plain loss or the weighted one, where
per-negative weights come from the regulator fed by a teacher/student
similarity blend.

Weights enter the loss as constants: the similarity matrices used to
build them are detached by construction, since gradients are derived by
hand and simply never touch that path.

Determinism is a hard requirement. Every random draw is tied to the
config seed through fixed stream ids, so a rerun reproduces parameters,
batches, and history bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .losses import LossConfig, info_nce, srcl_symmetric
from .numerics import Mat64, cosine_sim_matrix, make_rng
from .regulator import (
    RegulatorConfig,
    TeacherHandle,
    alpha_at,
    blended_similarity,
    exp_similarity,
    weights_from_similarity,
)
from .synth import WorldSpec, gen_world

CHECKPOINT_MAGIC = b"SRLB"
CHECKPOINT_VERSION = 1

# rng stream ids under the config seed; keep distinct from the world's
# streams 0 (prototypes) and 1 (default batch stream)
_STREAM_TEACHER_INIT = 10
_STREAM_TEACHER_BATCHES = 11
_STREAM_STUDENT_INIT = 12
_STREAM_STUDENT_BATCHES = 13


class Encoder:
    """Affine or one-hidden-layer tanh map from raw features to embeddings.

    hidden=0 gives E = X W + b; hidden>0 gives E = tanh(X W1 + b1) W2 + b2.
    Gradients are analytic and recompute the forward pass internally, so
    the encoder itself carries no training-time state.
    """

    def __init__(self, dim_in: int, dim_out: int, hidden: int = 0, rng=None):
        if dim_in < 1 or dim_out < 1 or hidden < 0:
            raise ValueError("bad encoder dimensions")
        if rng is None:
            raise ValueError("pass an rng to initialize parameters")
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self.hidden = int(hidden)
        if hidden > 0:
            self.params = {
                "w1": rng.normal(0.0, dim_in**-0.5, size=(dim_in, hidden)),
                "b1": np.zeros(hidden),
                "w2": rng.normal(0.0, hidden**-0.5, size=(hidden, dim_out)),
                "b2": np.zeros(dim_out),
            }
        else:
            self.params = {
                "w": rng.normal(0.0, dim_in**-0.5, size=(dim_in, dim_out)),
                "b": np.zeros(dim_out),
            }

    def forward(self, x: Mat64) -> Mat64:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim_in:
            raise ValueError(f"expected (n, {self.dim_in}) input, got {x.shape}")
        p = self.params
        if self.hidden > 0:
            return np.tanh(x @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"]
        return x @ p["w"] + p["b"]

    def grads(self, x: Mat64, grad_out: Mat64) -> dict[str, Mat64]:
        """Parameter gradients given dLoss/dEmbeddings for input x."""
        x = np.asarray(x, dtype=np.float64)
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != (x.shape[0], self.dim_out):
            raise ValueError(f"grad_out shape {g.shape} does not match output")
        p = self.params
        if self.hidden == 0:
            return {"w": x.T @ g, "b": g.sum(axis=0)}
        h = np.tanh(x @ p["w1"] + p["b1"])
        gh = (g @ p["w2"].T) * (1.0 - h * h)
        return {
            "w1": x.T @ gh,
            "b1": gh.sum(axis=0),
            "w2": h.T @ g,
            "b2": g.sum(axis=0),
        }

    def copy_frozen(self) -> "Encoder":
        """Deep copy with write-protected parameters."""
        dup = Encoder.__new__(Encoder)
        dup.dim_in = self.dim_in
        dup.dim_out = self.dim_out
        dup.hidden = self.hidden
        dup.params = {}
        for name, arr in self.params.items():
            c = arr.copy()
            c.setflags(write=False)
            dup.params[name] = c
        return dup


def zero_velocity(params: dict[str, Mat64]) -> dict[str, Mat64]:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


def sgd_step(
    params: dict[str, Mat64],
    grads: dict[str, Mat64],
    velocity: dict[str, Mat64],
    lr: float,
    momentum: float,
) -> None:
    """In-place momentum update: v <- mu v + g, p <- p - lr v."""
    if not lr > 0:
        raise ValueError("lr must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must be in [0, 1)")
    if set(params) != set(grads) or set(params) != set(velocity):
        raise ValueError("params, grads, and velocity must share keys")
    for name in params:
        velocity[name] *= momentum
        velocity[name] += grads[name]
        params[name] -= lr * velocity[name]


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run (teacher settings included)."""

    steps: int = 2000
    batch_n: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    tau: float = 0.1
    loss: str = "srcl"  # "srcl" or "infonce"
    emb_dim: int = 16
    hidden_dim: int = 0
    teacher_steps: int = 300
    # teacher's embedding width; None shares emb_dim. A roomier teacher
    # space separates duplicates from merely-crowded concepts better, and
    # nothing forces the similarity oracle through the student bottleneck.
    teacher_emb_dim: int | None = None
    mask_threshold: float = 0.0  # 0 disables hard exclusion
    seed: int = 0
    regulator: RegulatorConfig = field(default_factory=RegulatorConfig)

    def __post_init__(self):
        if self.steps < 1 or self.teacher_steps < 1:
            raise ValueError("step counts must be >= 1")
        if self.batch_n < 2:
            raise ValueError("batch_n must be >= 2")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.loss not in ("srcl", "infonce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.emb_dim < 2:
            raise ValueError("emb_dim must be >= 2")
        if self.teacher_emb_dim is not None and self.teacher_emb_dim < 2:
            raise ValueError("teacher_emb_dim must be >= 2")
        if self.hidden_dim < 0:
            raise ValueError("hidden_dim must be >= 0")
        if not 0.0 <= self.mask_threshold < 1.0:
            raise ValueError("mask_threshold must be in [0, 1)")


@dataclass(frozen=True)
class HistoryRow:
    """One training step's record.

    Weight means are split by ground truth: slots that actually share a
    concept with the anchor (injected duplicates) versus genuinely
    distinct slots. The plain loss weighs every negative 1, so both means
    are 1 there and alpha is nan (no blend in play).
    """

    step: int
    loss: float
    alpha: float
    mean_false_neg_weight: float
    mean_true_neg_weight: float
    skipped: int


@dataclass
class TrainResult:
    enc_a: Encoder
    enc_b: Encoder
    history: list[HistoryRow]
    teacher: TeacherHandle | None
    config: TrainConfig
    world: WorldSpec


def _train_pair(enc_a, enc_b, batches, steps, cfg, step_fn):
    """Shared loop: forward, loss via step_fn, backprop, momentum SGD."""
    vel_a = zero_velocity(enc_a.params)
    vel_b = zero_velocity(enc_b.params)
    history: list[HistoryRow] = []
    for step in range(steps):
        batch = next(batches)
        emb_a = enc_a.forward(batch.raw_a)
        emb_b = enc_b.forward(batch.raw_b)
        out, row = step_fn(step, batch, emb_a, emb_b)
        ga = enc_a.grads(batch.raw_a, out.grad_a)
        gb = enc_b.grads(batch.raw_b, out.grad_b)
        sgd_step(enc_a.params, ga, vel_a, cfg.lr, cfg.momentum)
        sgd_step(enc_b.params, gb, vel_b, cfg.lr, cfg.momentum)
        history.append(row)
    return history


def train_teacher(spec: WorldSpec, cfg: TrainConfig) -> TeacherHandle:
    """Train the similarity teacher on a cleaned copy of the world.

    Same prototypes and noise level as `spec`, but no injected
    duplicates, so plain contrastive training is sound (every
    off-diagonal slot really is a negative).
    """
    clean = replace(spec, false_neg_rate=0.0, partial_overlap=0.0)
    emb = cfg.emb_dim if cfg.teacher_emb_dim is None else cfg.teacher_emb_dim
    rng_init = make_rng(cfg.seed, stream=_STREAM_TEACHER_INIT)
    enc_a = Encoder(spec.dim_a, emb, cfg.hidden_dim, rng_init)
    enc_b = Encoder(spec.dim_b, emb, cfg.hidden_dim, rng_init)
    batches = gen_world(
        clean, cfg.batch_n, make_rng(cfg.seed, stream=_STREAM_TEACHER_BATCHES)
    )
    loss_cfg = LossConfig(tau=cfg.tau)
    last = [0.0]

    def step_fn(step, batch, emb_a, emb_b):
        out = info_nce(emb_a, emb_b, loss_cfg)
        last[0] = out.value
        row = HistoryRow(step, out.value, float("nan"), 1.0, 1.0, out.skipped)
        return out, row

    _train_pair(enc_a, enc_b, batches, cfg.teacher_steps, cfg, step_fn)
    return TeacherHandle(enc_a, enc_b, final_loss=last[0], steps=cfg.teacher_steps)


def _masked_weights(w: Mat64, threshold: float) -> tuple[Mat64, np.ndarray]:
    """Exclude negatives whose weight fell below threshold.

    Survivor weights are renormalized to mean 1 over the live negatives
    per row, which the loss requires. Rows that lose every negative are
    left alone; the loss skips them.
    """
    n = w.shape[0]
    off = ~np.eye(n, dtype=bool)
    exclude = (w < threshold) & off
    live = off & ~exclude
    out = w.copy()
    counts = live.sum(axis=1)
    sums = np.where(live, out, 0.0).sum(axis=1)
    for i in np.nonzero(counts > 0)[0]:
        out[i, live[i]] /= sums[i] / counts[i]
    return out, exclude


def student_weights(
    teacher: TeacherHandle,
    enc_a: Encoder,
    enc_b: Encoder,
    raw_a: Mat64,
    raw_b: Mat64,
    alpha: float,
    cfg: TrainConfig,
):
    """Weight matrices for both loss directions on one batch.

    Returns (weights_ab, weights_ba); the b-anchored matrix is built from
    the transposed similarity so row i holds anchor b_i against the a
    candidates.
    """
    tau_w = cfg.regulator.weight_temperature
    t_sims = exp_similarity(
        cosine_sim_matrix(teacher.embed_a(raw_a), teacher.embed_b(raw_b)), tau_w
    )
    s_sims = exp_similarity(
        cosine_sim_matrix(enc_a.forward(raw_a), enc_b.forward(raw_b)), tau_w
    )
    blend = blended_similarity(t_sims, s_sims, alpha)
    w_ab = weights_from_similarity(
        blend, cfg.regulator.delta, cfg.regulator.weight_floor
    )
    w_ba = weights_from_similarity(
        blend.T, cfg.regulator.delta, cfg.regulator.weight_floor
    )
    return w_ab, w_ba


def _split_weight_means(w_ab, w_ba, mask) -> tuple[float, float]:
    off = ~np.eye(mask.shape[0], dtype=bool)
    fn = mask & off
    tn = ~mask & off
    pool_fn = np.concatenate([w_ab[fn], w_ba[fn.T]])
    pool_tn = np.concatenate([w_ab[tn], w_ba[tn.T]])
    mean_fn = float(pool_fn.mean()) if pool_fn.size else float("nan")
    mean_tn = float(pool_tn.mean()) if pool_tn.size else float("nan")
    return mean_fn, mean_tn


def train_student(
    spec: WorldSpec, cfg: TrainConfig, teacher: TeacherHandle | None = None
) -> TrainResult:
    """Train the student on the noisy world.

    loss "infonce" never touches the regulator. loss "srcl" weighs each
    negative by inverse blended similarity; a teacher is trained first
    when none is passed in. mask_threshold > 0 additionally drops
    negatives whose weight lands below the threshold (threshold is on
    the mean-1 scale, so 1.0 is an average negative).
    """
    if cfg.loss == "srcl" and teacher is None:
        teacher = train_teacher(spec, cfg)

    rng_init = make_rng(cfg.seed, stream=_STREAM_STUDENT_INIT)
    enc_a = Encoder(spec.dim_a, cfg.emb_dim, cfg.hidden_dim, rng_init)
    enc_b = Encoder(spec.dim_b, cfg.emb_dim, cfg.hidden_dim, rng_init)
    batches = gen_world(
        spec, cfg.batch_n, make_rng(cfg.seed, stream=_STREAM_STUDENT_BATCHES)
    )
    loss_cfg = LossConfig(tau=cfg.tau)

    if cfg.loss == "infonce":

        def step_fn(step, batch, emb_a, emb_b):
            out = info_nce(emb_a, emb_b, loss_cfg)
            row = HistoryRow(step, out.value, float("nan"), 1.0, 1.0, out.skipped)
            return out, row

    else:

        def step_fn(step, batch, emb_a, emb_b):
            alpha = alpha_at(cfg.regulator.alpha_schedule, step, cfg.steps)
            w_ab, w_ba = student_weights(
                teacher, enc_a, enc_b, batch.raw_a, batch.raw_b, alpha, cfg
            )
            excl_ab = excl_ba = None
            wm_ab, wm_ba = w_ab.w, w_ba.w
            if cfg.mask_threshold > 0.0:
                wm_ab, excl_ab = _masked_weights(wm_ab, cfg.mask_threshold)
                wm_ba, excl_ba = _masked_weights(wm_ba, cfg.mask_threshold)
            out = srcl_symmetric(
                emb_a, emb_b, wm_ab, wm_ba, loss_cfg, excl_ab, excl_ba
            )
            mean_fn, mean_tn = _split_weight_means(w_ab.w, w_ba.w, batch.mask)
            row = HistoryRow(step, out.value, alpha, mean_fn, mean_tn, out.skipped)
            return out, row

    history = _train_pair(enc_a, enc_b, batches, cfg.steps, cfg, step_fn)
    return TrainResult(
        enc_a=enc_a,
        enc_b=enc_b,
        history=history,
        teacher=teacher,
        config=cfg,
        world=spec,
    )


def save_checkpoint(path, enc_a: Encoder, enc_b: Encoder) -> None:
    """Write both encoders to a flat binary file.

    Layout (little-endian): magic "SRLB", u32 version, then two encoder
    blocks. Each block is u32 dim_in, u32 dim_out, u32 hidden, u32 param
    count, then per parameter: u32 name length, utf-8 name, u32 ndim,
    u32 shape entries, row-major float64 data. No timestamps and a fixed
    parameter order, so identical encoders produce identical bytes.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for enc in (enc_a, enc_b):
            fh.write(
                struct.pack("<IIII", enc.dim_in, enc.dim_out, enc.hidden, len(enc.params))
            )
            for name, arr in enc.params.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Encoder, Encoder]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 8
    encoders = []
    for _ in range(2):
        dim_in, dim_out, hidden, n_params = struct.unpack_from("<IIII", blob, pos)
        pos += 16
        params: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
            pos += 8 * count
            params[name] = arr.reshape(shape).astype(np.float64)
        enc = Encoder.__new__(Encoder)
        enc.dim_in, enc.dim_out, enc.hidden = dim_in, dim_out, hidden
        enc.params = params
        encoders.append(enc)
    if pos != len(blob):
        raise ValueError("trailing bytes after checkpoint payload")
    return encoders[0], encoders[1]
