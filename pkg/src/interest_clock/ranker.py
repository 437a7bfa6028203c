"""Trainable ranking model with exact hand-derived gradients.

The model embeds the sample's categorical features, fills a time slot
according to its mode (retrieved current-interest vector, hour-table row, or
zeros), and pushes the concatenation through a small rectified feedforward
body ending in a sigmoid. Training is plain SGD on the binary cross-entropy,
one time-ordered pass, one sample at a time.

``backward`` differentiates the entire composition by hand: loss, base body,
fusion network, per-head softmax attention, the shared gap-score network,
and the head projections, down to the touched embedding rows. Retrieval is
a discrete selection and is treated as a constant, so gradients flow only
through the selected behaviors. ``finite_difference_grads`` is the
independent oracle used by ``grad_check``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .behavior_store import BehaviorStore
from .clock_esu import EsuTrace, esu_forward_traced
from .clock_gsu import (
    DEFAULT_TOP_K,
    SubSequence,
    build_subsequence,
    score_sequence,
    score_sequence_lowrank,
)
from .errors import ValidationError
from .params import MODES, LicGrads, LicParams
from .projection_cache import (
    ProjectionCache,
    Query,
    behavior_projection_matrix,
    project_query,
)
from .temporal import clock_of_day

logger = logging.getLogger(__name__)

LOSS_EPS = 1e-7


@dataclass
class Sample:
    """One impression: categorical features, time, binary outcome."""

    user_id: int
    item_id: int
    genre_id: int
    timestamp: int
    label: int

    def feature_ids(self) -> tuple[int, int, int]:
        return (self.user_id, self.item_id, self.genre_id)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def loss(y: int, y_hat: float) -> float:
    """Binary cross-entropy with the prediction clamped away from 0 and 1."""
    p = min(max(y_hat, LOSS_EPS), 1.0 - LOSS_EPS)
    if y == 1:
        return -float(np.log(p))
    return -float(np.log1p(-p))


@dataclass
class ForwardTrace:
    """Everything ``backward`` needs from one forward pass."""

    sample: Sample
    mode: str
    rows: dict                      # table -> row index used
    x: np.ndarray                   # base input
    h1_pre: np.ndarray
    h1: np.ndarray
    h2_pre: np.ndarray
    h2: np.ndarray
    logit: float
    y_hat: float
    q_vec: np.ndarray | None = None
    sub: SubSequence | None = None
    esu: EsuTrace | None = None


@dataclass
class BackwardResult:
    y_hat: float
    loss: float
    grads: LicGrads


class Ranker:
    """Binds parameters, a behavior store, and a mode into one model."""

    def __init__(self, params: LicParams, store: BehaviorStore, mode: str,
                 top_k: int = DEFAULT_TOP_K, cache: ProjectionCache | None = None):
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.params = params
        self.store = store
        self.mode = mode
        self.top_k = top_k
        self.cache = cache
        self.rejected_steps = 0
        self._param_arrays = dict(params.named_arrays())

    # ---- forward -------------------------------------------------------------

    def _retrieve(self, sample: Sample, q: Query) -> SubSequence:
        seq = self.store.snapshot(sample.user_id)
        if len(seq) == 0:
            return SubSequence.empty(self.params.dims.behavior_dim)
        if self.cache is not None:
            seq_c, proj = self.cache.sequence_matrix(sample.user_id)
            if len(seq_c) == len(seq):
                pq = project_query(q, self.params)
                scores = score_sequence(proj, pq.concat, seq_c.clock_seconds,
                                        q.clock_time, self.params.time_net)
                return build_subsequence(seq_c, scores, q.clock_time, self.top_k)
        # training path: fold the projection into the query side, which is
        # the same score up to float reassociation and much cheaper per step
        proj_stack = behavior_projection_matrix(self.params)
        scores = score_sequence_lowrank(seq.embeddings, proj_stack,
                                        np.concatenate([h.query_proj @ q.vector
                                                        for h in self.params.heads]),
                                        seq.clock_seconds, q.clock_time,
                                        self.params.time_net)
        return build_subsequence(seq, scores, q.clock_time, self.top_k)

    def forward_traced(self, sample: Sample) -> ForwardTrace:
        p = self.params
        t_cur = clock_of_day(sample.timestamp)
        rows = {
            "user": p.table_row("user", sample.user_id),
            "item": p.table_row("item", sample.item_id),
            "genre": p.table_row("genre", sample.genre_id),
        }
        user_e = p.tables["user"][rows["user"]]
        item_e = p.tables["item"][rows["item"]]
        genre_e = p.tables["genre"][rows["genre"]]

        q_vec = None
        sub = None
        esu = None
        if self.mode == "lic":
            q_vec = item_e
            q = Query(vector=q_vec, clock_time=t_cur)
            sub = self._retrieve(sample, q)
            slot, esu = esu_forward_traced(sub, q, p)
        elif self.mode == "hour_embedding":
            rows["hour"] = t_cur // 3600
            slot = p.hour_table[rows["hour"]]
        else:
            slot = np.zeros(p.dims.head_dim)

        x = np.concatenate([user_e, item_e, genre_e, slot])
        h1_pre = p.base.w1 @ x + p.base.b1
        h1 = np.maximum(h1_pre, 0.0)
        h2_pre = p.base.w2 @ h1 + p.base.b2
        h2 = np.maximum(h2_pre, 0.0)
        logit = float(p.base.w3 @ h2 + p.base.b3)
        return ForwardTrace(
            sample=sample, mode=self.mode, rows=rows, x=x,
            h1_pre=h1_pre, h1=h1, h2_pre=h2_pre, h2=h2,
            logit=logit, y_hat=sigmoid(logit),
            q_vec=q_vec, sub=sub, esu=esu,
        )

    def forward(self, sample: Sample) -> float:
        """Predicted probability for one sample."""
        return self.forward_traced(sample).y_hat

    # ---- backward ------------------------------------------------------------

    def backward(self, sample: Sample) -> BackwardResult:
        """Exact gradients of the cross-entropy for one sample."""
        tr = self.forward_traced(sample)
        p = self.params
        g = LicGrads.zeros_like(p)

        if LOSS_EPS < tr.y_hat < 1.0 - LOSS_EPS:
            d_logit = tr.y_hat - sample.label
        else:
            d_logit = 0.0  # prediction sits in the clamped flat of the loss

        base = p.base
        g.dense["base.w3"] += d_logit * tr.h2
        g.dense["base.b3"] += d_logit
        d_h2 = d_logit * base.w3
        d_h2pre = d_h2 * (tr.h2_pre > 0.0)
        g.dense["base.w2"] += np.outer(d_h2pre, tr.h1)
        g.dense["base.b2"] += d_h2pre
        d_h1 = base.w2.T @ d_h2pre
        d_h1pre = d_h1 * (tr.h1_pre > 0.0)
        g.dense["base.w1"] += np.outer(d_h1pre, tr.x)
        g.dense["base.b1"] += d_h1pre
        d_x = base.w1.T @ d_h1pre

        dims = p.dims
        f, h = dims.feat_dim, dims.query_dim
        d_user = d_x[:f]
        d_item = d_x[f:f + h].copy()
        d_genre = d_x[f + h:2 * f + h]
        d_slot = d_x[2 * f + h:]

        if tr.mode == "hour_embedding":
            g.add_row("hour", tr.rows["hour"], d_slot)
        elif tr.mode == "lic":
            d_q = self._esu_backward(tr, d_slot, g)
            d_item += d_q

        g.add_row("user", tr.rows["user"], d_user)
        g.add_row("item", tr.rows["item"], d_item)
        g.add_row("genre", tr.rows["genre"], d_genre)
        return BackwardResult(y_hat=tr.y_hat, loss=loss(sample.label, tr.y_hat),
                              grads=g)

    def _esu_backward(self, tr: ForwardTrace, d_v: np.ndarray, g: LicGrads) -> np.ndarray:
        """Backpropagate through the attention stack; returns d(loss)/d(query)."""
        p = self.params
        esu = tr.esu
        if esu.empty:
            g.dense["default_interest"] += d_v
            return np.zeros(p.dims.query_dim)

        fusion = p.fusion
        relu_hidden = np.maximum(esu.fusion_hidden_pre, 0.0)
        g.dense["fusion.w2"] += np.outer(d_v, relu_hidden)
        g.dense["fusion.b2"] += d_v
        d_hidden = fusion.w2.T @ d_v
        d_hpre = d_hidden * (esu.fusion_hidden_pre > 0.0)
        g.dense["fusion.w1"] += np.outer(d_hpre, esu.fusion_input)
        g.dense["fusion.b1"] += d_hpre
        d_cat = fusion.w1.T @ d_hpre

        d = p.dims.head_dim
        scale = 1.0 / np.sqrt(d)
        z = tr.sub.embeddings
        d_time_scores = np.zeros(len(tr.sub))
        d_q = np.zeros(p.dims.query_dim)
        for i, head in enumerate(p.heads):
            d_r = d_cat[i * d:(i + 1) * d]
            w = esu.weights[i]
            # r = (w @ z_aug) @ value_proj
            g.dense[f"head{i}.value_proj"] += np.outer(esu.pooled_aug[i], d_r)
            d_pooled = head.value_proj @ d_r
            d_w = esu.z_aug @ d_pooled
            d_alpha = w * (d_w - float(w @ d_w))
            # alpha = (z @ behavior_proj^T) @ e * scale + time_scores
            e = esu.query_proj[i]
            d_e = esu.behavior_proj[i].T @ d_alpha * scale
            g.dense[f"head{i}.query_proj"] += np.outer(d_e, tr.q_vec)
            d_q += head.query_proj.T @ d_e
            d_bp = np.outer(d_alpha, e) * scale
            g.dense[f"head{i}.behavior_proj"] += d_bp.T @ z
            d_time_scores += d_alpha

        net = p.time_net
        relu_t = np.maximum(esu.time_hidden_pre, 0.0)
        g.dense["time_net.w2"] += relu_t.T @ d_time_scores
        g.dense["time_net.b2"] += d_time_scores.sum()
        d_relu = np.outer(d_time_scores, net.w2)
        d_tpre = d_relu * (esu.time_hidden_pre > 0.0)
        g.dense["time_net.w1"] += d_tpre.T @ esu.gap_features
        g.dense["time_net.b1"] += d_tpre.sum(axis=0)
        return d_q

    # ---- optimisation ----------------------------------------------------------

    def sgd_step(self, grads: LicGrads, lr: float) -> bool:
        """Apply one SGD update; rejects non-finite gradients untouched."""
        if lr < 0:
            raise ValidationError("learning rate must be >= 0")
        if not grads.all_finite():
            self.rejected_steps += 1
            return False
        for name, garr in grads.dense.items():
            self._param_arrays[name] -= lr * garr
        for table, rows in grads.table_rows.items():
            target = self.params.hour_table if table == "hour" else self.params.tables[table]
            for row, vec in rows.items():
                target[row] -= lr * vec
        self.params.version += 1
        if self.cache is not None:
            for row in grads.table_rows["user"]:
                self.cache.invalidate(row)
        return True


# ---- gradient checking -------------------------------------------------------


def touched_table_rows(model: Ranker, sample: Sample) -> list[tuple[str, int]]:
    """Table rows whose gradients can be non-zero for this sample."""
    p = model.params
    rows = [
        ("user", p.table_row("user", sample.user_id)),
        ("item", p.table_row("item", sample.item_id)),
        ("genre", p.table_row("genre", sample.genre_id)),
    ]
    if model.mode == "hour_embedding":
        rows.append(("hour", clock_of_day(sample.timestamp) // 3600))
    return rows


def finite_difference_grads(model: Ranker, sample: Sample,
                            step: float = 1e-5) -> LicGrads:
    """Central finite differences over every reachable parameter.

    Re-runs the complete forward pass (including retrieval) for every
    perturbation, making this an oracle fully independent of ``backward``.
    Table gradients are only probed on the rows the sample touches; all
    other rows are structurally zero.
    """
    g = LicGrads.zeros_like(model.params)

    def loss_at() -> float:
        y_hat = model.forward(sample)
        return loss(sample.label, y_hat)

    def central(arr, idx) -> float:
        orig = arr[idx]
        arr[idx] = orig + step
        up = loss_at()
        arr[idx] = orig - step
        down = loss_at()
        arr[idx] = orig
        return (up - down) / (2.0 * step)

    for name, arr in model.params.named_arrays():
        if name.startswith("table."):
            continue
        out = g.dense[name]
        if arr.ndim == 0:
            out[...] = central(arr, ())
        else:
            for idx in np.ndindex(arr.shape):
                out[idx] = central(arr, idx)

    for table, row in touched_table_rows(model, sample):
        target = model.params.hour_table if table == "hour" else model.params.tables[table]
        vec = np.zeros(target.shape[1])
        for j in range(target.shape[1]):
            vec[j] = central(target, (row, j))
        g.add_row(table, row, vec)
    return g


def group_relative_errors(analytic: LicGrads, numeric: LicGrads,
                          touched: list[tuple[str, int]]) -> dict[str, float]:
    """Norm-based relative error per parameter group.

    Groups where both sides vanish score 0. Untouched table rows must be
    exactly absent from the analytic gradients and are checked structurally.
    """
    def rel(a: np.ndarray, n: np.ndarray) -> float:
        na, nn = np.linalg.norm(a), np.linalg.norm(n)
        denom = max(na, nn)
        if denom < 1e-8:
            return 0.0
        return float(np.linalg.norm(a - n) / denom)

    report = {}
    for name, a in analytic.dense.items():
        report[name] = rel(np.atleast_1d(a), np.atleast_1d(numeric.dense[name]))
    for table, row in touched:
        a = analytic.table_rows[table].get(row)
        n = numeric.table_rows[table].get(row)
        width = n.shape[0]
        a = a if a is not None else np.zeros(width)
        report[f"table.{table}[{row}]"] = rel(a, n)
    touched_set = set(touched)
    for table, rows in analytic.table_rows.items():
        for row in rows:
            if (table, row) not in touched_set:
                raise AssertionError(
                    f"analytic gradient touches unexpected row {table}[{row}]")
    return report


def build_check_instance(seed: int, m: int = 50, k: int = 10, mode: str = "lic",
                         empty_history: bool = False) -> tuple[Ranker, Sample]:
    """Small random model plus one sample, for gradient verification."""
    from .params import Dims

    rng = np.random.default_rng(seed)
    dims = Dims(n_users=5, n_items=40, n_genres=4)
    params = LicParams.init(dims, seed=seed)
    # break the zero-init symmetry of bias vectors so every path is exercised
    for name, arr in params.named_arrays():
        if name.startswith(("time_net.b", "fusion.b", "base.b")):
            arr += rng.normal(0.0, 0.1, size=arr.shape)
    params.default_interest[...] = rng.normal(0.0, 0.2, size=dims.head_dim)

    catalog = rng.normal(0.0, 1.0, size=(dims.n_items, dims.behavior_dim))
    catalog /= np.linalg.norm(catalog, axis=1, keepdims=True)
    store = BehaviorStore(dims.behavior_dim, catalog=catalog)
    user_id = int(rng.integers(0, dims.n_users))
    if not empty_history:
        ts = np.sort(rng.integers(0, 30 * 86_400, size=m))
        ids = rng.integers(0, dims.n_items, size=m)
        store.load_user(user_id, ids, ts)
    sample = Sample(
        user_id=user_id,
        item_id=int(rng.integers(0, dims.n_items)),
        genre_id=int(rng.integers(0, dims.n_genres)),
        timestamp=int(rng.integers(31 * 86_400, 60 * 86_400)),
        label=int(rng.integers(0, 2)),
    )
    return Ranker(params, store, mode, top_k=k), sample


def grad_check(seed: int, mode: str = "lic", m: int = 50, k: int = 10,
               step: float = 1e-5, empty_history: bool = False) -> dict[str, float]:
    """Finite-difference check on one random instance; max error per group."""
    model, sample = build_check_instance(seed, m=m, k=k, mode=mode,
                                         empty_history=empty_history)
    analytic = model.backward(sample).grads
    numeric = finite_difference_grads(model, sample, step=step)
    return group_relative_errors(analytic, numeric,
                                 touched_table_rows(model, sample))


# ---- streaming training --------------------------------------------------------


def train_streaming(model: Ranker, samples, lr: float = 0.01,
                    log_every: int = 2000) -> list[tuple[int, float]]:
    """Single time-ordered pass of per-sample SGD.

    Returns (step, mean loss since previous log point) pairs. Raises on
    out-of-order samples or a non-finite running loss.
    """
    if lr <= 0:
        raise ValidationError("learning rate must be > 0")
    log: list[tuple[int, float]] = []
    window_loss = 0.0
    window_n = 0
    last_ts = None
    for step_no, sample in enumerate(samples, start=1):
        if last_ts is not None and sample.timestamp < last_ts:
            raise ValidationError(
                f"stream is not time-ordered at step {step_no}")
        last_ts = sample.timestamp
        result = model.backward(sample)
        if not np.isfinite(result.loss):
            raise RuntimeError(f"non-finite loss at step {step_no}")
        model.sgd_step(result.grads, lr)
        window_loss += result.loss
        window_n += 1
        if step_no % log_every == 0:
            mean = window_loss / window_n
            log.append((step_no, mean))
            logger.info("step %d mean_loss %.5f", step_no, mean)
            window_loss = 0.0
            window_n = 0
    if window_n:
        log.append((step_no, window_loss / window_n))
    return log
