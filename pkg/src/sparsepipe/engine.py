"""Sparse MLP core: forward, backward, update and training on compressed edge lists.

Weights live in flat per-junction arrays aligned with JunctionPattern edge
order (right neuron 0's edges first).  The single-sample path accumulates
per-edge products in that order via bincount; the cycle-level simulator reuses
the same primitives so single-input simulation is bit-identical to batch-one
training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .topology import ConfigError, JunctionPattern

MODEL_MAGIC = b"sparsepipe-model v1"


class NumericsError(RuntimeError):
    """Raised when an update produces non-finite parameters."""


# -- activations -------------------------------------------------------------


def relu(h: np.ndarray) -> np.ndarray:
    return np.maximum(h, 0.0)


def relu_deriv(h: np.ndarray) -> np.ndarray:
    # derivative at the kink taken as 0
    return (h > 0.0).astype(np.float64)


def softmax(h: np.ndarray) -> np.ndarray:
    shifted = h - h.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_from_logits(h: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy, computed stably from pre-activations."""
    h = np.atleast_2d(h)
    labels = np.atleast_1d(labels)
    m = h.max(axis=1)
    lse = m + np.log(np.exp(h - m[:, None]).sum(axis=1))
    return float((lse - h[np.arange(h.shape[0]), labels]).mean())


# -- model -------------------------------------------------------------------


class _CompiledJunction:
    """Index arrays for fast edge-list arithmetic over one junction."""

    def __init__(self, pattern: JunctionPattern):
        self.pattern = pattern
        self.n_left = pattern.n_left
        self.n_right = pattern.n_right
        self.left_idx = pattern.left_index_array()
        self.right_idx = pattern.right_index_array()
        self.n_edges = pattern.n_edges
        self.in_deg = pattern.in_degree_array()
        self._padded = None

    def padded(self):
        """(L2d, E2d, R2d, BE2d): right- and left-major edge tables, sentinel-padded."""
        if self._padded is None:
            E = self.n_edges
            max_din = int(self.in_deg.max()) if self.n_right else 0
            L2d = np.zeros((self.n_right, max_din), dtype=np.int64)
            E2d = np.full((self.n_right, max_din), E, dtype=np.int64)
            pos = 0
            for j, deg in enumerate(self.in_deg):
                L2d[j, :deg] = self.left_idx[pos : pos + deg]
                E2d[j, :deg] = np.arange(pos, pos + deg)
                pos += deg
            out_deg = np.bincount(self.left_idx, minlength=self.n_left)
            max_dout = int(out_deg.max()) if self.n_left else 0
            R2d = np.zeros((self.n_left, max_dout), dtype=np.int64)
            BE2d = np.full((self.n_left, max_dout), E, dtype=np.int64)
            fill = np.zeros(self.n_left, dtype=np.int64)
            for e in range(E):
                k = self.left_idx[e]
                R2d[k, fill[k]] = self.right_idx[e]
                BE2d[k, fill[k]] = e
                fill[k] += 1
            self._padded = (L2d, E2d, R2d, BE2d)
        return self._padded


class SparseModel:
    """Per-junction weight tables aligned to pattern edge order, plus bias vectors."""

    def __init__(
        self,
        patterns: list[JunctionPattern],
        weights: list[np.ndarray],
        biases: list[np.ndarray],
        hidden_activation: str = "relu",
        output_activation: str = "softmax",
    ):
        if len(weights) != len(patterns) or len(biases) != len(patterns):
            raise ConfigError("patterns, weights and biases must align junction-for-junction")
        for i, (p, w, b) in enumerate(zip(patterns, weights, biases)):
            if w.shape != (p.n_edges,):
                raise ConfigError(f"junction {i + 1}: weight table shape {w.shape} != ({p.n_edges},)")
            if b.shape != (p.n_right,):
                raise ConfigError(f"junction {i + 1}: bias shape {b.shape} != ({p.n_right},)")
        for i in range(len(patterns) - 1):
            if patterns[i].n_right != patterns[i + 1].n_left:
                raise ConfigError(f"junctions {i + 1},{i + 2}: layer size mismatch")
        if hidden_activation != "relu" or output_activation != "softmax":
            raise ConfigError("supported activations: relu hidden, softmax output")
        self.patterns = list(patterns)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.compiled = [_CompiledJunction(p) for p in patterns]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.patterns[0].n_left,) + tuple(p.n_right for p in self.patterns)

    @property
    def n_junctions(self) -> int:
        return len(self.patterns)

    def copy(self) -> "SparseModel":
        return SparseModel(
            self.patterns,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )


def init_model(
    patterns: list[JunctionPattern],
    layer_sizes: tuple[int, ...],
    seed: int,
    bias_init: float = 0.1,
) -> SparseModel:
    """He-style init: weight std sqrt(2 / fan_in) with fan_in the receiving neuron's in-degree."""
    sizes = (patterns[0].n_left,) + tuple(p.n_right for p in patterns)
    if tuple(layer_sizes) != sizes:
        raise ConfigError(f"patterns imply layer sizes {sizes}, got {tuple(layer_sizes)}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for p in patterns:
        fan_in = p.in_degree_array()
        std = np.sqrt(2.0 / np.maximum(fan_in, 1))
        w = rng.standard_normal(p.n_edges) * std[p.right_index_array()]
        weights.append(w)
        biases.append(np.full(p.n_right, float(bias_init)))
    return SparseModel(list(patterns), weights, biases)


# -- single-sample path (edge-order accumulation; shared with the simulator) --


def junction_forward(W, b, left_idx, right_idx, n_right, a_prev) -> np.ndarray:
    """h = edge-ordered sum of W*a over incoming edges, plus bias."""
    acc = np.bincount(right_idx, weights=W * a_prev[left_idx], minlength=n_right)
    return acc + b


def junction_backprop(W, left_idx, right_idx, n_left, delta_right) -> np.ndarray:
    """Edge-ordered sum of W*delta over outgoing edges (before the adot factor)."""
    return np.bincount(left_idx, weights=W * delta_right[right_idx], minlength=n_left)


@dataclass
class LayerState:
    """Per-layer vectors from one forward pass; deltas are filled by backward."""

    activations: list[np.ndarray]  # a_0 .. a_L
    pre_activations: list[np.ndarray]  # h_1 .. h_L
    activation_derivs: list[np.ndarray]  # adot_1 .. adot_L (adot_L unused)
    deltas: list[np.ndarray] | None = None


def forward(model: SparseModel, x: np.ndarray) -> LayerState:
    """Single-sample forward pass over pattern edges only."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.layer_sizes[0],):
        raise ConfigError(f"input shape {x.shape} != ({model.layer_sizes[0]},)")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input")
    L = model.n_junctions
    acts = [x]
    hs = []
    adots = []
    for i in range(L):
        cj = model.compiled[i]
        h = junction_forward(
            model.weights[i], model.biases[i], cj.left_idx, cj.right_idx, cj.n_right, acts[-1]
        )
        hs.append(h)
        if i < L - 1:
            acts.append(relu(h))
            adots.append(relu_deriv(h))
        else:
            a = softmax(h)
            acts.append(a)
            adots.append(a * (1.0 - a))  # kept for API uniformity, unused
    return LayerState(activations=acts, pre_activations=hs, activation_derivs=adots)


@dataclass
class Gradients:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]


def backward(model: SparseModel, state: LayerState, label: np.ndarray) -> Gradients:
    """Single-sample gradients; delta_L = a_L - y (softmax + cross-entropy)."""
    y = np.asarray(label, dtype=np.float64)
    n_out = model.layer_sizes[-1]
    if y.shape != (n_out,) or not ((y == 0) | (y == 1)).all() or y.sum() != 1:
        raise ValueError("label must be a one-hot vector")
    L = model.n_junctions
    deltas: list[np.ndarray | None] = [None] * L
    deltas[L - 1] = state.activations[L] - y
    for i in range(L - 1, 0, -1):
        cj = model.compiled[i]
        dpart = junction_backprop(
            model.weights[i], cj.left_idx, cj.right_idx, cj.n_left, deltas[i]
        )
        deltas[i - 1] = state.activation_derivs[i - 1] * dpart
    weight_grads = []
    for i in range(L):
        cj = model.compiled[i]
        weight_grads.append(state.activations[i][cj.left_idx] * deltas[i][cj.right_idx])
    state.deltas = list(deltas)
    return Gradients(weight_grads=weight_grads, bias_grads=list(deltas))


# -- batch path ---------------------------------------------------------------


def _forward_batch(model: SparseModel, X: np.ndarray):
    """Vectorized forward over a batch; returns (acts, hs, adots)."""
    M = X.shape[0]
    L = model.n_junctions
    acts = [X]
    hs = []
    adots = []
    for i in range(L):
        cj = model.compiled[i]
        L2d, E2d, _, _ = cj.padded()
        W_ext = np.append(model.weights[i], 0.0)
        W2d = W_ext[E2d]
        h = np.zeros((M, cj.n_right))
        width = L2d.shape[1]
        chunk = max(1, min(width, 8_000_000 // max(1, M * cj.n_right)))
        for s in range(0, width, chunk):
            e = s + chunk
            h += np.einsum("mjf,jf->mj", acts[-1][:, L2d[:, s:e]], W2d[:, s:e])
        h += model.biases[i]
        hs.append(h)
        if i < L - 1:
            acts.append(relu(h))
            adots.append(relu_deriv(h))
        else:
            acts.append(softmax(h))
            adots.append(None)
    return acts, hs, adots


def _backward_batch(model: SparseModel, acts, adots, labels: np.ndarray) -> Gradients:
    """Batch-averaged gradients from a _forward_batch state."""
    M = labels.shape[0]
    L = model.n_junctions
    delta = acts[L].copy()
    delta[np.arange(M), labels] -= 1.0
    weight_grads: list[np.ndarray | None] = [None] * L
    bias_grads: list[np.ndarray | None] = [None] * L
    for i in range(L - 1, -1, -1):
        cj = model.compiled[i]
        bias_grads[i] = delta.mean(axis=0)
        a_prev = acts[i]
        if cj.n_edges * 4 >= cj.n_left * cj.n_right:
            G = delta.T @ a_prev
            weight_grads[i] = G[cj.right_idx, cj.left_idx] / M
        else:
            g = np.empty(cj.n_edges)
            step = 1 << 15
            for s in range(0, cj.n_edges, step):
                e = s + step
                g[s:e] = np.einsum(
                    "me,me->e", delta[:, cj.right_idx[s:e]], a_prev[:, cj.left_idx[s:e]]
                )
            weight_grads[i] = g / M
        if i > 0:
            _, _, R2d, BE2d = cj.padded()
            W_ext = np.append(model.weights[i], 0.0)
            WB = W_ext[BE2d]
            dpart = np.zeros((M, cj.n_left))
            width = R2d.shape[1]
            chunk = max(1, min(width, 8_000_000 // max(1, M * cj.n_left)))
            for s in range(0, width, chunk):
                e = s + chunk
                dpart += np.einsum("mkg,kg->mk", delta[:, R2d[:, s:e]], WB[:, s:e])
            delta = adots[i - 1] * dpart
    return Gradients(weight_grads=weight_grads, bias_grads=bias_grads)


# -- optimizer ----------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimizer and schedule settings (Adam defaults mirror the standard ones)."""

    learning_rate: float
    epochs: int
    optimizer: str = "adam"  # "sgd" | "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 1e-5  # per-step: lr / (1 + decay * step), step counted from 0
    l2: float = 0.0  # lambda, gradient contribution lambda*W  (r = ||W||^2 / 2)
    l1: float | tuple[float, ...] = 0.0  # per-junction gamma, gradient gamma*sign(W)
    batch_size: int = 1
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        gammas = self.l1 if isinstance(self.l1, tuple) else (self.l1,)
        if self.l2 < 0 or any(g < 0 for g in gammas):
            raise ConfigError("penalty coefficients must be >= 0")

    def gamma(self, junction: int, n_junctions: int) -> float:
        if isinstance(self.l1, tuple):
            if len(self.l1) != n_junctions:
                raise ConfigError(f"l1 needs {n_junctions} coefficients")
            return self.l1[junction]
        return float(self.l1)


class OptimizerState:
    """Step counter plus Adam moment arrays (empty for plain SGD)."""

    def __init__(self, model: SparseModel, cfg: TrainConfig):
        self.step = 0
        self.adam = cfg.optimizer == "adam"
        if self.adam:
            self.m_w = [np.zeros_like(w) for w in model.weights]
            self.v_w = [np.zeros_like(w) for w in model.weights]
            self.m_b = [np.zeros_like(b) for b in model.biases]
            self.v_b = [np.zeros_like(b) for b in model.biases]


def update_step(
    model: SparseModel, grads: Gradients, cfg: TrainConfig, state: OptimizerState
) -> SparseModel:
    """One in-place parameter update; the data gradient is augmented by the
    L2 term lambda*W and the sparsity penalty gamma*sign(W) (sign(0) = 0).

    Under SGD the penalty shrink is clamped at zero (soft threshold), so a
    weight moves toward zero by at most lr*gamma and the L1 norm never grows
    from the penalty alone.  Under Adam the penalty term simply joins the
    gradient fed to the moment estimates.
    """
    lr = cfg.learning_rate / (1.0 + cfg.decay * state.step)
    for i in range(model.n_junctions):
        gw = grads.weight_grads[i]
        gb = grads.bias_grads[i]
        if cfg.l2:
            gw = gw + cfg.l2 * model.weights[i]
        gamma = cfg.gamma(i, model.n_junctions)
        if gamma and state.adam:
            gw = gw + gamma * np.sign(model.weights[i])
        if state.adam:
            t = state.step + 1
            for g, p, m, v in (
                (gw, model.weights[i], state.m_w[i], state.v_w[i]),
                (gb, model.biases[i], state.m_b[i], state.v_b[i]),
            ):
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                m_hat = m / (1 - cfg.beta1**t)
                v_hat = v / (1 - cfg.beta2**t)
                p -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        else:
            model.weights[i] -= lr * gw
            model.biases[i] -= lr * gb
            if gamma:
                w = model.weights[i]
                w[:] = np.sign(w) * np.maximum(np.abs(w) - lr * gamma, 0.0)
        if not np.isfinite(model.weights[i]).all() or not np.isfinite(model.biases[i]).all():
            raise NumericsError(
                f"non-finite parameters in junction {i + 1} after step {state.step}"
                f" (lr={lr:g}); aborting"
            )
    state.step += 1
    return model


# -- training loop -------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float
    test_acc: float | None = None


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    diverged: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("epoch,train_loss,val_acc,test_acc\n")
            for r in self.records:
                test = "" if r.test_acc is None else f"{r.test_acc:.6f}"
                f.write(f"{r.epoch},{r.train_loss:.10g},{r.val_acc:.6f},{test}\n")


def train(model: SparseModel, train_set, val_set, cfg: TrainConfig, test_set=None) -> History:
    """Seeded, optionally shuffled epoch loop; batch size 1 uses the exact
    edge-order path matching the hardware simulator's arithmetic."""
    X, y = train_set.features, train_set.labels
    if X.shape[0] == 0 or val_set.features.shape[0] == 0:
        raise ConfigError("datasets must be nonempty")
    n_out = model.layer_sizes[-1]
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState(model, cfg)
    history = History()
    eye = np.eye(n_out)
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0]) if cfg.shuffle else np.arange(X.shape[0])
        loss_sum = 0.0
        for s in range(0, order.size, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            # overflow on a diverging model is detected below, not warned about
            with np.errstate(over="ignore", invalid="ignore"):
                if cfg.batch_size == 1:
                    st = forward(model, X[idx[0]])
                    loss = cross_entropy_from_logits(st.pre_activations[-1], y[idx])
                    grads = backward(model, st, eye[y[idx[0]]])
                else:
                    acts, hs, adots = _forward_batch(model, X[idx])
                    loss = cross_entropy_from_logits(hs[-1], y[idx])
                    grads = _backward_batch(model, acts, adots, y[idx])
            loss_sum += loss * idx.size
            if not np.isfinite(loss):
                history.diverged = True
                return history
            try:
                update_step(model, grads, cfg, state)
            except NumericsError:
                history.diverged = True
                return history
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / order.size,
                val_acc=evaluate(model, val_set),
                test_acc=None if test_set is None else evaluate(model, test_set),
            )
        )
    return history


def evaluate(model: SparseModel, dataset, k: int = 1) -> float:
    """Top-k accuracy; rank ties broken in favor of the lower class index."""
    if k > model.layer_sizes[-1]:
        raise ConfigError(f"k={k} exceeds output size {model.layer_sizes[-1]}")
    X, y = dataset.features, dataset.labels
    hits = 0
    for s in range(0, X.shape[0], 1024):
        xb, yb = X[s : s + 1024], y[s : s + 1024]
        acts, _, _ = _forward_batch(model, xb)
        scores = acts[-1]
        own = scores[np.arange(len(yb)), yb]
        better = (scores > own[:, None]).sum(axis=1)
        tied_lower = ((scores == own[:, None]) & (np.arange(scores.shape[1]) < yb[:, None])).sum(
            axis=1
        )
        hits += int(((better + tied_lower) < k).sum())
    return hits / X.shape[0]


# -- sparsification and inspection ---------------------------------------------


def prune_threshold(model: SparseModel, target_rhos) -> tuple[list[JunctionPattern], SparseModel]:
    """Keep the ceil(rho * N_left * N_right) largest-magnitude weights per junction.

    Ties at the threshold keep the lower edge index.  Biases are untouched.
    """
    if len(target_rhos) != model.n_junctions:
        raise ConfigError(f"need {model.n_junctions} target densities")
    patterns = []
    weights = []
    for i, rho in enumerate(target_rhos):
        if not 0 < rho <= 1:
            raise ConfigError(f"junction {i + 1}: density {rho} outside (0, 1]")
        cj = model.compiled[i]
        keep = int(np.ceil(rho * cj.n_left * cj.n_right))
        keep = min(keep, cj.n_edges)
        order = np.lexsort((np.arange(cj.n_edges), -np.abs(model.weights[i])))
        kept = np.sort(order[:keep])
        rows: list[list[int]] = [[] for _ in range(cj.n_right)]
        for e in kept:
            rows[cj.right_idx[e]].append(int(cj.left_idx[e]))
        patterns.append(
            JunctionPattern(cj.n_left, cj.n_right, tuple(tuple(r) for r in rows), "variable")
        )
        weights.append(model.weights[i][kept].copy())
    pruned = SparseModel(patterns, weights, [b.copy() for b in model.biases])
    return patterns, pruned


@dataclass
class GradCheckResult:
    max_rel_err: float
    n_checked: int
    skipped: list[tuple[int, str, int]]  # (junction or layer, "W"|"b", flat index)


def grad_check(model: SparseModel, x: np.ndarray, label: np.ndarray, eps: float) -> GradCheckResult:
    """Central-difference check of every trainable parameter.

    Parameters whose perturbation flips any hidden ReLU on/off are excluded
    (non-differentiable kink) and reported.
    """
    if eps <= 0:
        raise ConfigError("eps must be > 0")
    label = np.asarray(label, dtype=np.float64)
    label_idx = np.array([int(np.argmax(label))])

    def loss_and_mask(m: SparseModel):
        st = forward(m, x)
        loss = cross_entropy_from_logits(st.pre_activations[-1], label_idx)
        masks = [h > 0 for h in st.pre_activations[:-1]]
        return loss, masks

    base_loss, base_masks = loss_and_mask(model)
    st = forward(model, x)
    grads = backward(model, st, label)
    max_err = 0.0
    checked = 0
    skipped = []

    def central(arrays, i, j) -> tuple[float, bool]:
        orig = arrays[i][j]
        arrays[i][j] = orig + eps
        lp, mp = loss_and_mask(model)
        arrays[i][j] = orig - eps
        lm, mm = loss_and_mask(model)
        arrays[i][j] = orig
        kink = any(
            not np.array_equal(a, b) or not np.array_equal(a, c)
            for a, b, c in zip(base_masks, mp, mm)
        )
        return (lp - lm) / (2 * eps), kink

    for i in range(model.n_junctions):
        for e in range(model.weights[i].size):
            numeric, kink = central(model.weights, i, e)
            if kink:
                skipped.append((i + 1, "W", e))
                continue
            analytic = grads.weight_grads[i][e]
            max_err = max(max_err, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
            checked += 1
        for j in range(model.biases[i].size):
            numeric, kink = central(model.biases, i, j)
            if kink:
                skipped.append((i + 1, "b", j))
                continue
            analytic = grads.bias_grads[i][j]
            max_err = max(max_err, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
            checked += 1
    return GradCheckResult(max_rel_err=max_err, n_checked=checked, skipped=skipped)


@dataclass
class HistogramResult:
    counts: np.ndarray
    underflow: int
    overflow: int
    lo: float
    hi: float


def weight_histogram(
    model: SparseModel, bins: int, value_range: tuple[float, float]
) -> list[HistogramResult]:
    """Per-junction uniform-bin counts over [lo, hi) with explicit under/overflow."""
    lo, hi = value_range
    if bins < 1 or not lo < hi:
        raise ConfigError("need bins >= 1 and lo < hi")
    out = []
    width = (hi - lo) / bins
    for w in model.weights:
        idx = np.floor((w - lo) / width).astype(np.int64)
        under = int((idx < 0).sum())
        over = int((idx >= bins).sum())
        counts = np.bincount(idx[(idx >= 0) & (idx < bins)], minlength=bins)
        out.append(HistogramResult(counts=counts, underflow=under, overflow=over, lo=lo, hi=hi))
    return out


# -- checkpoint io --------------------------------------------------------------


def save_checkpoint(model: SparseModel, path) -> None:
    """Binary format: magic line, JSON header line, then little-endian arrays
    (per junction: in-degrees int64, left indices int64, weights float64;
    then biases float64 per layer)."""
    header = {
        "layer_sizes": list(model.layer_sizes),
        "degree_kinds": [p.degree_kind for p in model.patterns],
        "edge_counts": [p.n_edges for p in model.patterns],
        "hidden_activation": model.hidden_activation,
        "output_activation": model.output_activation,
    }
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC + b"\n")
        f.write(json.dumps(header).encode("ascii") + b"\n")
        for i, p in enumerate(model.patterns):
            f.write(p.in_degree_array().astype("<i8").tobytes())
            f.write(model.compiled[i].left_idx.astype("<i8").tobytes())
            f.write(model.weights[i].astype("<f8").tobytes())
        for b in model.biases:
            f.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> SparseModel:
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != MODEL_MAGIC:
            raise ConfigError(f"{path}: bad magic {magic!r}")
        header = json.loads(f.readline().decode("ascii"))
        sizes = header["layer_sizes"]
        patterns = []
        weights = []
        for i in range(len(sizes) - 1):
            n_left, n_right = sizes[i], sizes[i + 1]
            deg = np.frombuffer(f.read(8 * n_right), dtype="<i8")
            E = int(deg.sum())
            left = np.frombuffer(f.read(8 * E), dtype="<i8")
            w = np.frombuffer(f.read(8 * E), dtype="<f8").copy()
            rows = []
            pos = 0
            for d in deg:
                rows.append(tuple(int(k) for k in left[pos : pos + d]))
                pos += int(d)
            patterns.append(
                JunctionPattern(n_left, n_right, tuple(rows), header["degree_kinds"][i])
            )
            weights.append(w)
        biases = [
            np.frombuffer(f.read(8 * sizes[i + 1]), dtype="<f8").copy()
            for i in range(len(sizes) - 1)
        ]
    return SparseModel(patterns, weights, biases)
