"""Direct-path dominance scoring of time-frequency bins.

Holds the classic singular-value ratio test, a small feed-forward
classifier on normalized singular values, the distortion-based weight used
by the regularization-informed mode, and top-bin selection.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class DegenerateDataError(ValueError):
    pass


def bin_features(svs, log=False, floor=1e-8):
    """Singular values normalized by the largest one (first entry 1).

    Rows of all-zero singular values map to a zero feature vector.
    With ``log=True`` the normalized values are returned as ``log10``,
    floored at ``floor``.
    """
    svs = np.atleast_2d(np.asarray(svs, dtype=float))
    top = svs[:, :1]
    feats = np.divide(svs, top, out=np.zeros_like(svs), where=top > 0)
    feats = np.clip(feats, 0.0, 1.0)
    if log:
        return np.log10(np.maximum(feats, floor))
    return feats


def dpd_threshold_test(features, ratio_threshold):
    """True where ``sigma_1 / sigma_2 >= ratio_threshold``.

    ``features`` are singular values (normalized or not), descending. A zero
    second singular value passes.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    s1, s2 = f[:, 0], f[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s2 > 0, s1 / np.where(s2 > 0, s2, 1.0), np.inf)
    out = ratio >= ratio_threshold
    return bool(out[0]) if np.ndim(features) == 1 else out


# --- feed-forward classifier -------------------------------------------------


@dataclass
class ClassifierParams:
    """Weights of a fully connected net with tanh hidden layers and a softmax head.

    ``weights[i]`` has shape ``(sizes[i], sizes[i+1])``. Inputs are
    standardized with ``in_mean``/``in_scale`` after the optional log
    transform.
    """

    sizes: tuple
    weights: list
    biases: list
    in_mean: np.ndarray = None
    in_scale: np.ndarray = None
    log_features: bool = True

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.sizes[-1] != 2:
            raise ValueError("output layer must have width 2")
        n = self.sizes[0]
        if self.in_mean is None:
            self.in_mean = np.zeros(n)
        if self.in_scale is None:
            self.in_scale = np.ones(n)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has inconsistent shapes")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    @classmethod
    def init(cls, sizes=(16, 32, 16, 2), seed=0, log_features=True):
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(sizes), weights, biases, log_features=log_features)

    @classmethod
    def zeros(cls, sizes=(16, 32, 16, 2)):
        return cls(
            tuple(sizes),
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )

    def copy(self):
        return ClassifierParams(
            self.sizes,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.in_mean.copy(),
            self.in_scale.copy(),
            self.log_features,
        )

    def flat(self):
        return np.concatenate([p.ravel() for p in self._params()])

    def _params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def prepare(self, svs):
        """Map raw singular values to standardized network inputs."""
        x = bin_features(svs, log=self.log_features)
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"classifier expects {self.sizes[0]} features, got {x.shape[1]}")
        return (x - self.in_mean) / self.in_scale


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params, x):
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    return acts, _softmax(h)


def classifier_forward(params, x):
    """Class probabilities ``(f1, f2)`` for standardized inputs ``x``.

    ``f1`` is the direct-path probability. Returns an ``(n, 2)`` array, or a
    pair for a single input vector.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != params.sizes[0]:
        raise ValueError(f"classifier expects {params.sizes[0]} inputs, got {x.shape[1]}")
    _, p = _forward(params, x)
    # column 0 of the head is the direct-path class
    probs = np.stack([p[:, 0], 1.0 - p[:, 0]], axis=1)
    return tuple(probs[0]) if single else probs


def predict_direct(params, svs):
    """Direct-path probability ``f1`` from raw singular values."""
    return classifier_forward(params, params.prepare(svs))[:, 0]


def loss_and_grads(params, x, y, class_weights=(1.0, 1.0)):
    """Weighted mean cross-entropy and its gradients.

    ``y`` holds 1 for direct-path bins (head column 0) and 0 otherwise.
    Gradients are returned in the order of :meth:`ClassifierParams._params`.
    """
    acts, p = _forward(params, x)
    y = np.asarray(y).astype(int)
    target = 1 - y  # column index
    w = np.where(y == 1, class_weights[1], class_weights[0])
    wsum = w.sum()
    n = len(y)
    loss = -np.sum(w * np.log(p[np.arange(n), target] + 1e-300)) / wsum
    delta = p.copy()
    delta[np.arange(n), target] -= 1.0
    delta *= (w / wsum)[:, None]
    L = len(params.weights)
    gW, gb = [None] * L, [None] * L
    for i in range(L - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (1 - acts[i] ** 2)
    out = [g for pair in zip(gW, gb) for g in pair]
    return loss, out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    batch_size: int = 256
    epochs: int = 30
    seed: int = 0
    val_fraction: float = 0.2
    hidden: tuple = (32, 16)
    log_features: bool = True
    balance_classes: bool = True

    def __post_init__(self):
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class TrainResult:
    params: ClassifierParams
    history: list = field(default_factory=list)
    best_epoch: int = 0


def _evaluate(params, x, y, class_weights):
    loss, _ = loss_and_grads(params, x, y, class_weights)
    f1 = classifier_forward(params, x)[:, 0]
    return loss, float(np.mean((f1 > 0.5) == (y == 1)))


def classifier_train(svs, labels, cfg=TrainConfig(), groups=None, val_svs=None, val_labels=None):
    """Fit the classifier by mini-batch Adam on weighted cross-entropy.

    The validation set is either given explicitly, or split off by
    ``groups`` (all rows of a group land on the same side), or, failing
    that, split off at random rows. The parameters at the lowest validation
    loss are returned.
    """
    svs = np.asarray(svs, dtype=float)
    labels = np.asarray(labels).astype(int)
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError("training labels contain a single class")
    rng = np.random.default_rng(cfg.seed)

    if val_svs is None:
        if groups is not None:
            uniq = np.unique(groups)
            n_val = max(1, int(round(cfg.val_fraction * len(uniq))))
            val_groups = rng.permutation(uniq)[:n_val]
            is_val = np.isin(groups, val_groups)
            if is_val.all():
                raise DegenerateDataError("need at least two groups for a group split")
        else:
            is_val = np.zeros(len(labels), bool)
            is_val[rng.permutation(len(labels))[: max(1, int(round(cfg.val_fraction * len(labels))))]] = True
        val_svs, val_labels = svs[is_val], labels[is_val]
        svs, labels = svs[~is_val], labels[~is_val]
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError("training split contains a single class")

    sizes = (svs.shape[1],) + tuple(cfg.hidden) + (2,)
    params = ClassifierParams.init(sizes, seed=cfg.seed, log_features=cfg.log_features)
    raw = bin_features(svs, log=cfg.log_features)
    params.in_mean = raw.mean(axis=0)
    params.in_scale = np.where(raw.std(axis=0) > 1e-12, raw.std(axis=0), 1.0)
    x = params.prepare(svs)
    xv = params.prepare(val_svs)
    yv = np.asarray(val_labels).astype(int)

    if cfg.balance_classes:
        counts = np.bincount(labels, minlength=2).astype(float)
        class_weights = tuple(len(labels) / (2 * counts))
    else:
        class_weights = (1.0, 1.0)

    theta = params._params()
    m = [np.zeros_like(p) for p in theta]
    v = [np.zeros_like(p) for p in theta]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    best = (np.inf, params.copy(), 0)
    history = []
    n = len(labels)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(params, x[idx], labels[idx], class_weights)
            total += loss * len(idx)
            step += 1
            for p, g, mi, vi in zip(theta, grads, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= cfg.learning_rate * (mi / (1 - b1**step)) / (np.sqrt(vi / (1 - b2**step)) + eps)
        val_loss, val_acc = _evaluate(params, xv, yv, class_weights)
        history.append(
            {"epoch": epoch, "loss": total / n, "val_loss": val_loss, "val_accuracy": val_acc}
        )
        if val_loss < best[0]:
            best = (val_loss, params.copy(), epoch)
    return TrainResult(best[1], history, best[2])


def full_batch_descent(params, x, y, lr=0.05, steps=50, class_weights=(1.0, 1.0)):
    """Plain gradient descent on the whole batch; returns the loss per step."""
    params = params.copy()
    theta = params._params()
    losses = []
    for _ in range(steps):
        loss, grads = loss_and_grads(params, x, y, class_weights)
        losses.append(loss)
        for p, g in zip(theta, grads):
            p -= lr * g
    return params, losses


def save_params(params, path):
    """Write parameters as structured text (header, then row-major decimals)."""
    lines = [
        f"ambireg-mlp {FORMAT_VERSION}",
        "layers " + " ".join(map(str, params.sizes)),
        "activation tanh",
        f"log_features {int(params.log_features)}",
        "in_mean " + " ".join(repr(float(v)) for v in params.in_mean),
        "in_scale " + " ".join(repr(float(v)) for v in params.in_scale),
    ]
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"weight {i} {W.shape[0]} {W.shape[1]}")
        lines += [" ".join(repr(float(v)) for v in row) for row in W]
        lines.append(f"bias {i} {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    it = iter(enumerate(lines, 1))

    def expect(key):
        lineno, line = next(it)
        parts = line.split()
        if parts[0] != key:
            raise ValueError(f"{path}:{lineno}: expected '{key}', found '{parts[0]}'")
        return parts[1:]

    version = expect("ambireg-mlp")
    if int(version[0]) != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version[0]}")
    sizes = tuple(int(s) for s in expect("layers"))
    expect("activation")
    log_features = bool(int(expect("log_features")[0]))
    in_mean = np.array(expect("in_mean"), dtype=float)
    in_scale = np.array(expect("in_scale"), dtype=float)
    weights, biases = [], []
    for _ in range(len(sizes) - 1):
        _, rows, cols = map(int, expect("weight"))
        W = np.array([next(it)[1].split() for _ in range(rows)], dtype=float).reshape(rows, cols)
        _, n = map(int, expect("bias"))
        b = np.array(next(it)[1].split(), dtype=float).reshape(n)
        weights.append(W)
        biases.append(b)
    return ClassifierParams(sizes, weights, biases, in_mean, in_scale, log_features)


def write_history(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ["epoch", "loss", "val_loss", "val_accuracy"])
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(v)) if k != "epoch" else v) for k, v in row.items()})


# --- informed weighting and selection ----------------------------------------


def informed_weight(dist_pw):
    """``1 - DIST`` where ``DIST < 1``, else 0."""
    d = np.asarray(dist_pw, dtype=float)
    w = np.where(d < 1, 1 - d, 0.0)
    return float(w) if w.ndim == 0 else w


@dataclass
class BinScores:
    """Scores of a set of bins, one entry per bin (parallel arrays).

    ``final`` is ``f1 * weight``; in uninformed mode the weight is 1.
    """

    frames: np.ndarray
    bins: np.ndarray
    bin_hz: np.ndarray
    f1: np.ndarray
    weight: np.ndarray = None

    def __post_init__(self):
        if self.weight is None:
            self.weight = np.ones_like(self.f1)

    @property
    def f2(self):
        return 1.0 - self.f1

    @property
    def final(self):
        return self.f1 * self.weight

    def __len__(self):
        return len(self.f1)


def select_top_bins(scores, fraction, bands=None):
    """Indices of the highest-scoring bins.

    ``fraction`` is a percentage of the bins. Ties go to the earlier frame,
    then the lower bin. With ``bands`` (a list of ``(lo_hz, hi_hz)``) the
    fraction is applied inside each band separately and the union returned;
    a band covers ``lo < bin_hz <= hi``.
    """
    if len(scores) == 0:
        raise ValueError("no bins to select from")
    if not 0 < fraction <= 100:
        raise ValueError("fraction must lie in (0, 100]")
    if bands is not None:
        picked = [select_band(scores, fraction, lo, hi) for lo, hi in bands]
        return np.sort(np.concatenate(picked)) if picked else np.zeros(0, int)
    return _top(scores, np.arange(len(scores)), fraction)


def select_band(scores, fraction, lo, hi):
    members = np.flatnonzero((scores.bin_hz > lo) & (scores.bin_hz <= hi))
    if members.size == 0:
        return members
    return _top(scores, members, fraction)


def _top(scores, members, fraction):
    count = int(np.ceil(fraction / 100.0 * members.size - 1e-9))
    count = min(max(count, 1), members.size)
    final = scores.final[members]
    order = np.lexsort((scores.bins[members], scores.frames[members], -final))
    return np.sort(members[order[:count]])
