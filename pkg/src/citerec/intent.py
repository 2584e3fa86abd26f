"""Three-class citation intent classifier.

A hashed bag-of-words featurizer feeds a single-hidden-layer MLP
(256 units, dropout 0.1, softmax over Background / Method / Comparative).
Training uses Adam with lr 1e-4 and batch size 64. The featurizer is a
stand-in for a pretrained sentence embedding and can be swapped via the
``featurize`` argument of :func:`train_intent` / :func:`classify_intent`.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ValidationError

_WORD_RE = re.compile(r"[a-z0-9]+")


class IntentLabel(str, Enum):
    BACKGROUND = "background"
    METHOD = "method"
    COMPARATIVE = "comparative"

    @classmethod
    def from_string(cls, s: str) -> "IntentLabel":
        try:
            return cls(s.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown intent label {s!r}") from None


# Fixed class order: one-hot encodings, logits and confusion-matrix axes
# all follow this ordering, and argmax ties resolve toward the first entry.
INTENT_ORDER = (IntentLabel.BACKGROUND, IntentLabel.METHOD, IntentLabel.COMPARATIVE)
N_CLASSES = len(INTENT_ORDER)
_LABEL_INDEX = {label: i for i, label in enumerate(INTENT_ORDER)}


def intent_index(label: IntentLabel) -> int:
    return _LABEL_INDEX[label]


def hashed_bow(text: str, n_buckets: int) -> np.ndarray:
    """Hash lowercase word tokens into a fixed-size count vector."""
    vec = np.zeros(n_buckets, dtype=np.float64)
    for word in _WORD_RE.findall(text.lower()):
        vec[zlib.crc32(word.encode("utf-8")) % n_buckets] += 1.0
    return vec


@dataclass
class IntentModel:
    """MLP head over a hashed bag-of-words input.

    hidden=256 and dropout=0.1 are the defaults the classifier was
    designed around; both stay overridable.
    """

    n_buckets: int
    hidden: int
    dropout: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, n_buckets: int = 8192, hidden: int = 256, dropout: float = 0.1,
             seed: int = 0) -> "IntentModel":
        rng = np.random.default_rng(seed)
        return cls(
            n_buckets=n_buckets,
            hidden=hidden,
            dropout=dropout,
            w1=rng.normal(0.0, 0.05, size=(n_buckets, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 0.05, size=(hidden, N_CLASSES)),
            b2=np.zeros(N_CLASSES),
        )

    @classmethod
    def zeros(cls, n_buckets: int = 8192, hidden: int = 256,
              dropout: float = 0.1) -> "IntentModel":
        return cls(
            n_buckets=n_buckets,
            hidden=hidden,
            dropout=dropout,
            w1=np.zeros((n_buckets, hidden)),
            b1=np.zeros(hidden),
            w2=np.zeros((hidden, N_CLASSES)),
            b2=np.zeros(N_CLASSES),
        )


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(x: np.ndarray, model: IntentModel,
             drop_mask: np.ndarray | None = None):
    pre = x @ model.w1 + model.b1
    h = np.maximum(pre, 0.0)
    if drop_mask is not None:
        h = h * drop_mask
    logits = h @ model.w2 + model.b2
    return pre, h, logits


def classify_intent(sentence: str, model: IntentModel) -> np.ndarray:
    """Return the (background, method, comparative) probability triple.

    Dropout is inference-disabled, so repeated calls are identical.
    """
    x = hashed_bow(sentence, model.n_buckets)
    _, _, logits = _forward(x[None, :], model)
    return _softmax(logits)[0]


def predict_intent(sentence: str, model: IntentModel) -> IntentLabel:
    probs = classify_intent(sentence, model)
    return INTENT_ORDER[int(np.argmax(probs))]


@dataclass
class IntentTrainResult:
    model: IntentModel
    epoch_losses: list[float]


def train_intent(examples, epochs: int, batch_size: int = 64, lr: float = 1e-4,
                 n_buckets: int = 8192, hidden: int = 256, dropout: float = 0.1,
                 seed: int = 0) -> IntentTrainResult:
    """Train the classifier on (sentence, IntentLabel) pairs.

    Adam with the standard moment constants; dropout active only here.
    Raises if any class has no examples. epochs=0 returns the seeded
    initial model untouched.
    """
    examples = list(examples)
    if not examples:
        raise ValidationError("empty intent training set")
    counts = {label: 0 for label in INTENT_ORDER}
    for _, label in examples:
        counts[label] += 1
    missing = [label.value for label in INTENT_ORDER if counts[label] == 0]
    if missing:
        raise ValidationError(f"intent classes without examples: {missing}")

    model = IntentModel.init(n_buckets, hidden, dropout, seed=seed)
    x_all = np.stack([hashed_bow(text, n_buckets) for text, _ in examples])
    y_all = np.array([intent_index(label) for _, label in examples])

    rng = np.random.default_rng([seed, 1])
    params = [model.w1, model.b1, model.w2, model.b2]
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    losses = []
    n = len(examples)
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x, y = x_all[idx], y_all[idx]
            keep = (rng.random((len(idx), hidden)) >= dropout)
            drop_mask = keep / (1.0 - dropout)

            pre, h, logits = _forward(x, model, drop_mask)
            probs = _softmax(logits)
            loss = -np.mean(np.log(probs[np.arange(len(idx)), y] + 1e-12))
            epoch_loss += loss
            n_batches += 1

            dlogits = probs.copy()
            dlogits[np.arange(len(idx)), y] -= 1.0
            dlogits /= len(idx)
            dw2 = h.T @ dlogits
            db2 = dlogits.sum(axis=0)
            dh = (dlogits @ model.w2.T) * drop_mask
            dpre = dh * (pre > 0)
            dw1 = x.T @ dpre
            db1 = dpre.sum(axis=0)

            step += 1
            for p, g, m_arr, v_arr in zip(params, [dw1, db1, dw2, db2],
                                          m_state, v_state):
                m_arr *= beta1
                m_arr += (1 - beta1) * g
                v_arr *= beta2
                v_arr += (1 - beta2) * g * g
                m_hat = m_arr / (1 - beta1 ** step)
                v_hat = v_arr / (1 - beta2 ** step)
                p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        losses.append(epoch_loss / max(n_batches, 1))
    return IntentTrainResult(model=model, epoch_losses=losses)


@dataclass
class IntentMetrics:
    """Per-class precision/recall/F1 plus the 3x3 confusion matrix.

    Confusion rows are true labels, columns predicted, both in
    INTENT_ORDER.
    """

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float
    macro_precision: float = field(init=False)
    macro_recall: float = field(init=False)
    macro_f1: float = field(init=False)

    def __post_init__(self):
        self.macro_precision = float(np.mean(self.precision))
        self.macro_recall = float(np.mean(self.recall))
        self.macro_f1 = float(np.mean(self.f1))


def metrics_from_confusion(confusion: np.ndarray) -> IntentMetrics:
    confusion = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(true_totals > 0, tp / true_totals, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    total = confusion.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return IntentMetrics(confusion=confusion, precision=precision,
                         recall=recall, f1=f1, accuracy=accuracy)


def evaluate_intent(model: IntentModel, test_set) -> IntentMetrics:
    """Score (sentence, label) pairs; raises on an empty test set."""
    test_set = list(test_set)
    if not test_set:
        raise ValidationError("empty intent test set")
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for text, label in test_set:
        pred = predict_intent(text, model)
        confusion[intent_index(label), intent_index(pred)] += 1
    return metrics_from_confusion(confusion)


def holdout_eval(examples, test_fraction: float = 0.2, epochs: int = 40,
                 batch_size: int = 64, lr: float = 1e-4,
                 n_buckets: int = 8192, hidden: int = 256,
                 dropout: float = 0.1, seed: int = 0) -> IntentMetrics:
    """Quick mode: one stratified train/test split instead of k-fold."""
    examples = list(examples)
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must be in (0, 1)")
    by_class = {label: [] for label in INTENT_ORDER}
    for ex in examples:
        by_class[ex[1]].append(ex)
    rng = np.random.default_rng([seed, 4])
    train, test = [], []
    for label in INTENT_ORDER:
        group = by_class[label]
        order = rng.permutation(len(group))
        n_test = max(1, int(round(test_fraction * len(group)))) if group else 0
        for pos, idx in enumerate(order):
            (test if pos < n_test else train).append(group[idx])
    result = train_intent(train, epochs=epochs, batch_size=batch_size,
                          lr=lr, n_buckets=n_buckets, hidden=hidden,
                          dropout=dropout, seed=seed)
    return evaluate_intent(result.model, test)


@dataclass
class CrossValResult:
    fold_metrics: list[IntentMetrics]
    pooled: IntentMetrics


def cross_validate(examples, folds: int = 10, epochs: int = 40,
                   batch_size: int = 64, lr: float = 1e-4,
                   n_buckets: int = 8192, hidden: int = 256,
                   dropout: float = 0.1, seed: int = 0) -> CrossValResult:
    """Stratified k-fold cross-validation; pooled metrics aggregate the
    per-fold confusion matrices."""
    examples = list(examples)
    if folds < 2:
        raise ValidationError("cross-validation needs at least 2 folds")
    by_class = {label: [] for label in INTENT_ORDER}
    for ex in examples:
        by_class[ex[1]].append(ex)
    rng = np.random.default_rng([seed, 2])
    fold_members = [[] for _ in range(folds)]
    for label in INTENT_ORDER:
        group = by_class[label]
        for pos, idx in enumerate(rng.permutation(len(group))):
            fold_members[pos % folds].append(group[idx])

    fold_metrics = []
    pooled_confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for f in range(folds):
        test = fold_members[f]
        train = [ex for g in range(folds) if g != f for ex in fold_members[g]]
        result = train_intent(train, epochs=epochs, batch_size=batch_size,
                              lr=lr, n_buckets=n_buckets, hidden=hidden,
                              dropout=dropout, seed=seed + f)
        metrics = evaluate_intent(result.model, test)
        fold_metrics.append(metrics)
        pooled_confusion += metrics.confusion
    return CrossValResult(fold_metrics=fold_metrics,
                          pooled=metrics_from_confusion(pooled_confusion))
