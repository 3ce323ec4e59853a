"""Sigmoid multilayer perceptron trained by full-batch backprop on the
regularized multi-label cross-entropy, plus random hyperparameter search."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DivergenceDetected, NoSessions, ShapeMismatch
from .metrics import accuracy, kfold_split
from .sessions import SessionDataset, sessions_by_user

CLAMP = 1e-12
CONVERGENCE_TOL = 1e-9
DEFAULT_DAYS = 20


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.0
    learning_rate: float = 1.0
    epochs: int = 2000
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")


@dataclass(frozen=True)
class UserRecordMatrix:
    user_ids: tuple[str, ...]
    rows: np.ndarray  # (u, 3d)
    labels: np.ndarray  # (u, K) one-hot
    d: int
    e_scale: float

    def __len__(self):
        return len(self.user_ids)

    @property
    def classes(self) -> np.ndarray:
        return np.argmax(self.labels, axis=1)

    def take(self, idx) -> "UserRecordMatrix":
        idx = np.asarray(idx, dtype=int)
        return UserRecordMatrix(tuple(self.user_ids[i] for i in idx), self.rows[idx],
                                self.labels[idx], self.d, self.e_scale)


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[s] has shape (n_{s+1}, n_s + 1); column 0 is the bias
    d: int = DEFAULT_DAYS
    e_scale: float = 1.0
    label_map: list[int] | None = None  # output unit -> cluster id
    cost_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise ShapeMismatch("need one weight matrix per layer transition")
        for s, w in enumerate(self.weights):
            want = (self.layer_sizes[s + 1], self.layer_sizes[s] + 1)
            if w.shape != want:
                raise ShapeMismatch(f"layer {s}: weight shape {w.shape}, expected {want}")

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def to_json(self) -> str:
        doc = {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "normalization": {"d": self.d, "e_scale": self.e_scale,
                              "arrival_scale_h": 24.0, "departure_scale_h": 24.0},
            "label_map": list(self.label_map) if self.label_map is not None
            else list(range(self.n_classes)),
            "activation": "sigmoid",
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        return cls(
            layer_sizes=[int(n) for n in doc["layer_sizes"]],
            weights=[np.array(w, dtype=float) for w in doc["weights"]],
            d=int(doc["normalization"]["d"]),
            e_scale=float(doc["normalization"]["e_scale"]),
            label_map=[int(c) for c in doc["label_map"]],
        )


def one_hot(classes, k: int) -> np.ndarray:
    classes = np.asarray(classes, dtype=int)
    out = np.zeros((len(classes), k))
    out[np.arange(len(classes)), classes] = 1.0
    return out


def encode_users(ds: SessionDataset, labels: Mapping[str, int] | Sequence[str], d: int = DEFAULT_DAYS,
                 seed: int = 0, k: int | None = None, e_scale: float | None = None) -> UserRecordMatrix:
    """Fixed-length per-user input vectors.

    ``labels`` maps user -> group; passing a plain sequence of user ids
    encodes unlabeled users (all-zero label rows). d sessions are drawn per
    user (without replacement when possible), sorted by time of day of
    arrival and flattened as (arrival/24, departure/24, energy/e_scale).
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if isinstance(labels, Mapping):
        users, classes = list(labels), [int(labels[u]) for u in labels]
    else:
        users, classes = list(labels), None
    if e_scale is None:
        e_scale = max((s.energy_kwh for s in ds.sessions), default=0.0)
    e_scale = float(e_scale) if e_scale > 0 else 1.0

    rng = np.random.default_rng(seed)
    rows = np.empty((len(users), 3 * d))
    for r, u in enumerate(users):
        sess = sessions_by_user(ds, u)
        if not sess:
            raise NoSessions(u)
        idx = rng.choice(len(sess), size=d, replace=len(sess) < d)
        picked = sorted((sess[i] for i in idx), key=lambda s: (s.arrival_hour, s.departure_hour, s.energy_kwh))
        rows[r] = np.array([(s.arrival_hour / 24.0, s.departure_hour / 24.0, s.energy_kwh / e_scale)
                            for s in picked]).ravel()
    if classes is None:
        y = np.zeros((len(users), k or 1))
    else:
        y = one_hot(classes, k if k is not None else max(classes) + 1)
    return UserRecordMatrix(tuple(users), rows, y, d, e_scale)


def init_weights(layer_sizes: Sequence[int], init_scale: float, rng) -> list[np.ndarray]:
    weights = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = init_scale / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in + 1)))
    return weights


def _forward(weights: Sequence[np.ndarray], X: np.ndarray) -> list[np.ndarray]:
    acts = [X]
    for w in weights:
        a = acts[-1]
        acts.append(sigmoid(a @ w[:, 1:].T + w[:, 0]))
    return acts


def forward(model: MlpModel, x) -> list[np.ndarray]:
    """Activations of every layer, input first. Accepts one vector or a batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ShapeMismatch(f"input has {x.shape[-1]} features, model expects {model.layer_sizes[0]}")
    return _forward(model.weights, x)


def _cost(weights, X, Y, gamma: float) -> float:
    u = len(X)
    h = np.clip(_forward(weights, X)[-1], CLAMP, 1.0 - CLAMP)
    data = -np.sum(Y * np.log(h) + (1.0 - Y) * np.log(1.0 - h)) / u
    reg = gamma / (2.0 * u) * sum(float(np.sum(w[:, 1:] ** 2)) for w in weights)
    return float(data + reg)


def _gradients(weights, X, Y, gamma: float) -> list[np.ndarray]:
    u = len(X)
    acts = _forward(weights, X)
    h = acts[-1]
    # d(BCE)/dz = h - y for a sigmoid unit; zero where the log clamp is active
    delta = (h - Y) * ((h > CLAMP) & (h < 1.0 - CLAMP))
    grads = [None] * len(weights)
    for s in range(len(weights) - 1, -1, -1):
        a = acts[s]
        g = np.empty_like(weights[s])
        g[:, 0] = delta.sum(axis=0) / u
        g[:, 1:] = delta.T @ a / u + (gamma / u) * weights[s][:, 1:]
        grads[s] = g
        if s > 0:
            delta = (delta @ weights[s][:, 1:]) * a * (1.0 - a)
    return grads


def _check(model: MlpModel, U: UserRecordMatrix):
    if U.rows.shape[1] != model.layer_sizes[0]:
        raise ShapeMismatch(f"rows have {U.rows.shape[1]} features, model expects {model.layer_sizes[0]}")
    if U.labels.shape[1] != model.layer_sizes[-1]:
        raise ShapeMismatch(f"labels have {U.labels.shape[1]} classes, model outputs {model.layer_sizes[-1]}")


def cost(model: MlpModel, U: UserRecordMatrix, gamma: float) -> float:
    _check(model, U)
    return _cost(model.weights, U.rows, U.labels, gamma)


def gradients(model: MlpModel, U: UserRecordMatrix, gamma: float) -> list[np.ndarray]:
    _check(model, U)
    return _gradients(model.weights, U.rows, U.labels, gamma)


def train(U: UserRecordMatrix, layer_sizes: Sequence[int], cfg: TrainConfig = TrainConfig(),
          label_map=None) -> MlpModel:
    """Full-batch gradient descent from a seeded uniform initialization."""
    layer_sizes = [int(n) for n in layer_sizes]
    if layer_sizes[0] != U.rows.shape[1] or layer_sizes[-1] != U.labels.shape[1]:
        raise ShapeMismatch(f"layer sizes {layer_sizes} do not fit data "
                            f"({U.rows.shape[1]} inputs, {U.labels.shape[1]} classes)")
    weights = init_weights(layer_sizes, cfg.init_scale, np.random.default_rng(cfg.seed))
    X, Y = U.rows, U.labels
    trace = [_cost(weights, X, Y, cfg.gamma)]
    for epoch in range(cfg.epochs):
        grads = _gradients(weights, X, Y, cfg.gamma)
        with np.errstate(over="ignore", invalid="ignore"):
            weights = [w - cfg.learning_rate * g for w, g in zip(weights, grads)]
            c = _cost(weights, X, Y, cfg.gamma)
        if not math.isfinite(c) or not all(np.isfinite(w).all() for w in weights):
            raise DivergenceDetected(f"non-finite cost at epoch {epoch + 1}")
        trace.append(c)
        if abs(trace[-2] - c) < CONVERGENCE_TOL:
            break
    return MlpModel(layer_sizes, weights, d=U.d, e_scale=U.e_scale, label_map=label_map, cost_trace=trace)


def predict_class(model: MlpModel, x) -> tuple[int, np.ndarray]:
    """(argmax output unit, output scores); ties go to the lowest index."""
    scores = forward(model, x)[-1]
    return int(np.argmax(scores)), scores


def predict(model: MlpModel, X) -> np.ndarray:
    """Predicted cluster ids for a batch, mapped through ``label_map``."""
    out = np.argmax(forward(model, np.atleast_2d(X))[-1], axis=1)
    if model.label_map is not None:
        out = np.asarray(model.label_map)[out]
    return out


def cost_trace_csv(trace: Sequence[float]) -> str:
    return "epoch,cost\n" + "".join(f"{i},{c!r}\n" for i, c in enumerate(trace))


# --- hyperparameter search -------------------------------------------------

@dataclass(frozen=True)
class Hyperparams:
    hidden: tuple[int, ...]
    learning_rate: float
    gamma: float


@dataclass(frozen=True)
class SearchSpace:
    hidden_layers: tuple[int, int] = (1, 4)
    neurons: tuple[int, int] = (16, 512)
    learning_rate: tuple[float, float] = (1e-4, 1e-1)
    gamma: tuple[float, float] = (0.0, 1.0)

    def contains(self, hp: Hyperparams) -> bool:
        lo, hi = self.hidden_layers
        return (lo <= len(hp.hidden) <= hi
                and all(self.neurons[0] <= n <= self.neurons[1] for n in hp.hidden)
                and self.learning_rate[0] <= hp.learning_rate <= self.learning_rate[1]
                and self.gamma[0] <= hp.gamma <= self.gamma[1])

    def sample(self, rng) -> Hyperparams:
        n_layers = int(rng.integers(self.hidden_layers[0], self.hidden_layers[1] + 1))
        lo, hi = np.log(self.neurons[0]), np.log(self.neurons[1])
        hidden = tuple(int(min(self.neurons[1], max(self.neurons[0], round(np.exp(rng.uniform(lo, hi))))))
                       for _ in range(n_layers))
        lr = float(np.exp(rng.uniform(np.log(self.learning_rate[0]), np.log(self.learning_rate[1]))))
        gamma = float(rng.uniform(*self.gamma))
        return Hyperparams(hidden, lr, gamma)


@dataclass
class SearchResult:
    best: Hyperparams
    best_score: float
    report: list[dict]


def cross_validate(U: UserRecordMatrix, hp: Hyperparams, k_folds: int, epochs: int, seed: int) -> float:
    """Mean held-out accuracy over a k-fold split of U's rows."""
    split = kfold_split(list(range(len(U))), k_folds, seed)
    scores = []
    for f, held in enumerate(split.folds):
        test_idx = sorted(held)
        train_idx = [i for i in range(len(U)) if i not in held]
        cfg = TrainConfig(gamma=hp.gamma, learning_rate=hp.learning_rate, epochs=epochs, seed=seed + f)
        model = train(U.take(train_idx), [U.rows.shape[1], *hp.hidden, U.labels.shape[1]], cfg)
        pred = np.argmax(_forward(model.weights, U.rows[test_idx])[-1], axis=1)
        scores.append(accuracy(pred, U.classes[test_idx]))
    return float(np.mean(scores))


def random_search(U: UserRecordMatrix, k_folds: int, search_space: SearchSpace | Sequence[Hyperparams],
                  budget: int, seed: int = 0, epochs: int = 1000) -> SearchResult:
    """Pick the candidate with the best k-fold mean validation accuracy.

    ``search_space`` is either a :class:`SearchSpace` to sample from or an
    explicit candidate list (cycled through ``budget`` entries). Candidates
    whose training fails are recorded with ``error`` and skipped.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(search_space, SearchSpace):
        candidates = [search_space.sample(rng) for _ in range(budget)]
    else:
        pool = list(search_space)
        candidates = [pool[i % len(pool)] for i in range(budget)]
    report, best, best_score = [], None, -1.0
    for i, hp in enumerate(candidates):
        entry = {"candidate": i, **asdict(hp)}
        try:
            score = cross_validate(U, hp, k_folds, epochs, seed)
        except DivergenceDetected as exc:
            entry.update(score=None, error=str(exc))
        else:
            entry.update(score=score, error=None)
            if score > best_score:
                best, best_score = hp, score
        report.append(entry)
    if best is None:
        raise DivergenceDetected("every candidate failed")
    return SearchResult(best, best_score, report)
