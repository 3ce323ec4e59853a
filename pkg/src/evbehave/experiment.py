"""K-fold protocol: cluster, train the classifier, forecast from both label
sets, and score everything into a per-fold report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np

from . import features, kmeans, mlp
from .errors import EvBehaveError
from .forecast import (DayAheadForecast, RateLimits, aggregate_forecast, cohort_stats_from_labels,
                       greedy_load, realized_sessions)
from .metrics import accuracy, adjusted_rand_index, kfold_split, mape
from .sessions import SessionDataset, sessions_by_user
from .synth import LabeledDataset

REFERENCE_ACCURACY = {"train_acc": 0.85, "test_acc": 0.78}


@dataclass(frozen=True)
class ExperimentConfig:
    k: int = 4
    folds: int = 10
    restarts: int = 10
    d: int = mlp.DEFAULT_DAYS
    hidden: tuple[int, ...] = (32,)
    learning_rate: float = 1.0
    gamma: float = 0.0
    epochs: int = 2000
    search_budget: int = 0
    search_folds: int = 3
    search_epochs: int = 500
    T: int = 96
    dt: float = 0.25
    draws: int = 50
    n_evs: int | None = None
    r_max: float = 6.6
    r_min: float = -6.6
    population: str = "all"  # "all" fold users or "test" users only
    seed: int = 0

    def __post_init__(self):
        if self.population not in ("all", "test"):
            raise ValueError("population must be 'all' or 'test'")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.n_evs is not None and self.n_evs < 1:
            raise ValueError("n_evs must be >= 1")


@dataclass
class FoldResult:
    fold: int
    train_acc: float
    test_acc: float
    mape: float  # classifier-label forecast vs simulated realized load
    agreement_mape: float  # cluster-label forecast vs classifier-label forecast
    cluster_mape: float  # cluster-label forecast vs realized load
    n_train: int
    n_test: int
    kmeans_cost: float
    cluster_ari_truth: float | None = None
    mlp_test_ari_truth: float | None = None


@dataclass
class ExperimentReport:
    folds: list[FoldResult]
    hyperparams: dict
    config: dict
    search: list[dict] = field(default_factory=list)
    curves: dict = field(default_factory=dict)

    @property
    def means(self) -> dict:
        out = {}
        for f in fields(FoldResult):
            if f.name == "fold":
                continue
            vals = [getattr(r, f.name) for r in self.folds]
            if all(v is not None for v in vals):
                out[f.name] = float(np.mean(vals))
        return out

    def to_csv(self) -> str:
        lines = ["fold,train_acc,test_acc,mape"]
        lines += [f"{r.fold},{r.train_acc!r},{r.test_acc!r},{r.mape!r}" for r in self.folds]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "folds": [asdict(r) for r in self.folds],
            "means": self.means,
            "hyperparams": self.hyperparams,
            "config": self.config,
            "search": self.search,
            "reference": REFERENCE_ACCURACY,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def curves_csv(self) -> str:
        """Fold-1 load curves (cluster model, classifier model, realized)."""
        c = self.curves
        lines = ["slot,start_hhmm,cluster_load_kw,mlp_load_kw,realized_kw"]
        for t, (a, b, r) in enumerate(zip(c["cluster"], c["mlp"], c["realized"])):
            minutes = int(round(t * c["dt"] * 60))
            lines.append(f"{t},{minutes // 60:02d}{minutes % 60:02d},{a!r},{b!r},{r!r}")
        return "\n".join(lines) + "\n"


def forecast_from_labels(ds: SessionDataset, labels: Mapping[str, int], cfg: ExperimentConfig,
                         seed: int, n_evs: int | None = None) -> DayAheadForecast:
    stats = cohort_stats_from_labels(ds, labels, cfg.k, allow_empty=True)
    return aggregate_forecast(stats, n_evs or cfg.n_evs or len(labels), RateLimits(cfg.r_max, cfg.r_min),
                              T=cfg.T, dt=cfg.dt, draws=cfg.draws, seed=seed)


def realized_load(ds: SessionDataset, user_ids, cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """One historical session per user, charged greedily at r_max."""
    rng = np.random.default_rng(seed)
    picked = []
    for u in user_ids:
        sess = sessions_by_user(ds, u)
        picked.append(sess[int(rng.integers(len(sess)))])
    return greedy_load(realized_sessions(picked), RateLimits(cfg.r_max, cfg.r_min), cfg.T, cfg.dt)


def _select_hyperparams(ds, users, cfg: ExperimentConfig):
    hp = mlp.Hyperparams(tuple(cfg.hidden), cfg.learning_rate, cfg.gamma)
    if cfg.search_budget < 1:
        return hp, []
    fm = features.build_matrix(ds, users)
    km = kmeans.fit(fm, kmeans.KmeansConfig(k=cfg.k, restarts=cfg.restarts, seed=cfg.seed))
    U = mlp.encode_users(ds, km.labels(), cfg.d, cfg.seed, cfg.k)
    res = mlp.random_search(U, cfg.search_folds, mlp.SearchSpace(), cfg.search_budget,
                            seed=cfg.seed, epochs=cfg.search_epochs)
    return res.best, res.report


def run_experiment(data: LabeledDataset | SessionDataset, cfg: ExperimentConfig = ExperimentConfig()
                   ) -> ExperimentReport:
    truth = data.ground_truth if isinstance(data, LabeledDataset) else None
    ds = data.dataset if isinstance(data, LabeledDataset) else data
    users = [u for u in ds.user_ids if len(ds.user_index[u]) >= 2]
    split = kfold_split(users, cfg.folds, cfg.seed)
    hp, search = _select_hyperparams(ds, users, cfg)

    results, curves = [], {}
    for i in range(cfg.folds):
        fold_seed = cfg.seed * 1000 + i
        train_ids, test_ids = split.train_test(i)
        try:
            fm_train = features.build_matrix(ds, train_ids)
            km = kmeans.fit(fm_train, kmeans.KmeansConfig(k=cfg.k, restarts=cfg.restarts, seed=fold_seed))
            fm_test = features.build_matrix(ds, test_ids, normalization=(fm_train.shift, fm_train.scale))
            test_clusters = km.predict(fm_test)
            train_labels = km.labels()
            test_labels = {u: int(c) for u, c in zip(fm_test.user_ids, test_clusters)}

            U_train = mlp.encode_users(ds, train_labels, cfg.d, fold_seed, cfg.k,
                                       e_scale=max(s.energy_kwh for s in ds.subset(train_ids).sessions))
            U_test = mlp.encode_users(ds, test_labels, cfg.d, fold_seed, cfg.k, e_scale=U_train.e_scale)
            model = mlp.train(U_train, [U_train.rows.shape[1], *hp.hidden, cfg.k],
                              mlp.TrainConfig(gamma=hp.gamma, learning_rate=hp.learning_rate,
                                              epochs=cfg.epochs, seed=fold_seed))
            pred_train = mlp.predict(model, U_train.rows)
            pred_test = mlp.predict(model, U_test.rows)

            population = list(U_test.user_ids) if cfg.population == "test" else \
                list(U_train.user_ids) + list(U_test.user_ids)
            cluster_all = {**train_labels, **test_labels}
            mlp_all = {**dict(zip(U_train.user_ids, map(int, pred_train))),
                       **dict(zip(U_test.user_ids, map(int, pred_test)))}
            fc_cluster = forecast_from_labels(ds, {u: cluster_all[u] for u in population}, cfg, fold_seed)
            fc_mlp = forecast_from_labels(ds, {u: mlp_all[u] for u in population}, cfg, fold_seed)
            real = realized_load(ds, population, cfg, fold_seed)
        except EvBehaveError as exc:
            exc.args = (f"fold {i + 1}: {exc}",)
            raise

        row = FoldResult(
            fold=i + 1,
            train_acc=accuracy(pred_train, U_train.classes),
            test_acc=accuracy(pred_test, U_test.classes),
            mape=mape(real, fc_mlp.load_kw),
            agreement_mape=mape(fc_cluster.load_kw, fc_mlp.load_kw),
            cluster_mape=mape(real, fc_cluster.load_kw),
            n_train=len(U_train), n_test=len(U_test), kmeans_cost=km.cost,
        )
        if truth is not None:
            fold_users = list(U_train.user_ids) + list(U_test.user_ids)
            row.cluster_ari_truth = adjusted_rand_index([truth[u] for u in fold_users],
                                                        [cluster_all[u] for u in fold_users])
            if len(test_ids) >= 2:
                row.mlp_test_ari_truth = adjusted_rand_index([truth[u] for u in U_test.user_ids],
                                                             list(map(int, pred_test)))
        results.append(row)
        if i == 0:
            curves = {"dt": cfg.dt, "cluster": fc_cluster.load_kw.tolist(),
                      "mlp": fc_mlp.load_kw.tolist(), "realized": real.tolist()}

    return ExperimentReport(results, asdict(hp), asdict(cfg), search, curves)
