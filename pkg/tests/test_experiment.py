import json

import numpy as np
import pytest

from evbehave.experiment import ExperimentConfig, forecast_from_labels, run_experiment
from evbehave.features import build_matrix
from evbehave import kmeans
from evbehave.metrics import mape

SMALL = dict(k=4, folds=3, restarts=3, hidden=(16,), epochs=400, draws=10)


@pytest.fixture(scope="module")
def small_report(labeled_small):
    return run_experiment(labeled_small, ExperimentConfig(**SMALL))


def test_report_shape(small_report):
    assert [r.fold for r in small_report.folds] == [1, 2, 3]
    lines = small_report.to_csv().splitlines()
    assert lines[0] == "fold,train_acc,test_acc,mape" and len(lines) == 4
    assert sum(r.n_test for r in small_report.folds) == 24
    for r in small_report.folds:
        assert 0 <= r.train_acc <= 1 and 0 <= r.test_acc <= 1
        assert r.mape >= 0 and r.agreement_mape >= 0
    assert len(small_report.curves_csv().splitlines()) == 97


def test_means_are_fold_means(small_report):
    means = small_report.means
    for key in ("train_acc", "test_acc", "mape", "agreement_mape"):
        assert means[key] == pytest.approx(np.mean([getattr(r, key) for r in small_report.folds]))
    doc = json.loads(small_report.to_json())
    assert doc["means"]["test_acc"] == pytest.approx(means["test_acc"])
    assert doc["config"]["folds"] == 3


def test_deterministic(labeled_small, small_report):
    again = run_experiment(labeled_small, ExperimentConfig(**SMALL))
    assert again.to_json() == small_report.to_json()


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(population="everyone")
    with pytest.raises(ValueError):
        ExperimentConfig(folds=1)


def test_degraded_labels_forecast_worse(labeled_default, default_matrix):
    """Forecasts from good clusters sit closer to the true-cohort forecast than
    forecasts from labels with a third of users shuffled."""
    ds = labeled_default.dataset
    cfg = ExperimentConfig(draws=40)
    ids = default_matrix.user_ids
    truth = dict(zip(ids, labeled_default.label_ids(ids)))
    model = kmeans.fit(default_matrix, kmeans.KmeansConfig(k=4))
    clusters = model.labels()
    rng = np.random.default_rng(0)
    degraded = dict(clusters)
    for u in rng.choice(ids, size=len(ids) // 3, replace=False):
        degraded[u] = int(rng.integers(4))
    ref = forecast_from_labels(ds, truth, cfg, seed=1).load_kw
    good = mape(ref, forecast_from_labels(ds, clusters, cfg, seed=1).load_kw)
    bad = mape(ref, forecast_from_labels(ds, degraded, cfg, seed=1).load_kw)
    assert good < bad
