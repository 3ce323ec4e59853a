import numpy as np
import pytest

from evbehave import kmeans
from evbehave.errors import InvalidSpec
from evbehave.features import build_matrix, pearson
from evbehave.metrics import adjusted_rand_index
from evbehave.sessions import parse_sessions, serialize_sessions
from evbehave.synth import CohortSpec, default_archetypes, generate, scaled


def _cor(sessions):
    return pearson([s.duration_h for s in sessions], [s.energy_kwh for s in sessions])


def test_zero_std_spec_repeats_one_session():
    spec = CohortSpec("flat", 2, 7, 9.0, 0.0, 18.0, 0.0, 1.0, 1.0, 0.0)
    lab = generate([spec], seed=1)
    assert len(lab.dataset) == 14
    assert {(s.arrival_hour, s.departure_rel_hour, s.energy_kwh) for s in lab.dataset.sessions} == {(9.0, 18.0, 10.0)}
    # weekdays only, one session per day
    assert all(s.arrival.weekday() < 5 for s in lab.dataset.sessions)


def test_default_shape(labeled_default):
    ds = labeled_default.dataset
    assert len(ds.user_ids) == 130 and len(ds) == 13000
    assert sorted(set(labeled_default.ground_truth.values())) == ["commuter", "fleet", "random", "steady_arrival"]
    for u in ds.user_ids:
        assert len(ds.user_index[u]) == 100


def test_default_invariants(labeled_default):
    for s in labeled_default.dataset.sessions:
        assert s.arrival < s.departure
        assert s.duration_h <= 24
        assert s.energy_kwh >= 0.1


def test_linear_cohort_has_unit_correlation():
    spec = CohortSpec("lin", 3, 40, 8.0, 1.0, 17.0, 2.0, 2.0, 1.0, 0.0)
    lab = generate([spec], seed=4)
    for u in lab.dataset.user_ids:
        assert _cor([lab.dataset.sessions[i] for i in lab.dataset.user_index[u]]) == pytest.approx(1.0, abs=1e-6)


def test_archetype_correlations(labeled_default):
    ds, truth = labeled_default.dataset, labeled_default.ground_truth
    for u in ds.user_ids:
        c = _cor([ds.sessions[i] for i in ds.user_index[u]])
        if truth[u] == "commuter":
            assert c > 0.95
        elif truth[u] == "random":
            assert abs(c) < 0.3


def test_csv_byte_identical():
    specs = scaled(default_archetypes(), 12, 10)
    a, b = generate(specs, seed=8), generate(specs, seed=8)
    assert serialize_sessions(a.dataset) == serialize_sessions(b.dataset)
    assert a.labels_csv() == b.labels_csv()
    assert serialize_sessions(generate(specs, seed=9).dataset) != serialize_sessions(a.dataset)
    back = parse_sessions(serialize_sessions(a.dataset))
    assert back.sessions == a.dataset.sessions


def test_clustering_recovers_archetypes(labeled_default, default_matrix):
    model = kmeans.fit(default_matrix, kmeans.KmeansConfig(k=4))
    truth = labeled_default.label_ids(default_matrix.user_ids)
    assert adjusted_rand_index(truth, model.assignments) >= 0.9


def test_scaled_split():
    specs = scaled(default_archetypes(), 10, 5)
    assert [s.n_users for s in specs] == [3, 3, 2, 2]
    assert all(s.sessions_per_user == 5 for s in specs)


@pytest.mark.parametrize("change", [
    dict(n_users=0), dict(sessions_per_user=0), dict(arrival_std=-1.0),
    dict(departure_mean=7.0), dict(arrival_mean=25.0), dict(energy_noise=-0.1),
])
def test_invalid_spec(change):
    base = dict(name="x", n_users=2, sessions_per_user=3, arrival_mean=8.0, arrival_std=1.0,
                departure_mean=17.0, departure_std=1.0, energy_slope=1.0, energy_intercept=0.0,
                energy_noise=0.0)
    with pytest.raises(InvalidSpec):
        generate([CohortSpec(**{**base, **change})])


def test_empty_spec_list():
    with pytest.raises(InvalidSpec):
        generate([])
