"""Command-line front end: ``evbehave synth|ingest|cluster|train|forecast|evaluate``.

Every command reads an optional JSON config (``--config``; flat keys or a
section named after the subcommand) and lets flags override it. Exit codes:
0 ok, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from . import experiment, features, forecast, kmeans, metrics, mlp, sessions, synth
from .errors import EvBehaveError, SessionParseError

log = logging.getLogger("evbehave")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).replace(" ", "").split(",") if t)


def _k_range(text: str) -> list[int]:
    text = str(text)
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return list(_int_list(text))


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _need_file(path) -> Path:
    if path is None:
        raise UsageError("missing required input path")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _positive(name, value, allow_zero=False):
    if value is None or value < 0 or (value == 0 and not allow_zero):
        raise UsageError(f"--{name.replace('_', '-')} must be {'>= 0' if allow_zero else '> 0'}, got {value}")


def _load_ds(path, lenient=False) -> sessions.SessionDataset:
    p = _need_file(path)
    try:
        ds = sessions.load_sessions(p, strict=not lenient)
    except SessionParseError as exc:
        raise UsageError(f"{p}: {exc}") from None
    if ds.rejected:
        log.warning("%s: skipped %d bad row(s)", p, len(ds.rejected))
    return ds


def _load_labels(path) -> dict[str, str]:
    lines = _need_file(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "user_id,cohort":
        raise UsageError(f"{path}: expected header 'user_id,cohort'")
    return dict(line.split(",", 1) for line in lines[1:] if line.strip())


# --- commands --------------------------------------------------------------

def cmd_synth(a) -> int:
    _positive("users", a.users)
    _positive("sessions_per_user", a.sessions_per_user)
    if a.users < 4:
        raise UsageError(f"--users must be >= 4 (one per archetype), got {a.users}")
    lab = synth.generate(synth.default_archetypes(a.users, a.sessions_per_user), seed=a.seed)
    out = Path(a.out)
    _write(out / "sessions.csv", sessions.serialize_sessions(lab.dataset))
    _write(out / "labels.csv", lab.labels_csv())
    print(f"{len(lab.ground_truth)} users, {len(lab.dataset)} sessions -> {out}")
    return EXIT_OK


def cmd_ingest(a) -> int:
    ds = _load_ds(a.sessions, a.lenient)
    for err in ds.rejected:
        print(f"rejected: {err}", file=sys.stderr)
    fm = features.build_matrix(ds)
    out = Path(a.out)
    _write(out / "features.csv", fm.to_csv())
    _write(out / "normalization.json", fm.normalization_json())
    print(f"{len(ds)} sessions, {len(ds.user_index)} users, {len(fm)} feature rows, "
          f"{len(fm.excluded)} users excluded, {len(ds.rejected)} rows rejected")
    return EXIT_OK


def cmd_cluster(a) -> int:
    _positive("k", a.k)
    _positive("restarts", a.restarts)
    _positive("max_iter", a.max_iter)
    _positive("epsilon", a.epsilon)
    ds = _load_ds(a.sessions, a.lenient)
    fm = features.build_matrix(ds)
    cfg = kmeans.KmeansConfig(k=a.k, epsilon=a.epsilon, max_iter=a.max_iter, seed=a.seed, restarts=a.restarts)
    model = kmeans.fit(fm, cfg)
    out = Path(a.out)
    _write(out / "cluster_model.json", model.to_json())
    scatter = ["user_id,cluster," + ",".join(features.FEATURE_NAMES)]
    for u, c, r in zip(model.user_ids, model.assignments, fm.raw):
        scatter.append(f"{u},{int(c)}," + ",".join(repr(float(v)) for v in r))
    _write(out / "clusters.csv", "\n".join(scatter) + "\n")
    if a.sweep:
        curve = kmeans.choose_k(fm, _k_range(a.sweep), cfg)
        _write(out / "cost_curve.csv", kmeans.cost_curve_csv(curve))
    print(f"k={model.k} cost={model.cost:.6g} iterations={model.iterations}")
    if a.labels:
        truth = _load_labels(a.labels)
        ari = metrics.adjusted_rand_index([truth[u] for u in model.user_ids], model.assignments)
        print(f"ARI vs labels: {ari:.4f}")
    return EXIT_OK


def _hidden(a):
    hidden = _int_list(a.hidden)
    if not hidden or min(hidden) < 1:
        raise UsageError(f"--hidden needs positive layer sizes, got {a.hidden!r}")
    return hidden


def cmd_train(a) -> int:
    _positive("d", a.d)
    _positive("epochs", a.epochs)
    _positive("learning_rate", a.learning_rate, allow_zero=True)
    _positive("gamma", a.gamma, allow_zero=True)
    hidden = _hidden(a)
    ds = _load_ds(a.sessions, a.lenient)
    cm = kmeans.ClusterModel.from_json(_need_file(a.cluster_model).read_text(encoding="utf-8"))
    U = mlp.encode_users(ds, cm.labels(), a.d, a.seed, cm.k)
    out = Path(a.out)
    hp = mlp.Hyperparams(hidden, a.learning_rate, a.gamma)
    if a.search_budget:
        res = mlp.random_search(U, a.search_folds, mlp.SearchSpace(), a.search_budget,
                                seed=a.seed, epochs=a.search_epochs)
        hp = res.best
        _write(out / "search.json", json.dumps({"best": vars(hp) | {"hidden": list(hp.hidden)},
                                                "best_score": res.best_score, "candidates": res.report},
                                               indent=2, sort_keys=True) + "\n")
    cfg = mlp.TrainConfig(gamma=hp.gamma, learning_rate=hp.learning_rate, epochs=a.epochs, seed=a.seed)
    model = mlp.train(U, [U.rows.shape[1], *hp.hidden, cm.k], cfg, label_map=list(range(cm.k)))
    _write(out / "mlp_model.json", model.to_json())
    _write(out / "cost_trace.csv", mlp.cost_trace_csv(model.cost_trace))
    acc = metrics.accuracy(mlp.predict(model, U.rows), U.classes)
    print(f"layers={model.layer_sizes} epochs={len(model.cost_trace) - 1} "
          f"final_cost={model.cost_trace[-1]:.6g} train_acc={acc:.4f}")
    return EXIT_OK


def cmd_forecast(a) -> int:
    if a.n_evs is not None:
        _positive("n_evs", a.n_evs)
    _positive("draws", a.draws)
    _positive("T", a.T)
    _positive("dt", a.dt)
    if abs(a.T * a.dt - 24.0) > 1e-9:
        raise UsageError(f"--T times --dt must be 24 h, got {a.T} x {a.dt}")
    try:
        limits = forecast.RateLimits(a.r_max, a.r_min)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = _load_ds(a.sessions, a.lenient)
    cm = kmeans.ClusterModel.from_json(_need_file(a.cluster_model).read_text(encoding="utf-8"))
    labels = cm.labels()
    if a.mlp_model:
        model = mlp.MlpModel.from_json(_need_file(a.mlp_model).read_text(encoding="utf-8"))
        users = [u for u in ds.user_ids]
        U = mlp.encode_users(ds, users, model.d, a.seed, model.n_classes, e_scale=model.e_scale)
        labels = dict(zip(users, map(int, mlp.predict(model, U.rows))))
    stats = forecast.cohort_stats_from_labels(ds, labels, cm.k, allow_empty=bool(a.mlp_model))
    fc = forecast.aggregate_forecast(stats, a.n_evs or len(labels), limits, T=a.T, dt=a.dt,
                                     draws=a.draws, seed=a.seed)
    out = Path(a.out)
    _write(out / "forecast.csv", fc.to_csv())
    summary = fc.summary() | {"beta": stats.beta.tolist(), "labels_from": "mlp" if a.mlp_model else "cluster"}
    _write(out / "forecast.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"E_total={fc.total_energy_kwh:.3f} kWh, peak envelope={fc.upper_kw.max():.2f} kW, "
          f"peak load={fc.load_kw.max():.2f} kW, N={fc.n_evs}")
    return EXIT_OK


def cmd_evaluate(a) -> int:
    _positive("folds", a.folds)
    _positive("draws", a.draws)
    _positive("epochs", a.epochs)
    if a.n_evs is not None:
        _positive("n_evs", a.n_evs)
    ds = _load_ds(a.sessions, a.lenient)
    data = ds
    if a.labels:
        data = synth.LabeledDataset(ds, _load_labels(a.labels))
    try:
        cfg = experiment.ExperimentConfig(
            k=a.k, folds=a.folds, restarts=a.restarts, d=a.d, hidden=_hidden(a),
            learning_rate=a.learning_rate, gamma=a.gamma, epochs=a.epochs, search_budget=a.search_budget,
            search_folds=a.search_folds, search_epochs=a.search_epochs, T=a.T, dt=a.dt, draws=a.draws,
            n_evs=a.n_evs, r_max=a.r_max, r_min=a.r_min, population=a.population, seed=a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = experiment.run_experiment(data, cfg)
    out = Path(a.out)
    _write(out / "report.csv", report.to_csv())
    _write(out / "report.json", report.to_json())
    _write(out / "curves.csv", report.curves_csv())
    print(report.to_csv(), end="")
    print("means: " + ", ".join(f"{k}={v:.4f}" for k, v in report.means.items()))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "cluster": cmd_cluster,
            "train": cmd_train, "forecast": cmd_forecast, "evaluate": cmd_evaluate}

DEFAULTS = {
    "out": ".", "seed": 0, "lenient": False,
    "users": 130, "sessions_per_user": 100, "sessions": None,
    "k": 4, "restarts": 10, "epsilon": 1e-6, "max_iter": 300, "sweep": None, "labels": None,
    "d": mlp.DEFAULT_DAYS, "hidden": "32", "learning_rate": 1.0, "gamma": 0.0, "epochs": 2000,
    "search_budget": 0, "search_folds": 3, "search_epochs": 500,
    "n_evs": None, "draws": 100, "T": 96, "dt": 0.25, "r_max": 6.6, "r_min": -6.6, "mlp_model": None,
    "folds": 10, "population": "all", "cluster_model": None,
}


def _add(p, *names):
    spec = {
        "out": dict(help="output directory"),
        "seed": dict(type=int),
        "lenient": dict(action="store_const", const=True, help="skip and report bad rows"),
        "sessions": dict(metavar="PATH", help="sessions CSV"),
        "users": dict(type=int), "sessions_per_user": dict(type=int),
        "k": dict(type=int), "restarts": dict(type=int), "epsilon": dict(type=float),
        "max_iter": dict(type=int), "sweep": dict(help="k range for the cost curve, e.g. 1-8"),
        "labels": dict(help="labels CSV (user_id,cohort)"),
        "d": dict(type=int, help="sessions per user in the classifier input"),
        "hidden": dict(help="comma-separated hidden layer sizes"),
        "learning_rate": dict(type=float), "gamma": dict(type=float), "epochs": dict(type=int),
        "search_budget": dict(type=int), "search_folds": dict(type=int), "search_epochs": dict(type=int),
        "n_evs": dict(type=int), "draws": dict(type=int), "T": dict(type=int), "dt": dict(type=float),
        "r_max": dict(type=float), "r_min": dict(type=float),
        "mlp_model": dict(help="use classifier labels from this model"),
        "cluster_model": dict(help="cluster model JSON"),
        "folds": dict(type=int), "population": dict(choices=["all", "test"]),
    }
    for name in names:
        kw = dict(spec[name])
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evbehave", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    forecast_opts = ("n_evs", "draws", "T", "dt", "r_max", "r_min")
    mlp_opts = ("d", "hidden", "learning_rate", "gamma", "epochs", "search_budget", "search_folds",
                "search_epochs")
    _add(sub.add_parser("synth", help="generate a labeled synthetic dataset"), "out", "seed", "users", "sessions_per_user")
    _add(sub.add_parser("ingest", help="validate sessions and export user features"),
         "sessions", "out", "lenient")
    _add(sub.add_parser("cluster", help="K-means user groups"), "sessions", "out", "seed", "lenient", "k",
         "restarts", "epsilon", "max_iter", "sweep", "labels")
    _add(sub.add_parser("train", help="train the group classifier"), "sessions", "cluster_model", "out",
         "seed", "lenient", *mlp_opts)
    _add(sub.add_parser("forecast", help="day-ahead load envelope"), "sessions", "cluster_model",
         "mlp_model", "out", "seed", "lenient", *forecast_opts)
    _add(sub.add_parser("evaluate", help="k-fold protocol report"), "sessions", "labels", "out", "seed",
         "lenient", "k", "restarts", "folds", "population", *mlp_opts, *forecast_opts)
    return parser


def _resolve(args) -> argparse.Namespace:
    merged = dict(DEFAULTS)
    if args.config:
        doc = json.loads(_need_file(args.config).read_text(encoding="utf-8"))
        section = doc.get(args.command, {})
        flat = {k: v for k, v in doc.items() if k not in COMMANDS}
        merged.update({k.replace("-", "_"): v for k, v in {**flat, **section}.items()})
    for k, v in vars(args).items():
        if v is not None:
            merged[k] = v
    return argparse.Namespace(**merged)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](_resolve(args))
    except UsageError as exc:
        print(f"evbehave {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvBehaveError, OSError, RuntimeError) as exc:
        print(f"evbehave {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
