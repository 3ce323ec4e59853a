"""Day-ahead aggregate EV power envelopes sampled from per-group session statistics.

Each EV of each Monte-Carlo draw owns an RNG stream keyed by
``(seed, draw, ev_index)``. Two forecasts with the same seed therefore
share their random numbers, which keeps model-vs-model comparisons low
noise and makes forecasts over disjoint EV index ranges add up exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyCluster, InvalidPortions
from .features import pearson
from .sessions import ChargingSession, SessionDataset, sessions_by_user

HORIZON_H = 24.0
MIN_STAY_H = 10.0 / 60.0
MIN_ENERGY_KWH = 0.1
MAX_TRIES = 100


@dataclass(frozen=True)
class RateLimits:
    r_max: float = 6.6
    r_min: float = -6.6

    def __post_init__(self):
        if not (self.r_min <= 0 < self.r_max):
            raise ValueError(f"need r_min <= 0 < r_max, got {self.r_min}, {self.r_max}")


@dataclass(frozen=True)
class GroupStats:
    mean_arrival: float
    std_arrival: float
    mean_departure: float  # hours from midnight of the arrival day, may exceed 24
    std_departure: float
    cor: float
    slope: float  # kWh per hour of stay
    intercept: float
    residual_std: float
    mean_duration: float
    n_users: int = 0
    n_sessions: int = 0


@dataclass(frozen=True)
class CohortStats:
    groups: tuple[GroupStats, ...]
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if len(beta) != len(self.groups):
            raise InvalidPortions("one portion per group required")
        if (beta < 0).any() or abs(beta.sum() - 1.0) > 1e-9:
            raise InvalidPortions(f"portions must be non-negative and sum to 1, got {beta.tolist()}")


class SampledSession(NamedTuple):
    arrival: float  # hour of day, [0, 24)
    departure: float  # hours from midnight of the arrival day
    energy_kwh: float
    group: int = 0

    @property
    def duration_h(self) -> float:
        return self.departure - self.arrival


def _fit_group(sessions: Sequence[ChargingSession], n_users: int) -> GroupStats:
    arr = np.array([s.arrival_hour for s in sessions])
    dep = np.array([s.departure_rel_hour for s in sessions])
    dur = np.array([s.duration_h for s in sessions])
    energy = np.array([s.energy_kwh for s in sessions])
    try:
        cor = pearson(dur, energy) if len(sessions) >= 2 else 0.0
    except DegenerateInput:
        cor = 0.0
    if len(sessions) >= 2 and np.ptp(dur) > 0:
        slope, intercept = np.polyfit(dur, energy, 1)
    else:
        slope, intercept = 0.0, float(energy.mean())
    resid = energy - (slope * dur + intercept)
    return GroupStats(
        mean_arrival=float(arr.mean()), std_arrival=float(arr.std()),
        mean_departure=float(dep.mean()), std_departure=float(dep.std()),
        cor=float(cor), slope=float(slope), intercept=float(intercept),
        residual_std=float(resid.std()), mean_duration=float(dur.mean()),
        n_users=n_users, n_sessions=len(sessions),
    )


def cohort_stats_from_labels(ds: SessionDataset, labels: Mapping[str, int], k: int,
                             allow_empty: bool = False) -> CohortStats:
    """Pool each group's member sessions; beta = member share of labeled users.

    With ``allow_empty`` an empty group gets beta 0 and placeholder stats
    instead of raising :class:`EmptyCluster`.
    """
    members: list[list[str]] = [[] for _ in range(k)]
    for u, g in labels.items():
        members[int(g)].append(u)
    groups = []
    for j, users in enumerate(members):
        sess = [s for u in users for s in sessions_by_user(ds, u)]
        if not sess:
            if not allow_empty:
                raise EmptyCluster(f"group {j} has no sessions")
            groups.append(GroupStats(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, MIN_ENERGY_KWH, 0.0, 1.0))
            continue
        groups.append(_fit_group(sess, len(users)))
    m = sum(len(u) for u in members)
    beta = np.array([len(u) / m for u in members])
    return CohortStats(tuple(groups), beta)


def cohort_stats_from_cluster(model, ds: SessionDataset) -> CohortStats:
    return cohort_stats_from_labels(ds, model.labels(), model.k)


def sample_session(stats: GroupStats, rng, limits: RateLimits = RateLimits(), group: int = 0) -> SampledSession:
    """Normal draws for arrival/departure, linear-in-duration energy.

    Arrival wraps into [0, 24). Departure is redrawn until the stay lasts
    more than 10 minutes and at most 24 h; after 100 failures the group's
    mean duration is used. Energy is clamped into [0.1, r_max * stay].
    """
    arrival = (stats.mean_arrival + stats.std_arrival * rng.standard_normal()) % HORIZON_H
    if arrival >= HORIZON_H:  # -tiny % 24 rounds up to 24.0
        arrival = 0.0
    noise = stats.residual_std * math.sqrt(max(0.0, 1.0 - stats.cor ** 2)) * rng.standard_normal()
    for _ in range(MAX_TRIES):
        departure = stats.mean_departure + stats.std_departure * rng.standard_normal()
        if arrival + MIN_STAY_H < departure <= arrival + HORIZON_H:
            break
    else:
        departure = arrival + min(HORIZON_H, max(stats.mean_duration, 2 * MIN_STAY_H))
    duration = departure - arrival
    energy = stats.slope * duration + stats.intercept + noise
    cap = limits.r_max * duration
    energy = min(max(energy, min(MIN_ENERGY_KWH, cap)), cap)
    return SampledSession(float(arrival), float(departure), float(energy), group)


def _check_grid(T: int, dt: float):
    if T < 1 or not dt > 0 or abs(T * dt - HORIZON_H) > 1e-9:
        raise ValueError(f"need T * dt = 24 h, got T={T}, dt={dt}")


def coverage(starts, ends, T: int = 96, dt: float = 0.25) -> np.ndarray:
    """Fraction of each slot covered by [start, end) on a 24 h ring.

    ``start`` in [0, 24), ``end - start`` in [0, 24]. Returns (n, T).
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=float))[:, None]
    ends = np.atleast_1d(np.asarray(ends, dtype=float))[:, None]
    lo = np.arange(T)[None, :] * dt
    hi = lo + dt
    first = np.clip(np.minimum(np.minimum(ends, hi), HORIZON_H) - np.maximum(starts, lo), 0.0, dt)
    wrapped = np.clip(np.minimum(ends - HORIZON_H, hi) - lo, 0.0, dt)
    return np.minimum((first + wrapped) / dt, 1.0)


def rate_envelope(session, limits: RateLimits = RateLimits(), T: int = 96,
                  dt: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot (lower, upper) kW for one EV, prorated at partial slots; zero when offline."""
    _check_grid(T, dt)
    frac = coverage([session.arrival], [session.departure], T, dt)[0]
    return limits.r_min * frac, limits.r_max * frac


def check_energy_feasible(session, limits: RateLimits = RateLimits(), dt: float = 0.25) -> bool:
    return session.energy_kwh <= limits.r_max * session.duration_h + 1e-9


def greedy_load(sessions: Sequence, limits_by_group, T: int = 96, dt: float = 0.25) -> np.ndarray:
    """Aggregate kW when every EV charges at r_max from arrival until done or gone."""
    _check_grid(T, dt)
    if not sessions:
        return np.zeros(T)
    r_max = np.array([_limits_for(limits_by_group, getattr(s, "group", 0)).r_max for s in sessions])
    arr = np.array([s.arrival for s in sessions])
    dep = np.array([s.departure for s in sessions])
    energy = np.array([s.energy_kwh for s in sessions])
    end = np.minimum(arr + energy / r_max, dep)
    return r_max @ coverage(arr, end, T, dt)


def _limits_for(limits, group: int) -> RateLimits:
    if isinstance(limits, RateLimits):
        return limits
    return limits[group]


def realized_sessions(sessions: Sequence[ChargingSession]) -> list[SampledSession]:
    """Historical sessions in the sampled-session layout (group 0)."""
    return [SampledSession(s.arrival_hour, s.departure_rel_hour, s.energy_kwh) for s in sessions]


@dataclass
class DayAheadForecast:
    T: int
    dt_hours: float
    upper_kw: np.ndarray
    lower_kw: np.ndarray
    upper_std: np.ndarray
    lower_std: np.ndarray
    load_kw: np.ndarray
    load_std: np.ndarray
    total_energy_kwh: float
    n_evs: int
    draws: int
    seed: int
    draw_energy_kwh: np.ndarray = field(repr=False, default=None)
    draw_upper_kwh: np.ndarray = field(repr=False, default=None)
    samples: list | None = field(repr=False, default=None)

    def to_csv(self) -> str:
        lines = ["slot,start_hhmm,upper_kw,lower_kw,upper_std,lower_std,load_kw,load_std"]
        for t in range(self.T):
            minutes = int(round(t * self.dt_hours * 60))
            vals = (self.upper_kw[t], self.lower_kw[t], self.upper_std[t], self.lower_std[t],
                    self.load_kw[t], self.load_std[t])
            lines.append(f"{t},{minutes // 60:02d}{minutes % 60:02d}," + ",".join(repr(float(v)) for v in vals))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "total_energy_kwh": float(self.total_energy_kwh),
            "n_evs": self.n_evs, "draws": self.draws, "seed": self.seed,
            "T": self.T, "dt_hours": self.dt_hours,
            "peak_upper_kw": float(self.upper_kw.max()),
            "peak_load_kw": float(self.load_kw.max()),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _ev_rng(seed: int, draw: int, ev: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(draw, ev)))


def aggregate_forecast(stats: CohortStats, n_evs: int, limits=RateLimits(), T: int = 96,
                       dt: float = 0.25, draws: int = 100, seed: int = 0, ev_offset: int = 0,
                       keep_samples: bool = False) -> DayAheadForecast:
    """Monte-Carlo mean envelope, expected greedy load and total energy for ``n_evs`` EVs.

    Group membership of each EV is a categorical draw with probabilities
    ``stats.beta``. ``limits`` is one RateLimits or one per group.
    """
    if n_evs < 1:
        raise ValueError("n_evs must be >= 1")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    _check_grid(T, dt)
    if not isinstance(limits, RateLimits) and len(limits) != len(stats.groups):
        raise ValueError("need one RateLimits per group")
    cum = np.cumsum(stats.beta)
    last = int(np.flatnonzero(stats.beta)[-1])

    upper = np.empty((draws, T))
    lower = np.empty((draws, T))
    load = np.empty((draws, T))
    energy = np.empty(draws)
    kept = [] if keep_samples else None
    for d in range(draws):
        batch = []
        for i in range(n_evs):
            rng = _ev_rng(seed, d, ev_offset + i)
            g = min(int(np.searchsorted(cum, rng.random(), side="right")), last)
            batch.append(sample_session(stats.groups[g], rng, _limits_for(limits, g), g))
        arr = np.array([s.arrival for s in batch])
        dep = np.array([s.departure for s in batch])
        r_max = np.array([_limits_for(limits, s.group).r_max for s in batch])
        r_min = np.array([_limits_for(limits, s.group).r_min for s in batch])
        frac = coverage(arr, dep, T, dt)
        upper[d] = r_max @ frac
        lower[d] = r_min @ frac
        load[d] = greedy_load(batch, limits, T, dt)
        energy[d] = sum(s.energy_kwh for s in batch)
        if keep_samples:
            kept.append(batch)
    return DayAheadForecast(
        T=T, dt_hours=dt,
        upper_kw=upper.mean(axis=0), lower_kw=lower.mean(axis=0),
        upper_std=upper.std(axis=0), lower_std=lower.std(axis=0),
        load_kw=load.mean(axis=0), load_std=load.std(axis=0),
        total_energy_kwh=float(energy.mean()), n_evs=n_evs, draws=draws, seed=seed,
        draw_energy_kwh=energy, draw_upper_kwh=upper.sum(axis=1) * dt, samples=kept,
    )
