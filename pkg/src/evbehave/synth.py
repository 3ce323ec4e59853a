"""Labeled synthetic charging data built from behavior archetypes."""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .sessions import ChargingSession, SessionDataset

START_DATE = date(2017, 1, 2)  # a Monday
MIN_ENERGY_KWH = 0.1


@dataclass(frozen=True)
class CohortSpec:
    name: str
    n_users: int
    sessions_per_user: int
    arrival_mean: float
    arrival_std: float
    departure_mean: float  # hours from midnight of the arrival day
    departure_std: float
    energy_slope: float  # kWh per hour of stay
    energy_intercept: float
    energy_noise: float
    seed: int = 0

    def validate(self):
        if self.n_users < 1:
            raise InvalidSpec(f"{self.name}: n_users must be >= 1")
        if self.sessions_per_user < 1:
            raise InvalidSpec(f"{self.name}: sessions_per_user must be >= 1")
        if min(self.arrival_std, self.departure_std, self.energy_noise) < 0:
            raise InvalidSpec(f"{self.name}: standard deviations must be >= 0")
        if not self.departure_mean > self.arrival_mean:
            raise InvalidSpec(f"{self.name}: departure mean must exceed arrival mean")
        if not 0 <= self.arrival_mean < 24:
            raise InvalidSpec(f"{self.name}: arrival mean must be a time of day")


@dataclass(frozen=True)
class LabeledDataset:
    dataset: SessionDataset
    ground_truth: dict[str, str]

    def labels_csv(self) -> str:
        return "user_id,cohort\n" + "".join(f"{u},{c}\n" for u, c in self.ground_truth.items())

    def label_ids(self, user_ids: Sequence[str]) -> list[int]:
        """Cohort labels as integers in order of first appearance."""
        names = list(dict.fromkeys(self.ground_truth.values()))
        return [names.index(self.ground_truth[u]) for u in user_ids]


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (i < extra) for i in range(parts)]


def default_archetypes(n_users: int = 130, sessions_per_user: int = 100) -> list[CohortSpec]:
    """Four cohorts: commuter, fleet, steady-arrival, random.

    Commuters plug in 8-17 h with energy almost linear in stay; fleet cars
    have spread times and flat energy; steady-arrival drivers come at 7 h
    but leave anywhere in the afternoon; random users have wide times and
    no duration/energy relation.
    """
    counts = _split(n_users, 4)
    shapes = [
        ("commuter", 8.0, 0.25, 17.0, 0.25, 1.5, 0.5, 0.05),
        ("fleet", 11.0, 2.0, 16.0, 2.0, 0.0, 12.0, 0.5),
        ("steady_arrival", 7.0, 0.2, 15.0, 3.0, 0.9, 1.0, 1.0),
        ("random", 13.0, 4.0, 19.0, 4.0, 0.0, 8.0, 4.0),
    ]
    return [CohortSpec(name, n, sessions_per_user, *params, seed=i)
            for i, ((name, *params), n) in enumerate(zip(shapes, counts))]


def scaled(specs: Sequence[CohortSpec], n_users: int | None = None,
           sessions_per_user: int | None = None) -> list[CohortSpec]:
    """Same archetypes with a new user total (split evenly) or session count."""
    counts = _split(n_users, len(specs)) if n_users is not None else [s.n_users for s in specs]
    return [replace(s, n_users=n, sessions_per_user=sessions_per_user or s.sessions_per_user)
            for s, n in zip(specs, counts)]


def _weekdays(n: int) -> list[date]:
    days, d = [], START_DATE
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += timedelta(days=1)
    return days


def _draw_minutes(rng, mean_h: float, std_h: float, lo: int, hi: int) -> int:
    # redraw until inside [lo, hi); 1000 tries is far beyond any sane spec
    for _ in range(1000):
        m = int(round((mean_h + std_h * rng.standard_normal()) * 60))
        if lo <= m < hi:
            return m
    return min(max(int(round(mean_h * 60)), lo), hi - 1)


def _user_sessions(spec: CohortSpec, user_id: str, rng) -> list[ChargingSession]:
    out = []
    for day in _weekdays(spec.sessions_per_user):
        midnight = datetime(day.year, day.month, day.day)
        arr = _draw_minutes(rng, spec.arrival_mean, spec.arrival_std, 0, 24 * 60)
        dep = _draw_minutes(rng, spec.departure_mean, spec.departure_std, arr + 1, arr + 24 * 60)
        duration_h = (dep - arr) / 60.0
        energy = spec.energy_slope * duration_h + spec.energy_intercept + spec.energy_noise * rng.standard_normal()
        energy = round(max(energy, MIN_ENERGY_KWH), 3)
        out.append(ChargingSession(user_id, midnight + timedelta(minutes=arr),
                                   midnight + timedelta(minutes=dep), energy))
    return out


def generate(specs: Sequence[CohortSpec], seed: int = 0) -> LabeledDataset:
    if not specs:
        raise InvalidSpec("no cohort specs given")
    for s in specs:
        s.validate()
    id_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(len(specs) + 1,)))
    sessions: list[ChargingSession] = []
    truth: dict[str, str] = {}
    for c, spec in enumerate(specs):
        root = np.random.SeedSequence(seed, spawn_key=(c, spec.seed))
        for child in root.spawn(spec.n_users):
            user_id = f"{int(id_rng.integers(0, 2**32)):08X}"
            while user_id in truth:
                user_id = f"{int(id_rng.integers(0, 2**32)):08X}"
            truth[user_id] = spec.name
            sessions.extend(_user_sessions(spec, user_id, np.random.default_rng(child)))
    return LabeledDataset(SessionDataset(tuple(sessions)), truth)
