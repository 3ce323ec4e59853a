"""Per-user behavioral 5-tuples and the normalized user clustering matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyMatrix, InsufficientData
from .sessions import ChargingSession, SessionDataset, sessions_by_user

FEATURE_NAMES = ("mean_arrival", "mean_departure", "std_arrival", "std_departure", "cor")
SCALE_FLOOR = 1e-9


class UserFeatureTuple(NamedTuple):
    mean_arrival: float
    mean_departure: float
    std_arrival: float
    std_departure: float
    cor: float


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation; raises DegenerateInput on zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length sequences of length >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateInput("zero variance")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("zero variance")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def user_tuple(sessions: Sequence[ChargingSession]) -> UserFeatureTuple:
    if len(sessions) < 2:
        raise InsufficientData(f"need >= 2 sessions, got {len(sessions)}")
    arr = np.array([s.arrival_hour for s in sessions])
    dep = np.array([s.departure_hour for s in sessions])
    dur = np.array([s.duration_h for s in sessions])
    energy = np.array([s.energy_kwh for s in sessions])
    try:
        cor = pearson(dur, energy)
    except DegenerateInput:
        cor = 0.0
    return UserFeatureTuple(
        float(arr.mean()), float(dep.mean()), float(arr.std()), float(dep.std()), cor
    )


@dataclass(frozen=True)
class FeatureMatrix:
    """Raw and z-scored user tuples; ``values`` is what gets clustered."""

    user_ids: tuple[str, ...]
    raw: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    excluded: tuple[str, ...] = field(default=())

    @property
    def values(self) -> np.ndarray:
        return self.normalize(self.raw)

    @property
    def rows(self) -> list[tuple[str, UserFeatureTuple]]:
        return [(u, UserFeatureTuple(*map(float, r))) for u, r in zip(self.user_ids, self.raw)]

    def __len__(self):
        return len(self.user_ids)

    def normalize(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.shift) / self.scale

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.scale + self.shift

    def normalization_dict(self) -> dict:
        return {
            "features": list(FEATURE_NAMES),
            "shift": [float(v) for v in self.shift],
            "scale": [float(v) for v in self.scale],
        }

    def to_csv(self) -> str:
        lines = ["user_id," + ",".join(FEATURE_NAMES)]
        for u, r in zip(self.user_ids, self.raw):
            lines.append(u + "," + ",".join(repr(float(v)) for v in r))
        return "\n".join(lines) + "\n"

    def normalization_json(self) -> str:
        return json.dumps(self.normalization_dict(), indent=2, sort_keys=True) + "\n"


def zscore_params(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    shift = raw.mean(axis=0)
    scale = np.maximum(raw.std(axis=0), SCALE_FLOOR)
    return shift, scale


def build_matrix(ds: SessionDataset, user_ids: Sequence[str] | None = None,
                 normalization: tuple[np.ndarray, np.ndarray] | None = None) -> FeatureMatrix:
    """One row per user with >= 2 sessions.

    ``normalization`` lets held-out users be projected with (shift, scale)
    fitted elsewhere; by default the z-score is fitted on these rows.
    """
    if len(ds) == 0:
        raise EmptyMatrix("dataset is empty")
    ids, rows, excluded = [], [], []
    for u in (ds.user_ids if user_ids is None else user_ids):
        sess = sessions_by_user(ds, u)
        if len(sess) < 2:
            excluded.append(u)
            continue
        ids.append(u)
        rows.append(user_tuple(sess))
    if not rows:
        raise EmptyMatrix("no user has >= 2 sessions")
    raw = np.array(rows, dtype=float)
    shift, scale = zscore_params(raw) if normalization is None else map(np.asarray, normalization)
    return FeatureMatrix(tuple(ids), raw, np.asarray(shift, float), np.asarray(scale, float), tuple(excluded))
