"""Evaluation quantities computed from per-episode run records."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SMOOTHING_WINDOW = 50


@dataclass(frozen=True)
class RunRecord:
    strategy: str
    task_id: int
    seed: int
    episode: int
    ret: float
    aoc: int
    mbs_packets: int
    uabs_packets: tuple[int, ...]

    def __post_init__(self):
        if not np.isfinite(self.ret):
            raise ValueError(f"non-finite return in task {self.task_id}, episode {self.episode}")
        if self.aoc < 0:
            raise ValueError("AOC must be non-negative")


def episode_return(rewards: Sequence[float], fleet_size: int) -> float:
    """Shared per-step reward summed over steps and agents."""
    return float(fleet_size * np.sum(np.asarray(rewards, dtype=float)))


def average_return(returns_by_task: Mapping[int, Sequence[float]], n: int, tasks: Iterable[int] | None = None) -> float:
    """Mean return across tasks at episode n."""
    tasks = list(tasks) if tasks is not None else list(returns_by_task)
    if not tasks:
        raise ValueError("no tasks given")
    vals = []
    for t in tasks:
        series = returns_by_task.get(t)
        if series is None or n >= len(series):
            raise KeyError(f"task {t} has no return for episode {n}")
        vals.append(series[n])
    return float(np.mean(vals))


def average_curve(returns_by_task: Mapping[int, Sequence[float]]) -> np.ndarray:
    n = min(len(v) for v in returns_by_task.values())
    return np.array([average_return(returns_by_task, i) for i in range(n)])


def moving_average(series: Sequence[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing mean; the first window-1 entries average what is available."""
    x = np.asarray(series, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if not len(x):
        return x
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def first_successful_episode(returns: Sequence[float], r_th: float) -> int | None:
    hits = np.flatnonzero(np.asarray(returns, dtype=float) >= r_th)
    return int(hits[0]) if len(hits) else None


def fse_curve(returns: Sequence[float], r_max: float, fractions: Sequence[float]) -> list[int | None]:
    """FSE at each threshold fraction of r_max."""
    return [first_successful_episode(returns, f * r_max) for f in fractions]


def satisfaction_tallies(windows_per_user: Sequence[Sequence[int]], n_hat_s: int):
    """(N_g, N_g^sat) from each user's per-window service counts."""
    if n_hat_s < 1:
        raise ValueError("n_hat_s must be >= 1")
    n_g = np.array([len(w) for w in windows_per_user], dtype=int)
    n_sat = np.array([int(np.sum(np.asarray(w) >= n_hat_s)) for w in windows_per_user], dtype=int)
    return n_g, n_sat


def satisfied_report(windows_per_user: Sequence[Sequence[int]], n_hat_s: int) -> tuple[float, list[int]]:
    """P_g plus the indices of users excluded for having no complete window."""
    n_g, n_sat = satisfaction_tallies(windows_per_user, n_hat_s)
    keep = n_g > 0
    excluded = [int(i) for i in np.flatnonzero(~keep)]
    if not keep.any():
        return float("nan"), excluded
    return float(np.mean(n_sat[keep] / n_g[keep])), excluded


def satisfied_percentage(windows_per_user: Sequence[Sequence[int]], n_hat_s: int) -> float:
    return satisfied_report(windows_per_user, n_hat_s)[0]


def windows_by_user(histories: Iterable[Sequence[np.ndarray]]) -> list[list[int]]:
    """Pool completed-window vectors from several episodes into per-user lists."""
    rows = [np.asarray(h) for hist in histories for h in hist]
    if not rows:
        return []
    mat = np.stack(rows)
    return [list(map(int, col)) for col in mat.T]


def win_ratio(returns_a: Sequence[float], returns_b: Sequence[float]) -> float:
    a = np.asarray(returns_a, dtype=float)
    b = np.asarray(returns_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not len(a):
        return 0.0
    return float(np.mean(a > b))


def advisor_override_count(flags: Iterable[bool]) -> int:
    return int(sum(bool(f) for f in flags))


@dataclass(frozen=True)
class LoadDistribution:
    mbs_packets: np.ndarray   # (M,)
    uabs_packets: np.ndarray  # (U,)

    @property
    def total(self) -> int:
        return int(self.mbs_packets.sum() + self.uabs_packets.sum())

    @property
    def defined(self) -> bool:
        return self.total > 0

    @property
    def shares(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.defined:
            return np.zeros_like(self.mbs_packets, dtype=float), np.zeros_like(self.uabs_packets, dtype=float)
        return self.mbs_packets / self.total, self.uabs_packets / self.total

    def __add__(self, other: "LoadDistribution") -> "LoadDistribution":
        return LoadDistribution(self.mbs_packets + other.mbs_packets, self.uabs_packets + other.uabs_packets)


def load_distribution(solutions: Iterable) -> LoadDistribution:
    """Served-packet counts per BS, from RRM solutions or (psi_gm, psi_gu) pairs."""
    mbs = uabs = None
    for sol in solutions:
        gm, gu = (sol.psi_gm, sol.psi_gu) if hasattr(sol, "psi_gm") else sol
        gm_c = np.asarray(gm).sum(axis=0).astype(int)
        gu_c = np.asarray(gu).reshape(len(gm), -1).sum(axis=0).astype(int)
        mbs = gm_c if mbs is None else mbs + gm_c
        uabs = gu_c if uabs is None else uabs + gu_c
    if mbs is None:
        return LoadDistribution(np.zeros(1, dtype=int), np.zeros(0, dtype=int))
    return LoadDistribution(mbs, uabs)


# ---------------------------------------------------------------------------
# row-per-episode metrics files

def metrics_header(n_uabs: int) -> list[str]:
    return ["strategy", "task_id", "seed", "episode", "return", "aoc", "mbs_packets"] + \
        [f"uabs_{u}" for u in range(n_uabs)]


def format_metrics(records: Sequence[RunRecord]) -> str:
    n_uabs = max((len(r.uabs_packets) for r in records), default=0)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(metrics_header(n_uabs))
    for r in records:
        pk = list(r.uabs_packets) + [0] * (n_uabs - len(r.uabs_packets))
        w.writerow([r.strategy, r.task_id, r.seed, r.episode, repr(float(r.ret)), r.aoc, r.mbs_packets, *pk])
    return out.getvalue()


def write_metrics(path: str | Path, records: Sequence[RunRecord]) -> None:
    Path(path).write_text(format_metrics(records))


def read_metrics(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        pk = tuple(int(row[k]) for k in row if k.startswith("uabs_"))
        out.append(RunRecord(row["strategy"], int(row["task_id"]), int(row["seed"]), int(row["episode"]),
                             float(row["return"]), int(row["aoc"]), int(row["mbs_packets"]), pk))
    return out


def returns_by_task(records: Iterable[RunRecord]) -> dict[int, list[float]]:
    out: dict[int, list[tuple[int, float]]] = {}
    for r in records:
        out.setdefault(r.task_id, []).append((r.episode, r.ret))
    return {t: [v for _, v in sorted(rows)] for t, rows in sorted(out.items())}
