"""Exploration: linear epsilon schedules, the cross-task advisor and override."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .learner import QNetwork, greedy_action


@dataclass(frozen=True)
class EpsilonSchedule:
    eps_min: float = 0.05
    eps_frac: float = 0.6
    total_episodes: int = 1000

    def __post_init__(self):
        if not 0 < self.eps_min < 1:
            raise ValueError("eps_min must be in (0, 1)")
        if not 0 < self.eps_frac <= 1:
            raise ValueError("eps_frac must be in (0, 1]")
        if self.total_episodes < 1:
            raise ValueError("total_episodes must be >= 1")

    def value(self, n: int) -> float:
        if n < 0:
            raise ValueError("episode index must be >= 0")
        decay = (1 - self.eps_min) * n / (self.eps_frac * self.total_episodes)
        return max(self.eps_min, 1.0 - decay)

    __call__ = value


def epsilon(schedule: EpsilonSchedule, n: int) -> float:
    return schedule.value(n)


def augment(obs: np.ndarray, area_index: int, n_areas: int) -> np.ndarray:
    """Append a one-hot area identifier to each observation row."""
    if not 0 <= area_index < n_areas:
        raise ValueError(f"area index {area_index} outside [0, {n_areas})")
    obs = np.asarray(obs, dtype=float)
    hot = np.zeros(obs.shape[:-1] + (n_areas,))
    hot[..., area_index] = 1.0
    return np.concatenate([obs, hot], axis=-1)


def advisor_action(advisor: QNetwork, aug_obs: np.ndarray) -> int:
    return greedy_action(advisor, aug_obs)


class BehaviorMode(enum.Enum):
    RANDOM = "random"
    META = "meta"
    EXPLOIT = "exploit"


def select_behavior(eps_i: float, eps_mu: float, rng: np.random.Generator) -> BehaviorMode:
    """One uniform draw split into random / meta / exploit.

    P(random) = eps_i * eps_mu, P(meta) = eps_i * (1 - eps_mu).
    """
    if not (0 <= eps_i <= 1 and 0 <= eps_mu <= 1):
        raise ValueError("epsilons must lie in [0, 1]")
    x = rng.random()
    if x < eps_i * eps_mu:
        return BehaviorMode.RANDOM
    if x < eps_i:
        return BehaviorMode.META
    return BehaviorMode.EXPLOIT


def check_override(task_net: QNetwork | None, obs: np.ndarray, suggestion: int, q_values=None) -> bool:
    """True when the task net values the suggestion strictly below its mean Q."""
    q = np.asarray(q_values if q_values is not None else task_net.forward(obs), dtype=float)
    return bool(q[suggestion] < q.mean())


def mamo_select(task_net: QNetwork, advisor: QNetwork | None, obs: np.ndarray, aug_obs: np.ndarray | None,
                eps_i: float, eps_mu: float, override_enabled: bool, rng: np.random.Generator,
                forced_mode: BehaviorMode | None = None):
    """Pick one agent's action. Returns (action, final mode, override triggered).

    Without an advisor the meta branch is unavailable and the call reduces to
    plain epsilon-greedy (pass ``eps_mu=1``).
    """
    mode = forced_mode if forced_mode is not None else select_behavior(eps_i, eps_mu, rng)
    overridden = False
    if mode is BehaviorMode.META:
        if advisor is None:
            raise ValueError("meta behavior requires an advisor network")
        suggestion = advisor_action(advisor, aug_obs)
        if override_enabled and check_override(task_net, obs, suggestion):
            mode, overridden = BehaviorMode.RANDOM, True
        else:
            return suggestion, mode, False
    if mode is BehaviorMode.RANDOM:
        return int(rng.integers(task_net.n_actions)), mode, overridden
    return greedy_action(task_net, obs), mode, False
