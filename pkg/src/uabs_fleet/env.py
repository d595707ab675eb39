"""Multi-task fleet environment with the RRM in the loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import rrm as rrm_mod
from .radio import BeamGeometry, LinkBudgetConfig, compute_coverage
from .resources import ResourceGrid
from .scenario import MobilityTrace, ServiceArea, Task

_D = 1 / math.sqrt(2)
# left, up, right, down, up-left, up-right, down-right, down-left, hover
ACTIONS = ("left", "up", "right", "down", "up_left", "up_right", "down_right", "down_left", "hover")
ACTION_VECTORS = np.array([
    (-1, 0), (0, 1), (1, 0), (0, -1),
    (-_D, _D), (_D, _D), (_D, -_D), (-_D, -_D),
    (0, 0),
], dtype=float)
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class EnvConfig:
    v: float = 20.0          # UABS speed, m/s
    delta_t: float = 10.0    # mission step T_s, s
    t_steps: int = 27        # T / T_s
    n_w: int = 9             # service window length in steps
    demand: float = 1e6      # bits per packet
    solver: str = "greedy"
    beam_info_scale: float | None = None  # default: min(|G|, W) * n_w


@dataclass
class FleetState:
    positions: np.ndarray          # (U, 2)
    t: int
    priorities: np.ndarray         # (G,)
    window_clock: np.ndarray       # (G,) position inside the current window, 0 before the first step
    served_count: np.ndarray       # (G,) services inside the current window
    served_history: list           # completed windows: list of (G,) service counts
    beam_info: np.ndarray          # (U, n_beam) raw priority sums
    episode_seed: int
    last_rrm: rrm_mod.RRMSolution | None = None

    def copy(self) -> "FleetState":
        return FleetState(self.positions.copy(), self.t, self.priorities.copy(), self.window_clock.copy(),
                          self.served_count.copy(), [h.copy() for h in self.served_history],
                          self.beam_info.copy(), self.episode_seed, self.last_rrm)


def apply_actions(positions, actions, v: float, delta_t: float, length: float, width: float) -> np.ndarray:
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    act = np.asarray(actions, dtype=int).reshape(-1)
    if len(act) != len(pos):
        raise ValueError("one action per UABS required")
    if ((act < 0) | (act >= N_ACTIONS)).any():
        raise ValueError(f"actions must be in [0, {N_ACTIONS})")
    new = pos + ACTION_VECTORS[act] * v * delta_t
    new[:, 0] = np.clip(new[:, 0], 0.0, length)
    new[:, 1] = np.clip(new[:, 1], 0.0, width)
    return new


def update_priorities(state: FleetState, psi_g: np.ndarray, n_w: int):
    """Advance each user's window clock and apply the window priority rule.

    At window position 1 the priority resets to 1; afterwards it grows by one
    for every step in which the user is served. Returns the new
    (priorities, window_clock, served_count, served_history).
    """
    psi = np.asarray(psi_g, dtype=np.int64)
    clock = state.window_clock % n_w + 1
    history = list(state.served_history)
    served = state.served_count.copy()
    start = clock == 1
    if state.t > 0 and start.any():
        # current windows close for synchronized users; keep full vectors
        history.append(served.copy())
    served = np.where(start, 0, served) + psi
    pri = np.where(start, 1, state.priorities + psi)
    return pri.astype(float), clock, served, history


def compute_reward(psi_gu: np.ndarray, priorities: np.ndarray, fleet_size: int) -> float:
    """Priority-weighted count of UABS-served users, averaged over the fleet."""
    if fleet_size < 1:
        return 0.0
    return float((np.asarray(psi_gu).sum(axis=1) * priorities).sum() / fleet_size)


class FleetEnv:
    """One task: fixed area, takeoff and user trace; channel draws per episode seed."""

    def __init__(self, task: Task, area: ServiceArea, trace: MobilityTrace, n_areas: int = 1,
                 radio: LinkBudgetConfig | None = None, geom: BeamGeometry | None = None,
                 grid: ResourceGrid | None = None, cfg: EnvConfig | None = None, fleet: bool = True):
        self.task = task
        self.area = area
        self.trace = trace
        self.n_areas = n_areas
        self.radio = radio or LinkBudgetConfig()
        self.geom = geom or BeamGeometry()
        self.grid = grid or ResourceGrid()
        self.cfg = cfg or EnvConfig()
        self.fleet = fleet  # False: no-UABS baseline
        if trace.horizon < self.cfg.t_steps:
            raise ValueError(f"trace horizon {trace.horizon} shorter than episode ({self.cfg.t_steps} steps)")
        if self.cfg.solver not in ("greedy", "exact"):
            raise ValueError(f"unknown RRM solver {self.cfg.solver!r}")

    @property
    def n_agents(self) -> int:
        return self.task.fleet_size if self.fleet else 0

    @property
    def n_users(self) -> int:
        return self.trace.n_users

    @property
    def obs_dim(self) -> int:
        return 3 + 2 * self.task.fleet_size + self.geom.n_beam

    @property
    def beam_scale(self) -> float:
        if self.cfg.beam_info_scale is not None:
            return float(self.cfg.beam_info_scale)
        return float(max(1, min(self.n_users, self.grid.budget)) * self.cfg.n_w)

    def reset(self, episode_seed: int) -> tuple[FleetState, np.ndarray]:
        G = self.n_users
        pos = np.array(self.task.takeoff, dtype=float).reshape(-1, 2)[: self.n_agents]
        state = FleetState(
            positions=pos, t=0, priorities=np.ones(G), window_clock=np.zeros(G, dtype=np.int64),
            served_count=np.zeros(G, dtype=np.int64), served_history=[],
            beam_info=np.zeros((self.n_agents, self.geom.n_beam)), episode_seed=int(episode_seed),
        )
        return state, self.observe(state)

    def observe(self, state: FleetState) -> np.ndarray:
        """Per-agent observations, shape (U, 3 + 2U + n_beam), all in [0, 1]."""
        U = self.n_agents
        scale = np.array([self.area.length, self.area.width])
        norm = state.positions / scale
        t = np.full((U, 1), state.t / self.cfg.t_steps)
        fleet = np.broadcast_to(norm.reshape(1, -1), (U, 2 * U))
        beams = state.beam_info / self.beam_scale
        return np.concatenate([norm, t, fleet, beams], axis=1)

    def _channel_seed(self, state: FleetState) -> int:
        ss = np.random.SeedSequence([state.episode_seed, state.t, self.task.id])
        return int(ss.generate_state(1)[0])

    def solve(self, state: FleetState, positions: np.ndarray):
        users = self.trace.at(state.t)
        cov = compute_coverage(positions, users, self.area, self.radio, self.geom,
                               self._channel_seed(state), self.grid)
        inst = rrm_mod.build_instance(cov, state.priorities, self.cfg.demand, self.grid.budget,
                                      self.grid.delta_t, self.geom.n_beam)
        solver = rrm_mod.solve_exact if self.cfg.solver == "exact" else rrm_mod.solve_greedy
        sol = solver(inst)
        return inst, sol

    def step(self, state: FleetState, actions, verify: bool = False):
        """Advance one step: move, solve the RRM, update priorities, reward.

        Returns (next_state, observations, reward, done, info).
        """
        if state.t >= self.cfg.t_steps:
            raise RuntimeError("episode already finished")
        U = self.n_agents
        if U:
            pos = apply_actions(state.positions, actions, self.cfg.v, self.cfg.delta_t,
                                self.area.length, self.area.width)
        else:
            pos = state.positions
        inst, sol = self.solve(state, pos)
        if verify:
            report = rrm_mod.verify_feasibility(inst, sol)
            if not report.ok:
                raise RuntimeError(f"RRM solution infeasible at task {self.task.id}, t={state.t}: {report}")
        pri, clock, served, history = update_priorities(state, sol.psi_g, self.cfg.n_w)
        reward = compute_reward(sol.psi_gu, pri, U)
        beam_info = np.zeros((U, self.geom.n_beam))
        if U:
            served_u = sol.psi_gu.astype(bool)  # (G, U)
            g_idx, u_idx = np.nonzero(served_u)
            j_idx = np.argmax(inst.coverage.k[g_idx, u_idx], axis=-1)
            np.add.at(beam_info, (u_idx, j_idx), pri[g_idx])
        nxt = FleetState(pos, state.t + 1, pri, clock, served, history, beam_info, state.episode_seed, sol)
        done = nxt.t >= self.cfg.t_steps
        if done:
            nxt.served_history = history + [served.copy()] if (clock == self.cfg.n_w).all() else history
        info = {
            "psi_g": sol.psi_g, "psi_gm": sol.psi_gm, "psi_gu": sol.psi_gu,
            "mbs_packets": int(sol.psi_gm.sum()), "uabs_packets": sol.psi_gu.sum(axis=0).astype(int),
        }
        return nxt, self.observe(nxt), reward, done, info


def window_tallies(history: list, n_hat_s: int) -> tuple[np.ndarray, np.ndarray]:
    """(N_g, N_g^sat) per user from completed windows."""
    if not history:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    h = np.stack(history)  # (n_windows, G)
    return np.full(h.shape[1], h.shape[0]), (h >= n_hat_s).sum(axis=0)
