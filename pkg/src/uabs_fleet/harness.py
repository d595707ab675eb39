"""Experiment orchestration: training rounds, evaluation, strategy matrix, plots."""
from __future__ import annotations

import csv
import json
import logging
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ExperimentConfig, parse_strategy
from .env import EnvConfig, FleetEnv, N_ACTIONS
from .explore import BehaviorMode, EpsilonSchedule, augment, mamo_select
from .learner import DQNLearner, greedy_action
from .metrics import (RunRecord, LoadDistribution, average_curve, first_successful_episode, format_metrics,
                      load_distribution, moving_average, returns_by_task, satisfied_report, win_ratio,
                      windows_by_user)
from .radio import BeamGeometry, LinkBudgetConfig
from .resources import ResourceGrid
from .scenario import MobilityTrace, ServiceArea, Task, build_area, enumerate_tasks, generate_trace

log = logging.getLogger(__name__)

TraceHook = Callable[..., None]
EPISODE_LOG_HEADER = ("task_id", "episode", "t", "u", "x", "y", "action", "reward")

# stream tags for SeedSequence children
_INIT, _BEHAVIOR, _TRAIN, _ADVISOR, _EPISODE, _EVAL = range(6)


def _seed(*entropy: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(e) for e in entropy])


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(_seed(*entropy))


def episode_seed(master_seed: int, n: int, tag: int = _EPISODE) -> int:
    """Channel seed of round n; shared by all tasks and strategies of a master seed."""
    return int(_seed(master_seed, tag, n).generate_state(1)[0])


@dataclass
class Experiment:
    cfg: ExperimentConfig
    areas: list[ServiceArea]
    traces: dict[int, MobilityTrace]
    tasks: list[Task]
    envs: list[FleetEnv]

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    def area_index(self, task: Task) -> int:
        return [a.id for a in self.areas].index(task.area_id)

    def baseline_env(self, i: int) -> FleetEnv:
        e = self.envs[i]
        return FleetEnv(e.task, e.area, e.trace, e.n_areas, e.radio, e.geom, e.grid, e.cfg, fleet=False)


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    sc = cfg.scenario
    areas = [build_area(a.id, sc.L, sc.W, a.template, a.gue_count, a.mbs_position, a.params, a.mbs_height)
             for a in sc.areas]
    t_steps = cfg.env.t_steps
    traces = {
        a.id: generate_trace(a, int(_seed(sc.trace_seed, a.id).generate_state(1)[0]), t_steps,
                             sc.v_gue_max, cfg.env.T_s, max_dwell=sc.max_dwell)
        for a in areas
    }
    tasks = enumerate_tasks(areas, sc.takeoff_sets, sc.fleet_size)
    r = cfg.radio
    radio = LinkBudgetConfig(f_c=r.f_c, p_tx=r.P_tx, g_tx=r.G_tx, g_rx=r.G_rx, g_rx_mbs=r.G_rx_mbs, p_noise=r.P_n,
                             sigma_los=r.sigma_los, sigma_nlos=r.sigma_nlos, sinr_th=r.sinr_th,
                             p_tx_backhaul=r.P_tx_backhaul, g_backhaul=r.G_backhaul)
    geom = BeamGeometry(fov=r.phi, altitude=r.h, n_beam=r.n_beam)
    q = cfg.rrm
    grid = ResourceGrid(q.b_sys, q.delta_f, q.n_sub, q.rrm_period, q.t_slot, q.ru_budget)
    env_cfg = EnvConfig(v=cfg.env.v, delta_t=cfg.env.T_s, t_steps=t_steps, n_w=cfg.env.N_w, demand=q.D,
                        solver=q.solver)
    by_id = {a.id: a for a in areas}
    envs = [FleetEnv(t, by_id[t.area_id], traces[t.area_id], len(areas), radio, geom, grid, env_cfg)
            for t in tasks]
    return Experiment(cfg, areas, traces, tasks, envs)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingResult:
    strategy: str
    seed: int
    records: list[RunRecord]
    learners: list[DQNLearner]  # one per task; Generalized repeats a single learner
    advisor: DQNLearner | None
    checkpoints: list[Path] = field(default_factory=list)

    def policy(self, i: int) -> DQNLearner:
        return self.learners[i]


def _new_learner(cfg: ExperimentConfig, obs_dim: int, capacity: int, rng: np.random.Generator) -> DQNLearner:
    lc = cfg.learner
    return DQNLearner(obs_dim, N_ACTIONS, lc.hidden, lc.head_hidden, lc.lr, capacity, lc.k, lc.gamma, lc.Y, rng)


@dataclass
class _TaskEpisode:
    record: RunRecord
    advisor_rows: list  # staged (aug_o, a, r, aug_o2, done) rows when running tasks in parallel


def run_training(cfg: ExperimentConfig, strategy: str, master_seed: int, out_dir: str | Path | None = None,
                 trace: TraceHook | None = None, n_episodes: int | None = None,
                 experiment: Experiment | None = None, workers: int | None = None) -> TrainingResult:
    """Train every task of the config with one exploration strategy.

    Each round runs one episode per task, then ``J`` advisor updates when the
    strategy uses an advisor. Results depend only on (cfg, strategy, seed).
    """
    kind, frac = parse_strategy(strategy)
    exp = experiment or build_experiment(cfg)
    N = n_episodes or cfg.run.N
    ex = cfg.explore
    workers = workers or cfg.run.workers
    if kind == "generalized":
        workers = 1  # one shared network: single writer
    use_advisor = kind in ("mamo", "mama")
    override = kind == "mamo"
    sched_i = EpsilonSchedule(ex.eps_min, frac if frac is not None else ex.eps_i_frac, cfg.run.N)
    sched_mu = EpsilonSchedule(ex.eps_min, ex.eps_mu_frac, cfg.run.N)
    emit = trace or (lambda *a, **k: None)

    obs_dim = exp.envs[0].obs_dim
    n_tasks = len(exp.tasks)
    if kind == "generalized":
        shared = _new_learner(cfg, obs_dim, cfg.learner.K_i * n_tasks, _rng(master_seed, _INIT, 0))
        learners = [shared] * n_tasks
    else:
        learners = [_new_learner(cfg, obs_dim, cfg.learner.K_i, _rng(master_seed, _INIT, i)) for i in range(n_tasks)]
    advisor = None
    if use_advisor:
        advisor = _new_learner(cfg, obs_dim + exp.n_areas, cfg.learner.K_mu, _rng(master_seed, _INIT, 1000))
    behavior_rngs = [_rng(master_seed, _BEHAVIOR, i) for i in range(n_tasks)]
    train_rngs = [_rng(master_seed, _TRAIN, i) for i in range(n_tasks)]
    if kind == "generalized":
        train_rngs = [train_rngs[0]] * n_tasks
    advisor_rng = _rng(master_seed, _ADVISOR)

    def task_episode(i: int, n: int, stage: bool) -> _TaskEpisode:
        env, learner, rng = exp.envs[i], learners[i], behavior_rngs[i]
        eps_i = sched_i(n)
        eps_mu = sched_mu(n) if use_advisor else 1.0
        emit("eps_update", task=i, episode=n, eps_i=eps_i, eps_mu=eps_mu)
        area_idx = exp.area_index(env.task)
        state, obs = env.reset(episode_seed(master_seed, n))
        aug = augment(obs, area_idx, exp.n_areas) if use_advisor else None
        rewards, aoc, mbs, uabs = [], 0, 0, np.zeros(env.n_agents, dtype=int)
        staged = []
        for t in range(env.cfg.t_steps):
            actions = np.empty(env.n_agents, dtype=int)
            for u in range(env.n_agents):
                a, mode, ov = mamo_select(learner.online, advisor.online if advisor else None, obs[u],
                                          aug[u] if aug is not None else None, eps_i, eps_mu, override, rng)
                actions[u] = a
                aoc += ov
                emit("select", task=i, t=t, u=u, mode=mode.value, override=ov)
            state, obs2, r, done, info = env.step(state, actions)
            emit("env_step", task=i, t=t, reward=r)
            aug2 = augment(obs2, area_idx, exp.n_areas) if use_advisor else None
            for u in range(env.n_agents):
                learner.buffer.add(obs[u], actions[u], r, obs2[u], done)
                emit("store_task", task=i, t=t, u=u)
                if use_advisor:
                    row = (aug[u], actions[u], r, aug2[u], done)
                    if stage:
                        staged.append(row)
                    else:
                        advisor.buffer.add(*row)
                    emit("store_advisor", task=i, t=t, u=u)
            loss = learner.learn(train_rngs[i])
            emit("train_task", task=i, t=t, trained=loss is not None)
            rewards.append(r)
            mbs += info["mbs_packets"]
            uabs += info["uabs_packets"]
            obs, aug = obs2, aug2
        ret = env.n_agents * float(np.sum(rewards))
        rec = RunRecord(strategy, env.task.id, master_seed, n, ret, int(aoc), int(mbs), tuple(int(x) for x in uabs))
        return _TaskEpisode(rec, staged)

    ckpt_dir = Path(out_dir) / "checkpoints" if out_dir is not None else None
    records: list[RunRecord] = []
    checkpoints: list[Path] = []
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for n in range(N):
            try:
                if pool is None:
                    results = [task_episode(i, n, stage=False) for i in range(n_tasks)]
                else:
                    results = list(pool.map(lambda i: task_episode(i, n, stage=True), range(n_tasks)))
                    for res in results:  # barrier: merge staged advisor rows in task order
                        for row in res.advisor_rows:
                            advisor.buffer.add(*row)
            except Exception as exc:
                raise RuntimeError(f"{strategy} seed {master_seed}: episode {n} failed: {exc}") from exc
            records.extend(res.record for res in results)
            if advisor is not None:
                for j in range(ex.J):
                    loss = advisor.learn(advisor_rng)
                    emit("train_advisor", episode=n, j=j, trained=loss is not None)
            every = cfg.run.checkpoint_every
            if ckpt_dir is not None and every and ((n + 1) % every == 0 or n + 1 == N):
                checkpoints.extend(_save_checkpoints(ckpt_dir, strategy, master_seed, n + 1, learners, advisor))
    finally:
        if pool is not None:
            pool.shutdown()
    result = TrainingResult(strategy, master_seed, records, learners, advisor, checkpoints)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(format_metrics(records))
    return result


def _save_checkpoints(root: Path, strategy: str, seed: int, episode: int, learners, advisor) -> list[Path]:
    d = root / f"{strategy}_seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    seen = set()
    for i, lr in enumerate(learners):
        if id(lr) in seen:
            continue
        seen.add(id(lr))
        p = d / f"task{i}_ep{episode}.npz"
        lr.save(p)
        paths.append(p)
    if advisor is not None:
        p = d / f"advisor_ep{episode}.npz"
        advisor.save(p)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    returns: dict[int, list[float]]            # task -> per-episode greedy return
    load: dict[int, LoadDistribution]          # task -> packets over all eval episodes
    windows: dict[int, list[list[int]]]        # task -> per-user window service counts
    episode_log: list[tuple] = field(default_factory=list)

    def total_packets(self) -> int:
        return sum(ld.total for ld in self.load.values())

    def satisfied(self, n_hat_s: int) -> float:
        vals = [satisfied_report(w, n_hat_s)[0] for w in self.windows.values() if w]
        return float(np.nanmean(vals)) if vals else float("nan")


def evaluate(exp: Experiment, policies: Sequence[DQNLearner] | None, master_seed: int, n_episodes: int,
             log_episodes: bool = False) -> EvalResult:
    """Greedy rollouts of trained policies; ``policies=None`` runs the no-UABS baseline."""
    returns, load, windows, rows = {}, {}, {}, []
    for i, env in enumerate(exp.envs):
        if policies is None:
            env = exp.baseline_env(i)
        rets, sols, hists = [], [], []
        for e in range(n_episodes):
            state, obs = env.reset(episode_seed(master_seed, e, _EVAL))
            rews = []
            for t in range(env.cfg.t_steps):
                if env.n_agents:
                    q = policies[i].online.forward(obs)
                    actions = np.argmax(q, axis=1)
                else:
                    actions = np.zeros(0, dtype=int)
                prev = state.positions
                state, obs, r, done, info = env.step(state, actions)
                sols.append((info["psi_gm"], info["psi_gu"]))
                rews.append(r)
                if log_episodes:
                    for u in range(env.n_agents):
                        x, y = state.positions[u]
                        rows.append((env.task.id, e, t, u, float(x), float(y), int(actions[u]), float(r)))
            rets.append(env.n_agents * float(np.sum(rews)))
            hists.append(state.served_history)
        returns[env.task.id] = rets
        load[env.task.id] = load_distribution(sols)
        windows[env.task.id] = windows_by_user(hists)
    return EvalResult(returns, load, windows, rows)


def write_episode_log(path: str | Path, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_LOG_HEADER)
        for row in rows:
            w.writerow([*row[:4], f"{row[4]:.3f}", f"{row[5]:.3f}", row[6], repr(row[7])])


def read_episode_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EPISODE_LOG_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: episode log missing columns {sorted(missing)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append({"task_id": int(row["task_id"]), "episode": int(row["episode"]), "t": int(row["t"]),
                            "u": int(row["u"]), "x": float(row["x"]), "y": float(row["y"]),
                            "action": int(row["action"]), "reward": float(row["reward"])})
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad row: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# strategy matrix


FSE_FRACTIONS = tuple(round(0.1 * k, 1) for k in range(1, 11))


@dataclass
class MatrixResult:
    runs: dict[tuple[str, int], TrainingResult]
    failures: dict[tuple[str, int], str]
    evals: dict[tuple[str, int], EvalResult]
    baseline: EvalResult | None
    summary: dict

    def returns(self, strategy: str, seed: int) -> dict[int, list[float]]:
        return returns_by_task(self.runs[(strategy, seed)].records)


def fse_reference(runs: dict, strategies: Sequence[str], seed: int, task: int) -> float:
    """Best raw return reached by any compared strategy on (task, seed)."""
    best = [max(returns_by_task(runs[(s, seed)].records)[task]) for s in strategies if (s, seed) in runs]
    return max(best) if best else 0.0


def fse_table(runs: dict, strategies: Sequence[str], seeds: Sequence[int], fractions=FSE_FRACTIONS) -> dict:
    """strategy -> fraction -> mean FSE over (task, seed); unreached counts as N."""
    out = {}
    for s in strategies:
        out[s] = {}
        for f in fractions:
            vals = []
            for seed in seeds:
                if (s, seed) not in runs:
                    continue
                by_task = returns_by_task(runs[(s, seed)].records)
                for task, rets in by_task.items():
                    r_max = fse_reference(runs, strategies, seed, task)
                    idx = first_successful_episode(rets, f * r_max)
                    vals.append(len(rets) if idx is None else idx)
            out[s][f] = float(np.mean(vals)) if vals else float("nan")
    return out


def win_ratio_table(runs: dict, strategies: Sequence[str], seeds: Sequence[int]) -> dict:
    """(a, b) -> mean over tasks and seeds of the fraction of episodes a strictly beats b."""
    out = {}
    for a in strategies:
        for b in strategies:
            if a == b:
                continue
            vals = []
            for seed in seeds:
                if (a, seed) in runs and (b, seed) in runs:
                    ra, rb = returns_by_task(runs[(a, seed)].records), returns_by_task(runs[(b, seed)].records)
                    vals += [win_ratio(ra[t], rb[t]) for t in ra if t in rb]
            out[(a, b)] = float(np.mean(vals)) if vals else float("nan")
    return out


def aoc_curve(result: TrainingResult) -> np.ndarray:
    by_ep: dict[int, list[int]] = {}
    for r in result.records:
        by_ep.setdefault(r.episode, []).append(r.aoc)
    return np.array([np.mean(by_ep[n]) for n in sorted(by_ep)])


def run_matrix(cfg: ExperimentConfig, strategies: Sequence[str] | None = None, seeds: Sequence[int] | None = None,
               out_dir: str | Path | None = None, n_episodes: int | None = None, evaluate_policies: bool = True,
               plots: bool = True) -> MatrixResult:
    strategies = list(strategies or cfg.run.strategies)
    seeds = list(seeds if seeds is not None else cfg.run.seeds)
    if not strategies:
        raise ValueError("at least one strategy is required")
    exp = build_experiment(cfg)
    out = Path(out_dir) if out_dir is not None else None
    runs, failures, evals = {}, {}, {}
    for s in strategies:
        for seed in seeds:
            run_out = out / f"{s}_seed{seed}" if out is not None else None
            try:
                res = run_training(cfg, s, seed, run_out, n_episodes=n_episodes, experiment=exp)
            except Exception as exc:  # keep going; record the failure
                log.error("run %s seed %s failed: %s", s, seed, exc)
                failures[(s, seed)] = "".join(traceback.format_exception_only(type(exc), exc)).strip()
                continue
            runs[(s, seed)] = res
            if evaluate_policies:
                evals[(s, seed)] = evaluate(exp, res.learners, seed, cfg.run.eval_episodes)
    baseline = evaluate(exp, None, seeds[0] if seeds else 0, cfg.run.eval_episodes) if evaluate_policies else None
    summary = summarize(cfg, runs, evals, baseline, strategies, seeds, failures)
    result = MatrixResult(runs, failures, evals, baseline, summary)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        all_records = [r for res in runs.values() for r in res.records]
        (out / "metrics.csv").write_text(format_metrics(all_records))
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        (out / "summary.md").write_text(summary_markdown(summary))
        if plots:
            emit_plots(result, out)
    return result


def summarize(cfg, runs, evals, baseline, strategies, seeds, failures) -> dict:
    wr = win_ratio_table(runs, strategies, seeds)
    fse = fse_table(runs, strategies, seeds)
    aoc = {s: float(np.mean([aoc_curve(runs[(s, sd)]).sum() for sd in seeds if (s, sd) in runs] or [0]))
           for s in strategies}
    final = {}
    for s in strategies:
        vals = [moving_average(average_curve(returns_by_task(runs[(s, sd)].records)))[-1]
                for sd in seeds if (s, sd) in runs]
        final[s] = float(np.mean(vals)) if vals else float("nan")
    pg = {}
    load = {}
    for s in strategies:
        ev = [evals[(s, sd)] for sd in seeds if (s, sd) in evals]
        if not ev:
            continue
        sweep = [[e.satisfied(n) for e in ev] for n in range(1, cfg.env.N_w + 1)]
        pg[s] = {"mean": [float(np.mean(v)) for v in sweep], "min": [float(np.min(v)) for v in sweep],
                 "max": [float(np.max(v)) for v in sweep]}
        load[s] = _load_row(ev)
    if baseline is not None:
        load["no_uabs"] = _load_row([baseline])
        sweep = [baseline.satisfied(n) for n in range(1, cfg.env.N_w + 1)]
        pg["no_uabs"] = {"mean": sweep, "min": sweep, "max": sweep}
    return {
        "strategies": strategies, "seeds": seeds,
        "win_ratio": {f"{a}|{b}": v for (a, b), v in wr.items()},
        "fse": {s: {str(f): v for f, v in row.items()} for s, row in fse.items()},
        "total_aoc": aoc, "final_smoothed_return": final,
        "satisfied": pg, "load": load,
        "failures": {f"{s}|{sd}": msg for (s, sd), msg in failures.items()},
    }


def _load_row(evs: Sequence[EvalResult]) -> dict:
    tot = None
    for e in evs:
        for ld in e.load.values():
            tot = ld if tot is None else LoadDistribution(tot.mbs_packets + ld.mbs_packets,
                                                          _pad_add(tot.uabs_packets, ld.uabs_packets))
    mbs_share, uabs_share = tot.shares
    n = len(evs)
    return {"total_packets": tot.total / n, "mbs_share": float(mbs_share.sum()),
            "uabs_shares": [float(x) for x in uabs_share], "defined": tot.defined}


def _pad_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = max(len(a), len(b))
    return np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b)))


def summary_markdown(summary: dict) -> str:
    strategies = summary["strategies"]
    lines = ["# Strategy comparison", "", f"Seeds: {summary['seeds']}", "", "## Win ratio (row beats column)", ""]
    lines.append("| | " + " | ".join(strategies) + " |")
    lines.append("|---" * (len(strategies) + 1) + "|")
    for a in strategies:
        cells = ["-" if a == b else f"{summary['win_ratio'].get(f'{a}|{b}', float('nan')):.2f}" for b in strategies]
        lines.append(f"| {a} | " + " | ".join(cells) + " |")
    fracs = list(next(iter(summary["fse"].values())).keys()) if summary["fse"] else []
    lines += ["", "## First successful episode vs threshold (fraction of best return)", "",
              "| strategy | " + " | ".join(fracs) + " |", "|---" * (len(fracs) + 1) + "|"]
    for s, row in summary["fse"].items():
        lines.append(f"| {s} | " + " | ".join(f"{v:.1f}" for v in row.values()) + " |")
    lines += ["", "## Final smoothed return and total advisor overrides", "", "| strategy | return | AOC |",
              "|---|---|---|"]
    for s in strategies:
        lines.append(f"| {s} | {summary['final_smoothed_return'][s]:.2f} | {summary['total_aoc'][s]:.0f} |")
    if summary["load"]:
        lines += ["", "## Traffic load (greedy policy)", "", "| deployment | packets/run | MBS % | UABS % |",
                  "|---|---|---|---|"]
        for s, row in summary["load"].items():
            uabs = ", ".join(f"{100 * x:.1f}" for x in row["uabs_shares"]) or "-"
            lines.append(f"| {s} | {row['total_packets']:.0f} | {100 * row['mbs_share']:.1f} | {uabs} |")
    if summary["failures"]:
        lines += ["", "## Failed runs", ""] + [f"- {k}: {v}" for k, v in summary["failures"].items()]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# plots


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def emit_plots(result: MatrixResult, out_dir: str | Path) -> list[Path]:
    """Return curves, FSE vs threshold, AOC and satisfied-user bands as PNGs."""
    if not result.runs:
        raise ValueError("no completed runs to plot")
    plt = _plt()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    strategies = result.summary["strategies"]
    seeds = result.summary["seeds"]
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for s in strategies:
        curves = [moving_average(average_curve(result.returns(s, sd))) for sd in seeds if (s, sd) in result.runs]
        if curves:
            c = np.mean(curves, axis=0)
            ax.plot(np.arange(len(c)), c, marker="o" if len(c) == 1 else None, label=s)
    ax.set_xlabel("episode")
    ax.set_ylabel("average return (smoothed)")
    ax.legend()
    paths.append(_save(fig, out / "returns.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for s, row in result.summary["fse"].items():
        xs = [100 * float(f) for f in row]
        ax.plot(xs, list(row.values()), marker="o", label=s)
    ax.set_xlabel("threshold (% of best return)")
    ax.set_ylabel("first successful episode")
    ax.legend()
    paths.append(_save(fig, out / "fse.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for s in strategies:
        curves = [aoc_curve(result.runs[(s, sd)]) for sd in seeds if (s, sd) in result.runs]
        if curves:
            c = moving_average(np.mean(curves, axis=0))
            ax.plot(np.arange(len(c)), c, marker="o" if len(c) == 1 else None, label=s)
    ax.set_xlabel("episode")
    ax.set_ylabel("advisor overrides per episode")
    ax.legend()
    paths.append(_save(fig, out / "aoc.png"))

    if result.summary["satisfied"]:
        fig, ax = plt.subplots(figsize=(6, 4))
        for s, band in result.summary["satisfied"].items():
            xs = np.arange(1, len(band["mean"]) + 1)
            ax.plot(xs, band["mean"], marker="o", label=s)
            ax.fill_between(xs, band["min"], band["max"], alpha=0.2)
        ax.set_xlabel("required services per window")
        ax.set_ylabel("satisfied users")
        ax.legend()
        paths.append(_save(fig, out / "satisfied.png"))
    return paths


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    _plt().close(fig)
    return path


def replay(log_path: str | Path, exp: Experiment | None, out_path: str | Path, task_id: int | None = None,
           episode: int | None = None) -> Path:
    """Render UABS trajectories from an episode log."""
    rows = read_episode_log(log_path)
    if not rows:
        raise ValueError(f"{log_path}: episode log is empty")
    task_id = rows[0]["task_id"] if task_id is None else task_id
    rows = [r for r in rows if r["task_id"] == task_id]
    episode = rows[0]["episode"] if episode is None and rows else episode
    rows = [r for r in rows if r["episode"] == episode]
    if not rows:
        raise ValueError(f"no rows for task {task_id}, episode {episode}")
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 4))
    if exp is not None:
        env = next(e for e in exp.envs if e.task.id == task_id)
        for (a, b) in env.area.segments():
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.8", lw=1)
        ax.plot(*env.area.mbs_position, "r^", ms=10, label="MBS")
        ax.set_xlim(0, env.area.length)
        ax.set_ylim(0, env.area.width)
    for u in sorted({r["u"] for r in rows}):
        pts = sorted((r["t"], r["x"], r["y"]) for r in rows if r["u"] == u)
        xs, ys = [p[1] for p in pts], [p[2] for p in pts]
        ax.plot(xs, ys, marker=".", label=f"UABS {u}")
    ax.set_aspect("equal", adjustable="box")
    ax.set_title(f"task {task_id}, episode {episode}")
    ax.legend(fontsize=7)
    return _save(fig, Path(out_path))
