import json

import numpy as np
import pytest

from uabs_fleet.harness import (FSE_FRACTIONS, build_experiment, episode_seed, evaluate, fse_table, read_episode_log,
                                replay, run_matrix, run_training, win_ratio_table, write_episode_log)
from uabs_fleet.learner import load_checkpoint
from uabs_fleet.metrics import RunRecord, read_metrics


class Recorder:
    def __init__(self):
        self.events = []

    def __call__(self, kind, **kw):
        self.events.append((kind, kw))

    def kinds(self):
        return [k for k, _ in self.events]


@pytest.fixture(scope="module")
def micro_exp(micro_cfg):
    return build_experiment(micro_cfg)


def test_smoke_one_round(micro_cfg, micro_exp):
    res = run_training(micro_cfg, "mamo", 0, n_episodes=1, experiment=micro_exp)
    assert len(micro_exp.tasks) == 2
    assert [(r.task_id, r.episode) for r in res.records] == [(0, 0), (1, 0)]
    assert all(np.isfinite(r.ret) and r.ret >= 0 for r in res.records)


def test_metrics_files_are_byte_identical(micro_cfg, tmp_path):
    run_training(micro_cfg, "mamo", 3, tmp_path / "a")
    run_training(micro_cfg, "mamo", 3, tmp_path / "b")
    a, b = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b and len(a.splitlines()) == 1 + 2 * micro_cfg.run.N
    run_training(micro_cfg, "mamo", 4, tmp_path / "c")
    assert (tmp_path / "c" / "metrics.csv").read_bytes() != a


def test_episode_seeds_are_shared_across_tasks_and_strategies():
    assert episode_seed(0, 5) == episode_seed(0, 5)
    assert episode_seed(0, 5) != episode_seed(0, 6) != episode_seed(1, 5)


def _expected_task_block(task, n_agents, t_steps, advisor):
    block = [("eps_update", task)]
    for _ in range(t_steps):
        block += [("select", task)] * n_agents + [("env_step", task)]
        for _ in range(n_agents):
            block.append(("store_task", task))
            if advisor:
                block.append(("store_advisor", task))
        block.append(("train_task", task))
    return block


@pytest.mark.parametrize("strategy", ["mamo", "mama"])
def test_trace_follows_training_loop_order(micro_cfg, micro_exp, strategy):
    rec = Recorder()
    run_training(micro_cfg, strategy, 0, trace=rec, n_episodes=2, experiment=micro_exp)
    U, T, J = 3, micro_cfg.env.t_steps, micro_cfg.explore.J
    expected = []
    for n in range(2):
        for task in range(2):
            expected += _expected_task_block(task, U, T, advisor=True)
        expected += [("train_advisor", None)] * J
    got = [(k, kw.get("task")) for k, kw in rec.events]
    assert got == expected


def test_egreedy_never_touches_advisor(micro_cfg, micro_exp):
    rec = Recorder()
    res = run_training(micro_cfg, "egreedy-0.6", 0, trace=rec, n_episodes=2, experiment=micro_exp)
    assert res.advisor is None
    assert not {"store_advisor", "train_advisor"} & set(rec.kinds())
    assert {kw["mode"] for k, kw in rec.events if k == "select"} <= {"random", "exploit"}
    assert all(kw["eps_mu"] == 1.0 for k, kw in rec.events if k == "eps_update")
    assert all(r.aoc == 0 for r in res.records)


def test_mama_never_overrides_and_mamo_counts_match_trace(micro_cfg, micro_exp):
    rec = Recorder()
    mama = run_training(micro_cfg, "mama", 0, trace=rec, experiment=micro_exp)
    assert all(r.aoc == 0 for r in mama.records)
    assert not any(kw["override"] for k, kw in rec.events if k == "select")
    total = 0
    for seed in range(4):
        rec = Recorder()
        mamo = run_training(micro_cfg, "mamo", seed, trace=rec, experiment=micro_exp)
        # independent tally from the selection trace, grouped by episode and task
        tally = {}
        n = -1
        for k, kw in rec.events:
            if k == "eps_update":
                n = kw["episode"]
            if k == "select" and kw["override"]:
                tally[(n, kw["task"])] = tally.get((n, kw["task"]), 0) + 1
        assert {(r.episode, r.task_id): r.aoc for r in mamo.records if r.aoc} == tally
        total += sum(tally.values())
    assert total > 0


def test_schedules_for_two_egreedy_fractions_never_cross(micro_cfg, micro_exp):
    eps = {}
    for s in ("egreedy-0.2", "egreedy-0.6"):
        rec = Recorder()
        run_training(micro_cfg, s, 0, trace=rec, experiment=micro_exp)
        eps[s] = [kw["eps_i"] for k, kw in rec.events if k == "eps_update"]
    assert all(a <= b for a, b in zip(eps["egreedy-0.2"], eps["egreedy-0.6"]))


def test_parallel_matches_sequential(micro_cfg, micro_exp):
    seq = run_training(micro_cfg, "mamo", 2, experiment=micro_exp, workers=1)
    par = run_training(micro_cfg, "mamo", 2, experiment=micro_exp, workers=2)
    assert seq.records == par.records
    for a, b in zip(seq.learners + [seq.advisor], par.learners + [par.advisor]):
        assert all(np.array_equal(a.online.params[k], b.online.params[k]) for k in a.online.params)


def test_generalized_shares_one_learner(micro_cfg, micro_exp):
    res = run_training(micro_cfg, "generalized", 0, n_episodes=2, experiment=micro_exp, workers=4)
    assert res.learners[0] is res.learners[1] and res.advisor is None
    assert res.learners[0].buffer.capacity == micro_cfg.learner.K_i * 2
    assert res.learners[0].buffer.total_added == 2 * 2 * 3 * micro_cfg.env.t_steps


def test_checkpoints_written_on_cadence(micro_cfg, micro_exp, tmp_path):
    res = run_training(micro_cfg, "mamo", 0, tmp_path, experiment=micro_exp)
    names = sorted(p.name for p in res.checkpoints)
    assert names == sorted(f"{w}_ep{n}.npz" for n in (2, 4) for w in ("task0", "task1", "advisor"))
    net, opt, target, extra = load_checkpoint(tmp_path / "checkpoints" / "mamo_seed0" / "advisor_ep4.npz")
    assert net.input_dim == micro_exp.envs[0].obs_dim + 2
    assert np.array_equal(net.params["adv.out.b"], res.advisor.online.params["adv.out.b"])


def test_unknown_strategy_rejected(micro_cfg, micro_exp):
    with pytest.raises(ValueError):
        run_training(micro_cfg, "softmax", 0, experiment=micro_exp)


def test_baseline_has_no_uabs_packets(micro_exp):
    ev = evaluate(micro_exp, None, 0, 1)
    for ld in ev.load.values():
        assert ld.uabs_packets.sum() == 0
        if ld.defined:
            assert ld.shares[0].sum() == 1.0
    assert all(r == [0.0] for r in ev.returns.values())


def test_evaluation_is_deterministic_and_logged(micro_cfg, micro_exp, tmp_path):
    res = run_training(micro_cfg, "mamo", 0, n_episodes=1, experiment=micro_exp)
    a = evaluate(micro_exp, res.learners, 0, 2, log_episodes=True)
    b = evaluate(micro_exp, res.learners, 0, 2, log_episodes=True)
    assert a.returns == b.returns and a.episode_log == b.episode_log
    assert len(a.episode_log) == 2 * 2 * micro_cfg.env.t_steps * 3
    write_episode_log(tmp_path / "ep.csv", a.episode_log)
    rows = read_episode_log(tmp_path / "ep.csv")
    assert (tmp_path / "ep.csv").read_text().splitlines()[0] == "task_id,episode,t,u,x,y,action,reward"
    assert len(rows) == len(a.episode_log) and rows[0]["t"] == 0
    out = replay(tmp_path / "ep.csv", micro_exp, tmp_path / "replay.png", task_id=1, episode=1)
    assert out.stat().st_size > 0
    with pytest.raises(ValueError):
        replay(tmp_path / "ep.csv", None, tmp_path / "x.png", task_id=9)


def test_bad_episode_log(tmp_path):
    (tmp_path / "bad.csv").write_text("task_id,episode\n0,0\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_episode_log(tmp_path / "bad.csv")


class _Run:
    def __init__(self, recs):
        self.records = recs


def _runs(table):
    return {(s, 0): _Run([RunRecord(s, 0, 0, n, float(r), 0, 0, ()) for n, r in enumerate(rets)])
            for s, rets in table.items()}


def test_fse_table_uses_the_best_return_over_strategies():
    runs = _runs({"a": [1, 5, 10], "b": [2, 2, 4]})
    fse = fse_table(runs, ["a", "b"], [0], fractions=(0.1, 0.5, 1.0))
    assert fse["a"] == {0.1: 0.0, 0.5: 1.0, 1.0: 2.0}
    # b never reaches 10: counted as the run length
    assert fse["b"] == {0.1: 0.0, 0.5: 3.0, 1.0: 3.0}
    assert len(FSE_FRACTIONS) == 10


def test_win_ratio_table():
    wr = win_ratio_table(_runs({"a": [3, 5, 2], "b": [1, 6, 2]}), ["a", "b"], [0])
    assert wr[("a", "b")] == pytest.approx(1 / 3) and wr[("b", "a")] == pytest.approx(1 / 3)


def test_matrix_artifacts(micro_cfg, tmp_path):
    res = run_matrix(micro_cfg, ["mamo", "mama"], [0], tmp_path, n_episodes=2)
    assert not res.failures
    for name in ("metrics.csv", "summary.json", "summary.md", "returns.png", "fse.png", "aoc.png", "satisfied.png"):
        assert (tmp_path / name).stat().st_size > 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["total_aoc"]["mama"] == 0
    assert summary["load"]["no_uabs"]["uabs_shares"] == [] or all(x == 0 for x in summary["load"]["no_uabs"]["uabs_shares"])
    assert summary["load"]["no_uabs"]["mbs_share"] in (0.0, 1.0)
    for band in summary["satisfied"].values():
        m = [x for x in band["mean"] if x == x]
        assert all(b <= a + 1e-12 for a, b in zip(m, m[1:]))
    assert len(read_metrics(tmp_path / "metrics.csv")) == 2 * 2 * 2
    assert "Win ratio" in (tmp_path / "summary.md").read_text()


def test_matrix_single_episode_plots(micro_cfg, tmp_path):
    res = run_matrix(micro_cfg, ["egreedy-0.6"], [1], tmp_path, n_episodes=1)
    assert (tmp_path / "returns.png").exists() and not res.failures


def test_matrix_records_failures_and_continues(micro_cfg, tmp_path):
    res = run_matrix(micro_cfg, ["mamo", "bogus-strategy"], [0], tmp_path, n_episodes=1, plots=False)
    assert ("mamo", 0) in res.runs
    assert ("bogus-strategy", 0) in res.failures
    assert "bogus-strategy|0" in json.loads((tmp_path / "summary.json").read_text())["failures"]
