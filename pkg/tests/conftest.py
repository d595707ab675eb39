import itertools
import math

import numpy as np
import pytest

from uabs_fleet.config import load_profile
from uabs_fleet.radio import CoverageMatrix
from uabs_fleet.rrm import build_instance

N_BEAM = 9


def random_instance(rng, G=None, U=None, W=None, M=1):
    """Synthetic RRM instance with integer RU needs in 1..W+1.

    Demand is 1 bit and delta_t is 1 s, so a rate of 1/n means n RUs.
    """
    G = int(rng.integers(1, 7)) if G is None else G
    U = int(rng.integers(1, 3)) if U is None else U
    W = int(rng.integers(1, 5)) if W is None else W

    def rate(need):
        return 1.0 / need

    c_gm = rng.random((G, M)) < 0.6
    k = np.zeros((G, U, N_BEAM), dtype=bool)
    beams = rng.integers(0, N_BEAM, (G, U))
    in_beam = rng.random((G, U)) < 0.7
    c_gu = in_beam & (rng.random((G, U)) < 0.85)
    for g, u in zip(*np.nonzero(c_gu)):
        k[g, u, beams[g, u]] = True
    need_gm = rng.integers(1, W + 2, (G, M))
    need_gu = rng.integers(1, W + 2, (G, U))
    r_gm = np.where(c_gm, rate(need_gm), 0.0)
    r_gu = np.where(c_gu, rate(need_gu), 0.0)
    extra_m = rng.integers(0, 3, (G, M, U))
    extra_u = rng.integers(0, 3, (G, U, M))
    rI_gmu = np.where(c_gm[:, :, None], rate(need_gm[:, :, None] + extra_m), 0.0)
    rI_gum = np.where(c_gu[:, :, None], rate(need_gu[:, :, None] + extra_u), 0.0)
    I_gmu = c_gm[:, :, None] & c_gu[:, None, :]
    I_gum = np.transpose(I_gmu, (0, 2, 1)).copy()
    r_um = np.where(rng.random((U, M)) < 0.85, rng.choice([0.5, 1.0, 2.0, 3.0], (U, M)), 0.0)
    cov = CoverageMatrix(c_gm, c_gu, k, I_gmu, I_gum, r_gm, r_gu, r_um, rI_gmu, rI_gum)
    pri = rng.integers(1, 5, G).astype(float)
    return build_instance(cov, pri, 1.0, W, delta_t=1.0, n_beam=N_BEAM)


def _need(demand, rate, dt):
    if rate <= 0:
        return math.inf
    return math.ceil(demand / (rate * dt) - 1e-9)


def association_cost(inst, assoc):
    """Pure-loop minimal RU layout for one association, or None if it cannot fit.

    assoc[g] = -1 (unserved), m (MBS m) or M + u (UABS u).
    """
    cov = inst.coverage
    G, U, M = inst.sizes
    W, D, dt = inst.ru_budget, inst.demands, inst.delta_t
    # realized interference: users of u heard by m, users of m heard by u
    iota_mu = [[any(assoc[g] == M + u and cov.I_gum[g, u, m] for g in range(G)) for u in range(U)] for m in range(M)]
    iota_um = [[any(assoc[g] == m and cov.I_gmu[g, m, u] for g in range(G)) for m in range(M)] for u in range(U)]
    mbs_ru = [0] * M
    beam_ru = [[0] * N_BEAM for _ in range(U)]
    relay = [0.0] * U
    for g in range(G):
        a = assoc[g]
        if a < 0:
            continue
        if a < M:
            m = a
            w = _need(D[g], cov.r_gm[g, m], dt)
            for u in range(U):
                if iota_mu[m][u]:
                    w = max(w, _need(D[g], cov.rI_gmu[g, m, u], dt))
            if w > W:
                return None
            mbs_ru[m] += w
        else:
            u = a - M
            if not cov.k[g, u].any():
                return None
            j = int(np.flatnonzero(cov.k[g, u])[0])
            w = _need(D[g], cov.r_gu[g, u], dt)
            for m in range(M):
                if iota_um[u][m]:
                    w = max(w, _need(D[g], cov.rI_gum[g, u, m], dt))
            if w > W:
                return None
            beam_ru[u][j] += w
            relay[u] += w * cov.r_gu[g, u]
    backhaul = [0] * U
    for u in range(U):
        if relay[u] > 0:
            best = max(range(M), key=lambda m: (cov.r_um[u, m], -m))
            r = cov.r_um[u, best]
            if r <= 0:
                return None
            w = math.ceil(relay[u] / r - 1e-9)
            backhaul[u] = w
            mbs_ru[best] += w
    if any(x > W for x in mbs_ru):
        return None
    for u in range(U):
        if any(x + backhaul[u] > W for x in beam_ru[u]):
            return None
    return sum(mbs_ru) + sum(map(sum, beam_ru))


def brute_force_optimum(inst):
    """Best priority sum over every association pattern."""
    G, U, M = inst.sizes
    best = 0.0
    for assoc in itertools.product(range(-1, M + U), repeat=G):
        if association_cost(inst, assoc) is not None:
            val = sum(inst.priorities[g] for g in range(G) if assoc[g] >= 0)
            best = max(best, val)
    return best


def loop_violations(inst, sol):
    """Names of violated constraints, checked with explicit loops."""
    cov = inst.coverage
    G, U, M = inst.sizes
    W, D, dt, B = inst.ru_budget, inst.demands, inst.delta_t, inst.n_beam
    eps = 1e-9
    bad = set()
    for name in sol.array_fields:
        arr = getattr(sol, name)
        for v in np.asarray(arr).ravel():
            if name.startswith("w_"):
                if v < 0 or v > W:
                    bad.add("domain")
            elif v not in (0, 1):
                bad.add("domain")
    kw = lambda g, u, j: cov.k[g, u, j] * sol.w_gu[g, u]  # noqa: E731
    for g in range(G):
        s = sum(sol.w_gm[g, m] * cov.r_gm[g, m] * dt for m in range(M))
        s += sum(kw(g, u, j) * cov.r_gu[g, u] * dt for u in range(U) for j in range(B))
        if s < sol.psi_g[g] * D[g] - eps:
            bad.add("demand")
        for m in range(M):
            for u in range(U):
                lhs = sol.w_gm[g, m] * cov.rI_gmu[g, m, u] * dt
                lhs += sum(kw(g, u, j) * cov.rI_gum[g, u, m] * dt for j in range(B))
                if lhs < (sol.iota_gmu[g, m, u] + sol.iota_gum[g, u, m]) * D[g] - eps:
                    bad.add("demand-sinr-um")
                if sol.iota_gmu[g, m, u] < sol.lambda_gm[g, m] + sol.iota_mu[m, u] - 1:
                    bad.add("interf-u-on-gm")
                if sol.iota_gum[g, u, m] < sol.lambda_gu[g, u] + sol.iota_um[u, m] - 1:
                    bad.add("interf-m-on-gu")
                if cov.I_gum[g, u, m] and sol.iota_mu[m, u] < sol.lambda_gu[g, u]:
                    bad.add("interf-u-on-m")
                if cov.I_gmu[g, m, u] and sol.iota_um[u, m] < sol.lambda_gm[g, m]:
                    bad.add("interf-m-on-u")
        if sum(sol.lambda_gm[g]) + sum(sol.lambda_gu[g]) > 1:
            bad.add("one_base")
        for m in range(M):
            if sol.w_gm[g, m] > sol.lambda_gm[g, m] * W:
                bad.add("one_base_mbs")
            if sol.psi_gm[g, m] != sol.psi_g[g] * sol.lambda_gm[g, m]:
                bad.add("served_link")
        for u in range(U):
            if sol.w_gu[g, u] > sol.lambda_gu[g, u] * W:
                bad.add("one_base_uabs")
            if sol.psi_gu[g, u] != sol.psi_g[g] * sol.lambda_gu[g, u]:
                bad.add("served_link")
    for m in range(M):
        if sum(sol.w_gm[g, m] for g in range(G)) + sum(sol.w_um[u, m] for u in range(U)) > W:
            bad.add("res_limit_mbs")
    for u in range(U):
        bh = sum(sol.w_um[u, m] for m in range(M))
        for j in range(B):
            load = sum(kw(g, u, j) for g in range(G))
            if load + bh > W:
                bad.add("res_limit_uabs")
            if load > sol.e[u, j] * W:
                bad.add("beam_uabs_lim2")
        if sum(sol.e[u]) > B:
            bad.add("beam_uabs_lim")
        relayed = sum(kw(g, u, j) * cov.r_gu[g, u] for g in range(G) for j in range(B))
        if relayed > sum(cov.r_um[u, m] * sol.w_um[u, m] for m in range(M)) + eps:
            bad.add("capacity_backhaul")
        for m in range(M):
            if sol.w_um[u, m] > sol.lambda_um[u, m] * W:
                bad.add("backhaul_activation")
    if abs(sol.objective_value - float(np.dot(sol.psi_g, inst.priorities))) > 1e-9:
        bad.add("objective")
    return bad


@pytest.fixture(scope="session")
def desk_cfg():
    return load_profile("desk")


@pytest.fixture(scope="session")
def micro_cfg(desk_cfg):
    """Tiny, fast variant of the desk profile for smoke and determinism tests."""
    return desk_cfg.with_overrides(
        scenario={"areas": [
            {"id": 0, "template": "grid", "gue_count": 6, "mbs_position": [750.0, 350.0], "params": {"nx": 3, "ny": 2}},
            {"id": 1, "template": "ring", "gue_count": 5, "mbs_position": [300.0, 550.0], "params": {}},
        ]},
        learner={"hidden": [8], "head_hidden": 0, "K_i": 500, "K_mu": 1000, "k": 8},
        explore={"J": 3},
        env={"T": 50.0},
        run={"N": 4, "seeds": [0, 1], "strategies": ["mamo", "mama"], "eval_episodes": 1, "checkpoint_every": 2},
    )
