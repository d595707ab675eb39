"""Joint MBS/UABS radio resource management as a small integer program.

Decision variables follow the usual naming: ``lambda_*`` association and
backhaul activation, ``w_*`` RU allocations, ``e`` beam activation,
``iota_*`` realized interference, ``psi_*`` served indicators.

Both solvers search over user association only. For a fixed association
the cheapest resources are forced: each served user gets the fewest RUs
meeting its demand (interference-limited when its BS is interfered),
realized interference is the minimal set implied by the association and
the backhaul carries exactly the relayed load. Any feasible solution can be
reduced to that form without losing objective, and dropping a served user
never breaks feasibility, which is what makes the branch-and-bound bound
valid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .radio import CoverageMatrix
from .resources import ResourceGrid, compute_ru_budget  # noqa: F401  (re-export)

TOL = 1e-9
EXACT_SIZE_CAP = 8
EXACT_RU_CAP = 6


class RRMError(ValueError):
    pass


@dataclass
class RRMInstance:
    coverage: CoverageMatrix
    priorities: np.ndarray
    demands: np.ndarray
    ru_budget: int
    delta_t: float = 0.1
    n_beam: int = 9

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.coverage.shape

    def validate(self) -> None:
        G, U, M = self.sizes
        if self.priorities.shape != (G,) or self.demands.shape != (G,):
            raise RRMError(f"dimension mismatch: {G} users vs priorities {self.priorities.shape}, demands {self.demands.shape}")
        if self.ru_budget < 1:
            raise RRMError("ru_budget must be >= 1")
        if G and (self.priorities < 1).any():
            raise RRMError("priorities must be >= 1")
        if G and (self.demands <= 0).any():
            raise RRMError("demands must be positive")
        if self.coverage.n_beam != self.n_beam:
            raise RRMError("beam count does not match coverage matrix")


def build_instance(coverage: CoverageMatrix, priorities, demands, ru_budget: int,
                   delta_t: float = 0.1, n_beam: int | None = None) -> RRMInstance:
    G = coverage.shape[0]
    pr = np.asarray(priorities, dtype=float).reshape(-1)
    dm = np.broadcast_to(np.asarray(demands, dtype=float), (G,)).copy() if np.ndim(demands) == 0 else np.asarray(demands, dtype=float)
    inst = RRMInstance(coverage, pr, dm, int(ru_budget), float(delta_t), n_beam or coverage.n_beam)
    inst.validate()
    return inst


@dataclass
class RRMSolution:
    lambda_gm: np.ndarray
    lambda_gu: np.ndarray
    lambda_um: np.ndarray
    w_gm: np.ndarray
    w_gu: np.ndarray
    w_um: np.ndarray
    e: np.ndarray           # (U, n_beam)
    iota_gmu: np.ndarray    # (G, M, U)
    iota_gum: np.ndarray    # (G, U, M)
    iota_mu: np.ndarray     # (M, U): users of u interfere at m
    iota_um: np.ndarray     # (U, M): users of m interfere at u
    psi_g: np.ndarray
    psi_gm: np.ndarray
    psi_gu: np.ndarray
    objective_value: float = 0.0

    @classmethod
    def zeros(cls, inst: RRMInstance) -> "RRMSolution":
        G, U, M = inst.sizes
        z = lambda *s: np.zeros(s, dtype=np.int64)  # noqa: E731
        return cls(z(G, M), z(G, U), z(U, M), z(G, M), z(G, U), z(U, M), z(U, inst.n_beam),
                   z(G, M, U), z(G, U, M), z(M, U), z(U, M), z(G), z(G, M), z(G, U), 0.0)

    def copy(self) -> "RRMSolution":
        kw = {f.name: (getattr(self, f.name).copy() if isinstance(getattr(self, f.name), np.ndarray)
                       else getattr(self, f.name)) for f in fields(self)}
        return RRMSolution(**kw)

    @property
    def array_fields(self) -> list[str]:
        return [f.name for f in fields(self) if f.name != "objective_value"]

    def association(self) -> np.ndarray:
        """Per-user serving BS: -1 none, m for an MBS, M + u for a UABS."""
        G, M = self.lambda_gm.shape
        out = np.full(G, -1)
        gm, m = np.nonzero(self.lambda_gm)
        out[gm] = m
        gu, u = np.nonzero(self.lambda_gu)
        out[gu] = M + u
        return out


# ---------------------------------------------------------------------------
# minimal-resource evaluation of an association


def _ru_need(demand: np.ndarray, rate: np.ndarray, delta_t: float) -> np.ndarray:
    """Fewest RUs with ``w * rate * delta_t >= demand``; inf where rate is 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        q = demand / (rate * delta_t)
    q = np.where(rate > 0, q, np.inf)
    return np.where(np.isfinite(q), np.ceil(q * (1 - TOL)), np.inf)


class _Plan:
    """Per-instance RU requirements, computed once and reused by the solvers."""

    def __init__(self, inst: RRMInstance):
        cov = inst.coverage
        self.inst = inst
        self.G, self.U, self.M = inst.sizes
        G, U, M = self.G, self.U, self.M
        D = inst.demands
        dt = inst.delta_t
        self.W = inst.ru_budget
        self.need_gm = _ru_need(D[:, None], cov.r_gm, dt)
        self.need_gu = _ru_need(D[:, None], cov.r_gu, dt)
        self.needI_gmu = _ru_need(D[:, None, None], cov.rI_gmu, dt)
        self.needI_gum = _ru_need(D[:, None, None], cov.rI_gum, dt)
        self.beam = np.where(cov.k.any(-1), np.argmax(cov.k, axis=-1), -1)  # (G, U)
        self.parent = np.argmax(cov.r_um, axis=1) if M else np.zeros(U, int)  # backhaul MBS per UABS
        self.r_um_best = cov.r_um[np.arange(U), self.parent] if M else np.zeros(U)
        self.I_gmu = cov.I_gmu
        self.I_gum = cov.I_gum
        self.r_gu = cov.r_gu
        # options per user: BS indices whose interference-free need fits in W
        self.options = []
        for g in range(G):
            opts = [m for m in range(M) if self.need_gm[g, m] <= self.W]
            opts += [M + u for u in range(U) if self.beam[g, u] >= 0 and self.need_gu[g, u] <= self.W
                     and self.r_um_best[u] > 0]
            self.options.append(opts)

    def evaluate(self, assoc: np.ndarray):
        """Minimal resources for ``assoc`` or None if infeasible."""
        G, U, M, W = self.G, self.U, self.M, self.W
        to_m = assoc[:, None] == np.arange(M)
        to_u = assoc[:, None] == (M + np.arange(U))
        iota_mu = np.any(to_u[:, :, None] & self.I_gum, axis=0).T  # (M, U)
        iota_um = np.any(to_m[:, :, None] & self.I_gmu, axis=0).T  # (U, M)
        if U:
            req_m = np.maximum(self.need_gm, np.where(iota_mu[None], self.needI_gmu, 0).max(axis=2))
        else:
            req_m = self.need_gm
        if M:
            req_u = np.maximum(self.need_gu, np.where(iota_um[None], self.needI_gum, 0).max(axis=2))
        else:
            req_u = self.need_gu
        w_gm = np.where(to_m, req_m, 0)
        w_gu = np.where(to_u, req_u, 0)
        if (w_gm > W).any() or (w_gu > W).any():
            return None
        w_gm = w_gm.astype(np.int64)
        w_gu = w_gu.astype(np.int64)
        w_um = np.zeros((U, M), dtype=np.int64)
        load = (w_gu * self.r_gu).sum(axis=0)
        for u in range(U):
            if load[u] > 0:
                r = self.r_um_best[u]
                if r <= 0:
                    return None
                w = math.ceil(load[u] / r * (1 - TOL))
                if w > W:
                    return None
                w_um[u, self.parent[u]] = w
        if M and ((w_gm.sum(axis=0) + w_um.sum(axis=0)) > W).any():
            return None
        beam_load = np.zeros((U, self.inst.n_beam), dtype=np.int64)
        for u in range(U):
            sel = to_u[:, u]
            if sel.any():
                np.add.at(beam_load[u], self.beam[sel, u], w_gu[sel, u])
        if U and ((beam_load + w_um.sum(axis=1)[:, None]) > W).any():
            return None
        return w_gm, w_gu, w_um, iota_mu, iota_um, beam_load

    def assemble(self, assoc: np.ndarray, ev=None) -> RRMSolution:
        ev = ev if ev is not None else self.evaluate(assoc)
        if ev is None:
            raise RRMError("association is infeasible")
        w_gm, w_gu, w_um, iota_mu, iota_um, beam_load = ev
        G, U, M = self.G, self.U, self.M
        lam_gm = (assoc[:, None] == np.arange(M)).astype(np.int64)
        lam_gu = (assoc[:, None] == (M + np.arange(U))).astype(np.int64)
        psi = (assoc >= 0).astype(np.int64)
        sol = RRMSolution(
            lambda_gm=lam_gm, lambda_gu=lam_gu, lambda_um=(w_um > 0).astype(np.int64),
            w_gm=w_gm, w_gu=w_gu, w_um=w_um, e=(beam_load > 0).astype(np.int64),
            iota_gmu=(lam_gm[:, :, None] & iota_mu[None].astype(np.int64)),
            iota_gum=(lam_gu[:, :, None] & iota_um[None].astype(np.int64)),
            iota_mu=iota_mu.astype(np.int64), iota_um=iota_um.astype(np.int64),
            psi_g=psi, psi_gm=lam_gm * psi[:, None], psi_gu=lam_gu * psi[:, None],
            objective_value=float((psi * self.inst.priorities).sum()),
        )
        return sol


def solve_exact(inst: RRMInstance, size_cap: int = EXACT_SIZE_CAP, ru_cap: int = EXACT_RU_CAP) -> RRMSolution:
    """Provably optimal solution by depth-first branch and bound over associations."""
    inst.validate()
    G, U, M = inst.sizes
    if G > size_cap or inst.ru_budget > ru_cap:
        raise RRMError(f"instance too large for exact solve (|G|={G}, W={inst.ru_budget}); use heuristic")
    if M > 1:
        raise RRMError("exact solve supports a single MBS")
    plan = _Plan(inst)
    p = inst.priorities
    order = sorted((g for g in range(G) if plan.options[g]), key=lambda g: (-p[g], g))
    suffix = np.zeros(len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + p[order[i]]

    assoc = np.full(G, -1)
    best = {"obj": 0.0, "assoc": assoc.copy()}

    def dfs(i: int, obj: float):
        if obj > best["obj"]:
            best["obj"] = obj
            best["assoc"] = assoc.copy()
        if i == len(order) or obj + suffix[i] <= best["obj"]:
            return
        g = order[i]
        for bs in plan.options[g]:
            assoc[g] = bs
            if plan.evaluate(assoc) is not None:
                dfs(i + 1, obj + p[g])
            assoc[g] = -1
            if obj + suffix[i] <= best["obj"]:
                return
        dfs(i + 1, obj)

    dfs(0, 0.0)
    return plan.assemble(best["assoc"])


def solve_greedy(inst: RRMInstance) -> RRMSolution:
    """Priority-ordered greedy association.

    Users are visited by descending priority (ties: lower index) and each
    one joins the candidate BS that keeps the total RU usage lowest among
    feasible choices (ties: lower BS index). Every accepted step keeps the
    partial solution feasible, so the result always is.
    """
    inst.validate()
    plan = _Plan(inst)
    G = plan.G
    p = inst.priorities
    assoc = np.full(G, -1)
    current = plan.evaluate(assoc)
    for g in sorted(range(G), key=lambda g: (-p[g], g)):
        best = None
        for bs in plan.options[g]:
            assoc[g] = bs
            ev = plan.evaluate(assoc)
            if ev is not None:
                cost = int(ev[0].sum() + ev[1].sum() + ev[2].sum())
                if best is None or cost < best[0]:
                    best = (cost, bs, ev)
        if best is None:
            assoc[g] = -1
        else:
            assoc[g] = best[1]
            current = best[2]
    return plan.assemble(assoc, current)


# ---------------------------------------------------------------------------
# feasibility verification, written directly from the constraint list

CONSTRAINTS = (
    "domain", "demand", "demand-sinr-um", "res_limit_mbs", "res_limit_uabs", "capacity_backhaul",
    "beam_uabs_lim", "beam_uabs_lim2", "one_base", "one_base_mbs", "one_base_uabs", "backhaul_activation",
    "interf-u-on-m", "interf-m-on-u", "interf-u-on-gm", "interf-m-on-gu", "served_link", "objective",
)


@dataclass
class FeasibilityReport:
    checks: dict[str, tuple[bool, tuple | None]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(passed for passed, _ in self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, (passed, _) in self.checks.items() if not passed]

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "feasible"
        return "; ".join(f"{k} violated at {self.checks[k][1]}" for k in self.failures)


def _first(mask: np.ndarray):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0]) if len(idx) else None


def _geq(lhs, rhs):
    """Elementwise lhs >= rhs with a relative float tolerance."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    return lhs >= rhs - TOL * np.maximum(1.0, np.abs(rhs))


def verify_feasibility(inst: RRMInstance, sol: RRMSolution) -> FeasibilityReport:
    cov = inst.coverage
    G, U, M = inst.sizes
    W = inst.ru_budget
    D = inst.demands
    dt = inst.delta_t
    k = cov.k.astype(np.int64)
    rep = FeasibilityReport()

    def record(name, ok_mask):
        ok_mask = np.asarray(ok_mask, dtype=bool)
        bad = ~ok_mask
        rep.checks[name] = (not bad.any(), _first(bad) if bad.any() else None)

    binary = ("lambda_gm", "lambda_gu", "lambda_um", "e", "iota_gmu", "iota_gum", "iota_mu", "iota_um",
              "psi_g", "psi_gm", "psi_gu")
    integer = ("w_gm", "w_gu", "w_um")
    expected = {
        "lambda_gm": (G, M), "lambda_gu": (G, U), "lambda_um": (U, M), "w_gm": (G, M), "w_gu": (G, U),
        "w_um": (U, M), "e": (U, inst.n_beam), "iota_gmu": (G, M, U), "iota_gum": (G, U, M),
        "iota_mu": (M, U), "iota_um": (U, M), "psi_g": (G,), "psi_gm": (G, M), "psi_gu": (G, U),
    }
    dom_ok = True
    dom_at = None
    for name, shape in expected.items():
        arr = np.asarray(getattr(sol, name))
        if arr.shape != shape:
            raise RRMError(f"solution field {name} has shape {arr.shape}, expected {shape}")
        if name in binary:
            bad = ~np.isin(arr, (0, 1))
        else:
            bad = (arr < 0) | (arr > W) | (arr != np.round(arr))
        if bad.any() and dom_ok:
            dom_ok, dom_at = False, (name,) + _first(bad)
    rep.checks["domain"] = (dom_ok, dom_at)

    lam_gm, lam_gu, lam_um = sol.lambda_gm, sol.lambda_gu, sol.lambda_um
    w_gm, w_gu, w_um = sol.w_gm.astype(float), sol.w_gu.astype(float), sol.w_um.astype(float)
    kw = k * sol.w_gu[:, :, None]  # (G, U, J): k_{g,j_u} w_{g,u}

    # (demand): sum_m w_gm r_gm dt + sum_u sum_j k w_gu r_gu dt >= psi_g D_g
    supply = (w_gm * cov.r_gm).sum(1) * dt + (kw.sum(2) * cov.r_gu).sum(1) * dt
    record("demand", _geq(supply, sol.psi_g * D))

    # (demand-sinr-um), per (g, u, m)
    lhs = (w_gm[:, :, None] * cov.rI_gmu) * dt + np.transpose(kw.sum(2)[:, :, None] * cov.rI_gum, (0, 2, 1)) * dt
    rhs = (sol.iota_gmu + np.transpose(sol.iota_gum, (0, 2, 1))) * D[:, None, None]
    record("demand-sinr-um", _geq(lhs, rhs))

    record("res_limit_mbs", w_gm.sum(0) + w_um.sum(0) <= W)
    record("res_limit_uabs", kw.sum(0) + w_um.sum(1)[:, None] <= W)
    relayed = (kw.sum(2) * cov.r_gu).sum(0)
    record("capacity_backhaul", _geq((cov.r_um * w_um).sum(1), relayed))
    record("beam_uabs_lim", sol.e.sum(1) <= inst.n_beam)
    record("beam_uabs_lim2", kw.sum(0) <= sol.e * W)
    record("one_base", lam_gm.sum(1) + lam_gu.sum(1) <= 1)
    record("one_base_mbs", w_gm <= lam_gm * W)
    record("one_base_uabs", w_gu <= lam_gu * W)
    record("backhaul_activation", w_um <= lam_um * W)
    # (interf-u-on-m): iota_mu >= lambda_gu for every g with I_gum = 1
    record("interf-u-on-m", sol.iota_mu.T[None] >= lam_gu[:, :, None] * cov.I_gum)
    record("interf-m-on-u", sol.iota_um.T[None] >= lam_gm[:, :, None] * cov.I_gmu)
    record("interf-u-on-gm", sol.iota_gmu >= lam_gm[:, :, None] + sol.iota_mu[None] - 1)
    record("interf-m-on-gu", sol.iota_gum >= lam_gu[:, :, None] + sol.iota_um[None] - 1)
    record("served_link", np.concatenate([
        (sol.psi_gm == sol.psi_g[:, None] * lam_gm).reshape(-1),
        (sol.psi_gu == sol.psi_g[:, None] * lam_gu).reshape(-1),
    ]))
    record("objective", np.isclose([sol.objective_value], [(sol.psi_g * inst.priorities).sum()],
                                   rtol=1e-12, atol=1e-9))
    return rep


# ---------------------------------------------------------------------------
# dumps for golden files


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def instance_to_dict(inst: RRMInstance) -> dict:
    cov = inst.coverage
    return {
        "format": "rrm-instance/1",
        "ru_budget": inst.ru_budget, "delta_t": inst.delta_t, "n_beam": inst.n_beam,
        "n_users": inst.sizes[0], "n_uabs": inst.sizes[1], "n_mbs": inst.sizes[2],
        "priorities": inst.priorities.tolist(), "demands": inst.demands.tolist(),
        "coverage": {f.name: _jsonable(getattr(cov, f.name)) for f in fields(cov)
                     if f.name not in ("sinr_gm", "sinr_gu")},
    }


def instance_from_dict(d: dict) -> RRMInstance:
    c = d["coverage"]
    G = int(d["n_users"])
    n_beam = d["n_beam"]

    def arr(name, dtype, shape):
        return np.asarray(c[name], dtype=dtype).reshape(shape)

    U, M = int(d["n_uabs"]), int(d["n_mbs"])
    cov = CoverageMatrix(
        arr("c_gm", bool, (G, M)), arr("c_gu", bool, (G, U)), arr("k", bool, (G, U, n_beam)),
        arr("I_gmu", bool, (G, M, U)), arr("I_gum", bool, (G, U, M)), arr("r_gm", float, (G, M)),
        arr("r_gu", float, (G, U)), arr("r_um", float, (U, M)), arr("rI_gmu", float, (G, M, U)),
        arr("rI_gum", float, (G, U, M)),
    )
    return RRMInstance(cov, np.asarray(d["priorities"], float), np.asarray(d["demands"], float),
                       int(d["ru_budget"]), float(d["delta_t"]), int(n_beam))


def solution_to_dict(sol: RRMSolution) -> dict:
    out = {"format": "rrm-solution/1", "objective_value": sol.objective_value}
    for name in sol.array_fields:
        out[name] = getattr(sol, name).tolist()
    return out


def solution_from_dict(d: dict, inst: RRMInstance) -> RRMSolution:
    ref = RRMSolution.zeros(inst)
    kw = {name: np.asarray(d[name], dtype=np.int64).reshape(getattr(ref, name).shape) for name in ref.array_fields}
    return RRMSolution(objective_value=float(d["objective_value"]), **kw)


def dump(path: str | Path, inst: RRMInstance, sol: RRMSolution | None = None) -> None:
    doc = {"instance": instance_to_dict(inst)}
    if sol is not None:
        doc["solution"] = solution_to_dict(sol)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def load_dump(path: str | Path) -> tuple[RRMInstance, RRMSolution | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    inst = instance_from_dict(doc["instance"])
    sol = solution_from_dict(doc["solution"], inst) if "solution" in doc else None
    return inst, sol
