"""Service areas, tasks and ground-user mobility traces.

Users move along a street graph: each one walks shortest paths between
uniformly drawn waypoint nodes, optionally dwelling at a waypoint for a few
steps (a crude traffic-light model). Traces are arrays of shape
``(horizon, n_users, 2)`` in meters.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

ON_EDGE_TOL = 1.0  # m
_SPEED_TOL = 1e-6


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceArea:
    id: int
    length: float
    width: float
    nodes: np.ndarray  # (n, 2)
    edges: tuple[tuple[int, int], ...]  # undirected segments, traversable both ways
    mbs_position: tuple[float, float]
    gue_count: int
    mbs_height: float = 25.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "mbs_position", (float(self.mbs_position[0]), float(self.mbs_position[1])))
        self.validate()

    def validate(self) -> None:
        if self.length <= 0 or self.width <= 0:
            raise ScenarioError(f"area {self.id}: non-positive dimensions")
        if self.gue_count < 0:
            raise ScenarioError(f"area {self.id}: negative gue_count")
        if len(self.nodes) and not self.contains(self.nodes).all():
            raise ScenarioError(f"area {self.id}: street node outside area bounds")
        if not self.contains(np.array([self.mbs_position])).all():
            raise ScenarioError(f"area {self.id}: MBS outside area bounds")
        n = len(self.nodes)
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ScenarioError(f"area {self.id}: bad edge ({a}, {b})")
        if n and self.edges:
            n_comp, _ = connected_components(self._adjacency(), directed=False)
            if n_comp != 1:
                raise ScenarioError(f"area {self.id}: street graph is not connected")

    def contains(self, xy: np.ndarray, tol: float = 0.0) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (
            (xy[..., 0] >= -tol) & (xy[..., 0] <= self.length + tol)
            & (xy[..., 1] >= -tol) & (xy[..., 1] <= self.width + tol)
        )

    def _adjacency(self) -> csr_matrix:
        n = len(self.nodes)
        rows, cols, w = [], [], []
        for a, b in self.edges:
            d = float(np.linalg.norm(self.nodes[a] - self.nodes[b]))
            rows += [a, b]
            cols += [b, a]
            w += [d, d]
        return csr_matrix((w, (rows, cols)), shape=(n, n))

    def segments(self) -> np.ndarray:
        """Edge endpoints as an array of shape (n_edges, 2, 2)."""
        return np.array([[self.nodes[a], self.nodes[b]] for a, b in self.edges]).reshape(-1, 2, 2)

    def distance_to_streets(self, xy: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the nearest street segment."""
        xy = np.asarray(xy, dtype=float)
        seg = self.segments()
        p = xy.reshape(-1, 1, 2)
        a, b = seg[None, :, 0], seg[None, :, 1]
        ab = b - a
        denom = np.maximum((ab ** 2).sum(-1), 1e-12)
        s = np.clip(((p - a) * ab).sum(-1) / denom, 0.0, 1.0)
        proj = a + s[..., None] * ab
        return np.sqrt(((p - proj) ** 2).sum(-1)).min(axis=1).reshape(xy.shape[:-1])


@dataclass(frozen=True)
class Task:
    id: int
    area_id: int
    takeoff: tuple[tuple[float, float], ...]
    takeoff_label: str = ""

    @property
    def fleet_size(self) -> int:
        return len(self.takeoff)


@dataclass(frozen=True)
class MobilityTrace:
    positions: np.ndarray  # (horizon, n_users, 2)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 3 or pos.shape[-1] != 2:
            raise ScenarioError(f"trace positions must have shape (horizon, users, 2), got {pos.shape}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def horizon(self) -> int:
        return self.positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.positions.shape[1]

    def at(self, t: int) -> np.ndarray:
        return self.positions[t]

    def __eq__(self, other):
        if not isinstance(other, MobilityTrace):
            return NotImplemented
        return self.positions.shape == other.positions.shape and np.array_equal(self.positions, other.positions)

    __hash__ = None  # type: ignore[assignment]

    def validate(self, area: ServiceArea | None = None, v_max: float | None = None, delta_t: float = 1.0) -> None:
        pos = self.positions
        if not np.isfinite(pos).all():
            raise ScenarioError("trace contains non-finite coordinates")
        if (pos < 0).any():
            raise ScenarioError("trace coordinate out of bounds (negative)")
        if area is not None:
            if not area.contains(pos).all():
                raise ScenarioError(f"trace coordinate outside area {area.id} bounds")
            if pos.size and len(area.edges):
                if (area.distance_to_streets(pos.reshape(-1, 2)) > ON_EDGE_TOL).any():
                    raise ScenarioError("trace position off the street graph")
        if v_max is not None and self.horizon > 1:
            step = np.linalg.norm(np.diff(pos, axis=0), axis=-1)
            if (step > v_max * delta_t + _SPEED_TOL).any():
                raise ScenarioError("trace exceeds the user speed limit")


# ---------------------------------------------------------------------------
# street templates


def grid_streets(length: float, width: float, nx: int, ny: int, margin: float = 0.0):
    """Manhattan grid with ``nx`` vertical and ``ny`` horizontal roads."""
    xs = np.linspace(margin, length - margin, nx)
    ys = np.linspace(margin, width - margin, ny)
    nodes = [(x, y) for y in ys for x in xs]
    edges = []
    for j in range(ny):
        for i in range(nx):
            k = j * nx + i
            if i + 1 < nx:
                edges.append((k, k + 1))
            if j + 1 < ny:
                edges.append((k, k + nx))
    return np.array(nodes), edges


def ring_streets(length: float, width: float, inset: float = 150.0, spokes: bool = True):
    """Rectangular ring road with a central crossing and spokes to the borders."""
    x0, x1, y0, y1 = inset, length - inset, inset, width - inset
    cx, cy = length / 2, width / 2
    nodes = [
        (x0, y0), (cx, y0), (x1, y0), (x1, cy), (x1, y1), (cx, y1), (x0, y1), (x0, cy),  # ring 0..7
        (cx, cy),  # 8 center
    ]
    edges = [(i, (i + 1) % 8) for i in range(8)] + [(1, 8), (3, 8), (5, 8), (7, 8)]
    if spokes:
        nodes += [(cx, 0.0), (length, cy), (cx, width), (0.0, cy)]
        edges += [(1, 9), (3, 10), (5, 11), (7, 12)]
    return np.array(nodes), edges


def radial_streets(length: float, width: float, center: tuple[float, float] | None = None, arms: int = 6):
    """Star of arterial roads meeting at a hub, joined by an outer loop."""
    cx, cy = center if center is not None else (length * 0.6, width * 0.45)
    nodes = [(cx, cy)]
    edges = []
    outer = []
    for k in range(arms):
        ang = 2 * np.pi * k / arms
        # walk out until hitting the border
        dx, dy = np.cos(ang), np.sin(ang)
        ts = []
        for lim, c, d in ((length, cx, dx), (width, cy, dy)):
            if d > 1e-12:
                ts.append((lim - c) / d)
            elif d < -1e-12:
                ts.append(-c / d)
        tmax = min(ts)
        mid = (cx + 0.5 * tmax * dx, cy + 0.5 * tmax * dy)
        end = (cx + tmax * dx, cy + tmax * dy)
        i_mid = len(nodes)
        nodes += [mid, end]
        edges += [(0, i_mid), (i_mid, i_mid + 1)]
        outer.append(i_mid)
    edges += [(outer[k], outer[(k + 1) % arms]) for k in range(arms)]
    nodes = np.clip(np.array(nodes), [0, 0], [length, width])
    return nodes, edges


TEMPLATES = {"grid": grid_streets, "ring": ring_streets, "radial": radial_streets}


def build_area(area_id: int, length: float, width: float, template: str, gue_count: int,
               mbs_position: Sequence[float], params: dict | None = None,
               mbs_height: float = 25.0) -> ServiceArea:
    try:
        make = TEMPLATES[template]
    except KeyError:
        raise ScenarioError(f"unknown street template {template!r}") from None
    nodes, edges = make(length, width, **(params or {}))
    return ServiceArea(area_id, length, width, nodes, tuple(edges), tuple(mbs_position), gue_count, mbs_height)


# ---------------------------------------------------------------------------
# mobility


def _prep_paths(area: ServiceArea):
    dist, pred = shortest_path(area._adjacency(), directed=False, return_predecessors=True)
    return dist, pred


def _route(pred: np.ndarray, src: int, dst: int) -> list[int]:
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[src, path[-1]]))
    return path[::-1]


def generate_trace(area: ServiceArea, seed: int, horizon: int, v_gue_max: float = 14.0,
                   delta_t: float = 10.0, min_speed_frac: float = 0.5, max_dwell: int = 2) -> MobilityTrace:
    """Shortest-path waypoint walks on the street graph.

    Each user gets a constant cruise speed drawn from
    ``[min_speed_frac, 1] * v_gue_max`` and pauses for up to ``max_dwell``
    steps whenever it reaches a waypoint.
    """
    if horizon < 1:
        raise ScenarioError("horizon must be >= 1")
    if len(area.nodes) == 0 or len(area.edges) == 0:
        raise ScenarioError("degenerate scenario: empty street graph")
    rng = np.random.default_rng(seed)
    nodes = area.nodes
    n_nodes = len(nodes)
    _, pred = _prep_paths(area)
    seg = area.segments()
    seg_len = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
    out = np.empty((horizon, area.gue_count, 2))

    for g in range(area.gue_count):
        speed = rng.uniform(min_speed_frac, 1.0) * v_gue_max
        # start at a length-weighted random point on a random edge
        e = rng.choice(len(seg), p=seg_len / seg_len.sum())
        s = rng.random()
        a, b = area.edges[e]
        pos = nodes[a] + s * (nodes[b] - nodes[a])
        route = [b]  # remaining node sequence to walk through
        dwell = 0
        for t in range(horizon):
            out[t, g] = pos
            if dwell > 0:
                dwell -= 1
                continue
            budget = speed * delta_t
            while budget > 0:
                if not route:
                    here = _nearest_node(nodes, pos)
                    dst = here
                    if n_nodes > 1:
                        while dst == here:
                            dst = int(rng.integers(n_nodes))
                    route = _route(pred, here, dst)[1:]
                    if not route:
                        break
                target = nodes[route[0]]
                gap = float(np.linalg.norm(target - pos))
                if gap <= budget:
                    pos = target.copy()
                    budget -= gap
                    route.pop(0)
                    if not route:
                        dwell = int(rng.integers(0, max_dwell + 1))
                        break
                else:
                    pos = pos + (target - pos) * (budget / gap)
                    budget = 0.0
    return MobilityTrace(out)


def _nearest_node(nodes: np.ndarray, pos: np.ndarray) -> int:
    return int(np.argmin(((nodes - pos) ** 2).sum(1)))


# ---------------------------------------------------------------------------
# trace files: rows of "t,gue_id,x,y"


TRACE_HEADER = ("t", "gue_id", "x", "y")


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), unique=True, min_digits=2, trim="k")


def save_trace(trace: MobilityTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for t in range(trace.horizon):
            for g in range(trace.n_users):
                x, y = trace.positions[t, g]
                fh.write(f"{t},{g},{_fmt(x)},{_fmt(y)}\n")


def load_trace(path: str | Path, area: ServiceArea | None = None) -> MobilityTrace:
    rows: dict[tuple[int, int], tuple[float, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and tuple(c.strip() for c in row) == TRACE_HEADER:
                continue
            if len(row) != 4:
                raise ScenarioError(f"row {lineno}: expected 4 fields, got {len(row)}")
            try:
                t, g = int(row[0]), int(row[1])
                x, y = float(row[2]), float(row[3])
            except ValueError as exc:
                raise ScenarioError(f"row {lineno}: {exc}") from None
            if t < 0 or g < 0:
                raise ScenarioError(f"row {lineno}: negative index")
            if (t, g) in rows:
                raise ScenarioError(f"row {lineno}: duplicate entry for t={t}, gue={g}")
            if not (np.isfinite(x) and np.isfinite(y)) or x < 0 or y < 0 or (
                area is not None and not area.contains(np.array([x, y]))
            ):
                raise ScenarioError(f"row {lineno}: coordinate ({x}, {y}) out of bounds")
            rows[(t, g)] = (x, y)
    if not rows:
        raise ScenarioError("empty trace file")
    horizon = max(t for t, _ in rows) + 1
    n_users = max(g for _, g in rows) + 1
    if len(rows) != horizon * n_users:
        raise ScenarioError(f"trace is not dense: {len(rows)} rows for {horizon}x{n_users} grid")
    pos = np.empty((horizon, n_users, 2))
    for (t, g), xy in rows.items():
        pos[t, g] = xy
    trace = MobilityTrace(pos)
    trace.validate(area)
    return trace


# ---------------------------------------------------------------------------
# tasks


def takeoff_site(name: str, length: float, width: float) -> tuple[float, float]:
    """Named takeoff sites xi1..xi8 relative to the area corners and center."""
    sites = {
        "xi1": (0.0, 0.0),
        "xi2": (length, 0.0),
        "xi3": (0.0, width),
        "xi4": (length, width),
        "xi5": (length / 2, width / 2),
        "xi6": (length / 4, 3 * width / 4),
        "xi7": (3 * length / 4, width / 4),
        "xi8": (3 * length / 4, 3 * width / 4),
    }
    try:
        return sites[name]
    except KeyError:
        raise ScenarioError(f"unknown takeoff site {name!r}") from None


def resolve_takeoff(spec: Iterable, area: ServiceArea) -> tuple[tuple[float, float], ...]:
    out = []
    for item in spec:
        if isinstance(item, str):
            out.append(takeoff_site(item, area.length, area.width))
        else:
            x, y = item
            out.append((float(x), float(y)))
    return tuple(out)


def enumerate_tasks(areas: Sequence[ServiceArea], takeoff_sets: Sequence[Sequence], fleet_size: int | None = None) -> list[Task]:
    """Cartesian product of areas and takeoff sets, area-major."""
    tasks = []
    for area, tset in itertools.product(areas, takeoff_sets):
        takeoff = resolve_takeoff(tset, area)
        label = "[" + ",".join(x if isinstance(x, str) else f"({x[0]},{x[1]})" for x in tset) + "]"
        tid = len(tasks)
        if fleet_size is not None and len(takeoff) != fleet_size:
            raise ScenarioError(f"task {tid} (area {area.id}, {label}): expected {fleet_size} takeoff positions")
        if not area.contains(np.array(takeoff).reshape(-1, 2)).all():
            raise ScenarioError(f"task {tid} (area {area.id}, {label}): takeoff outside area bounds")
        tasks.append(Task(tid, area.id, takeoff, label))
    return tasks
