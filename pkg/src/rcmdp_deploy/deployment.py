"""Deployment maps and their compilation into single-robot robust CMDPs."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

from .model import Action, CmdpModel, ModelError, validate_model
from .robust import UncertaintySet

MAP_FORMAT = "deploy-map/1"
DEFAULT_EPS_RATIO = 0.5
DEFAULT_LOOP_TIME = 1.0


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class SafetyFunction:
    """Logistic curve shifted and rescaled so that S(0) = 0 and S(inf) = 1.

    ``midpoint`` and ``steepness`` default to (t_min + t_max) / 2 and
    (t_max - t_min) / 8.
    """

    t_min: float
    t_max: float
    midpoint: float | None = None
    steepness: float | None = None

    @property
    def m(self) -> float:
        return 0.5 * (self.t_min + self.t_max) if self.midpoint is None else self.midpoint

    @property
    def s(self) -> float:
        return (self.t_max - self.t_min) / 8.0 if self.steepness is None else self.steepness

    def __call__(self, t: float) -> float:
        return eval_safety(self, t)


def eval_safety(f: SafetyFunction, t: float) -> float:
    if t < 0:
        raise ValueError(f"traversal time must be nonnegative, got {t}")
    m, s = f.m, f.s
    floor = _logistic(-m / s)
    if t == 0:
        return 0.0
    val = (_logistic((t - m) / s) - floor) / (1.0 - floor)
    return min(max(val, 0.0), 1.0)


@dataclass(frozen=True)
class Edge:
    u: Hashable
    v: Hashable
    t_min: float
    t_max: float
    m: float | None = None
    s: float | None = None
    eps_ratio: float = DEFAULT_EPS_RATIO

    @property
    def safety(self) -> SafetyFunction:
        return SafetyFunction(self.t_min, self.t_max, self.m, self.s)

    @property
    def is_loop(self) -> bool:
        return self.u == self.v


@dataclass(frozen=True)
class DeploymentMap:
    vertices: tuple
    edges: tuple[Edge, ...]
    start: Hashable
    targets: tuple
    delta: float
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ModelError("invalid deployment map: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            out.append("duplicate vertex ids")
        if self.delta <= 0:
            out.append("delta must be positive")
        if self.start not in vs:
            out.append(f"start {self.start!r} is not a vertex")
        if self.start in self.targets:
            out.append("start vertex may not be a target")
        for t in self.targets:
            if t not in vs:
                out.append(f"target {t!r} is not a vertex")
        for e in self.edges:
            if e.u not in vs or e.v not in vs:
                out.append(f"edge ({e.u!r}, {e.v!r}) has an unknown endpoint")
            if e.t_min < 0 or not e.t_max > e.t_min:
                out.append(f"edge ({e.u!r}, {e.v!r}) needs 0 <= t_min < t_max")
            if e.is_loop and e.u not in self.targets:
                out.append(f"self-loop on non-target vertex {e.u!r}")
            if e.eps_ratio < 0:
                out.append(f"edge ({e.u!r}, {e.v!r}) has a negative eps_ratio")
        if out:
            return out
        adj = self.adjacency()
        for v in self.vertices:
            if not adj[v]:
                out.append(f"vertex {v!r} has no incident edges")
        reach = self.reachable_from(self.start)
        for t in self.targets:
            if t not in reach:
                out.append(f"target {t!r} is unreachable from the start vertex")
        return out

    def adjacency(self) -> dict[Hashable, list[tuple[Hashable, Edge]]]:
        index = {v: i for i, v in enumerate(self.vertices)}
        adj: dict[Hashable, list[tuple[Hashable, Edge]]] = {v: [] for v in self.vertices}
        for e in self.edges:
            if e.is_loop:
                continue
            adj[e.u].append((e.v, e))
            adj[e.v].append((e.u, e))
        for v in adj:
            adj[v].sort(key=lambda ne: index[ne[0]])
        return adj

    def reachable_from(self, v: Hashable) -> set:
        adj = self.adjacency()
        seen = {v}
        q = deque([v])
        while q:
            y = q.popleft()
            for x, _ in adj[y]:
                if x not in seen:
                    seen.add(x)
                    q.append(x)
        return seen

    def loop_time(self, target: Hashable) -> float:
        for e in self.edges:
            if e.is_loop and e.u == target:
                return e.t_max
        return DEFAULT_LOOP_TIME

    def with_targets(self, targets: Sequence) -> "DeploymentMap":
        return replace(self, targets=tuple(targets))


def speed_levels(e: Edge, delta: float) -> list[float]:
    n = int(math.floor((e.t_max - e.t_min) / delta + 1e-9))
    return [e.t_min + k * delta for k in range(n + 1)]


@dataclass(frozen=True)
class SingleRobotProblem:
    model: CmdpModel
    uncertainty_bounds: np.ndarray
    sink_pair: tuple[int, int]
    target: Hashable
    vertex_index: dict

    def uncertainty(self, gamma: float | None = None, factor: float | None = None) -> UncertaintySet:
        if factor is not None:
            return UncertaintySet.from_factor(self.uncertainty_bounds, factor)
        return UncertaintySet(self.uncertainty_bounds, 0.0 if gamma is None else gamma)


def build_single_robot_rcmdp(dmap: DeploymentMap, target: Hashable) -> SingleRobotProblem:
    """Compile ``dmap`` into the single-robot model whose absorbing set is ``{target}``.

    States are the map vertices in file order followed by the failure sink.
    Every edge traversal from a non-absorbing vertex offers the speeds
    t_min + k * delta; success follows the edge's safety curve, failure goes to
    the sink, whose only action moves to the target at unit objective cost.
    """
    if target not in dmap.targets:
        raise ModelError(f"{target!r} is not a target of the map")
    if target not in dmap.reachable_from(dmap.start):
        raise ModelError(f"target {target!r} is unreachable")
    index = {v: i for i, v in enumerate(dmap.vertices)}
    sink = len(dmap.vertices)
    tgt = index[target]
    adj = dmap.adjacency()
    actions: list[tuple[Action, ...]] = []
    eps_ratio: list[float] = []
    for v in dmap.vertices:
        y = index[v]
        if y == tgt:
            actions.append(
                (Action(0.0, (0.0,), ((tgt, 1.0),), label="stay", time=dmap.loop_time(v)),)
            )
            continue
        acts = []
        for nb, e in adj[v]:
            x = index[nb]
            S = e.safety
            for t in speed_levels(e, dmap.delta):
                ps = eval_safety(S, t)
                trans = tuple(
                    (z, p) for z, p in ((x, ps), (sink, 1.0 - ps)) if p > 0
                )
                acts.append(
                    Action(0.0, (t,), trans, label=f"{nb}@{t:g}", time=t)
                )
                eps_ratio.append(e.eps_ratio)
        actions.append(tuple(acts))
    actions.append((Action(1.0, (0.0,), ((tgt, 1.0),), label="fail"),))
    eps_ratio.append(0.0)
    beta = [0.0] * (sink + 1)
    beta[index[dmap.start]] = 1.0
    names = tuple(str(v) for v in dmap.vertices) + ("SINK",)
    model = CmdpModel(tuple(actions), frozenset({tgt}), tuple(beta), (), names)
    report = validate_model(model)
    if not report.ok:
        raise ModelError(f"compiled model for target {target!r} is invalid:\n{report}")
    d = model.dcost_vector(0)
    eps_bar = np.asarray(eps_ratio) * d
    sink_pair = (sink, 0)
    return SingleRobotProblem(model, eps_bar, sink_pair, target, index)


# multi-robot success ------------------------------------------------------


def success_probability(pf: Sequence[float], counts: Sequence[int]) -> float:
    """Probability that every target is reached when ``counts[j]`` robots head to target j."""
    pf = np.asarray(pf, dtype=float)
    counts = np.asarray(counts)
    if pf.shape != counts.shape:
        raise ValueError("pf and counts must have the same length")
    if np.any((pf < 0) | (pf > 1)):
        raise ValueError("failure probabilities must lie in [0, 1]")
    if np.any(counts < 0):
        raise ValueError("robot counts must be nonnegative")
    out = 1.0
    for p, c in zip(pf, counts):
        out *= 1.0 - p ** int(c)
    return out


def assignment_counts(alpha: Sequence, targets: Sequence) -> list[int]:
    """Count form of a per-robot assignment."""
    pos = {t: j for j, t in enumerate(targets)}
    counts = [0] * len(targets)
    for a in alpha:
        counts[pos[a]] += 1
    return counts


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def expected_uniform_success(pf: Sequence[float], K: int) -> float:
    """E[phi] when each of K robots picks a target uniformly and independently."""
    pf = list(pf)
    T = len(pf)
    total = 0.0
    log_norm = math.lgamma(K + 1) - K * math.log(T)
    for c in _compositions(K, T):
        if min(c) == 0:
            continue
        w = math.exp(log_norm - sum(math.lgamma(ci + 1) for ci in c))
        total += w * success_probability(pf, c)
    return total


# map files ------------------------------------------------------------------


def map_to_dict(dmap: DeploymentMap) -> dict[str, Any]:
    edges = []
    for e in dmap.edges:
        rec: dict[str, Any] = {"u": e.u, "v": e.v, "t_min": e.t_min, "t_max": e.t_max}
        if e.m is not None:
            rec["m"] = e.m
        if e.s is not None:
            rec["s"] = e.s
        if e.eps_ratio != DEFAULT_EPS_RATIO:
            rec["eps_ratio"] = e.eps_ratio
        edges.append(rec)
    out: dict[str, Any] = {
        "format": MAP_FORMAT,
        "vertices": list(dmap.vertices),
        "edges": edges,
        "start": dmap.start,
        "targets": list(dmap.targets),
        "delta": dmap.delta,
    }
    if dmap.seed is not None:
        out["seed"] = dmap.seed
    if dmap.meta:
        out["meta"] = dmap.meta
    return out


def map_from_dict(data: dict[str, Any]) -> DeploymentMap:
    if data.get("format", MAP_FORMAT) != MAP_FORMAT:
        raise ModelError(f"unsupported map format {data.get('format')!r}")
    edges = tuple(
        Edge(
            e["u"], e["v"], float(e["t_min"]), float(e["t_max"]),
            None if e.get("m") is None else float(e["m"]),
            None if e.get("s") is None else float(e["s"]),
            float(e.get("eps_ratio", DEFAULT_EPS_RATIO)),
        )
        for e in data["edges"]
    )
    return DeploymentMap(
        vertices=tuple(data["vertices"]),
        edges=edges,
        start=data["start"],
        targets=tuple(data["targets"]),
        delta=float(data["delta"]),
        seed=data.get("seed"),
        meta=dict(data.get("meta", {})),
    )


def dumps_map(dmap: DeploymentMap) -> str:
    return json.dumps(map_to_dict(dmap), indent=1)


def load_map(path) -> DeploymentMap:
    with open(path) as fh:
        return map_from_dict(json.load(fh))


# random maps ----------------------------------------------------------------


def generate_map(
    n_vertices: int = 18,
    n_targets: int = 3,
    seed: int = 0,
    t_min_range: tuple[float, float] = (5.0, 20.0),
    gap_range: tuple[float, float] = (15.0, 40.0),
    levels: int = 8,
    extra_edge_radius: float | None = None,
) -> DeploymentMap:
    """Random connected map in the unit square.

    Edges are a Euclidean minimum spanning tree plus every pair closer than
    ``extra_edge_radius`` (default 1.4 / sqrt(n_vertices), which keeps the
    mean degree roughly constant as maps grow).  Per edge, t_min is uniform on ``t_min_range`` and
    t_max = t_min + a gap uniform on ``gap_range``; delta is chosen so an
    edge with the median gap gets ``levels`` speeds.  Vertex 0 is the start
    and the targets are drawn among the vertices farthest from it.
    """
    if n_vertices < n_targets + 1:
        raise ValueError("need more vertices than targets")
    if extra_edge_radius is None:
        extra_edge_radius = 1.4 / math.sqrt(n_vertices)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n_vertices, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    # Prim's MST
    in_tree = np.zeros(n_vertices, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(n_vertices, dtype=int)
    pairs = set()
    for _ in range(n_vertices - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        p = int(parent[j])
        pairs.add((min(j, p), max(j, p)))
        in_tree[j] = True
        closer = dist[j] < best
        parent[closer] = j
        best = np.minimum(best, dist[j])
    for i in range(n_vertices):
        for j in range(i + 1, n_vertices):
            if dist[i, j] < extra_edge_radius:
                pairs.add((i, j))
    pairs = sorted(pairs)
    t_min = rng.uniform(*t_min_range, size=len(pairs))
    gap = rng.uniform(*gap_range, size=len(pairs))
    delta = round(float(np.median(gap)) / (levels - 1), 3)
    order = np.argsort(-dist[0], kind="stable")
    far = [int(v) for v in order[: max(n_targets, n_vertices // 2)] if v != 0]
    targets = sorted(int(v) for v in rng.choice(far, size=n_targets, replace=False))
    edges = [
        Edge(i, j, round(float(a), 3), round(float(a + g), 3))
        for (i, j), a, g in zip(pairs, t_min, gap)
    ]
    edges += [Edge(t, t, 0.0, DEFAULT_LOOP_TIME) for t in targets]
    return DeploymentMap(
        vertices=tuple(range(n_vertices)),
        edges=tuple(edges),
        start=0,
        targets=tuple(targets),
        delta=delta,
        seed=seed,
        meta={
            "generator": "mst+radius",
            "n_vertices": n_vertices,
            "n_targets": n_targets,
            "t_min_range": list(t_min_range),
            "gap_range": list(gap_range),
            "levels": levels,
            "extra_edge_radius": extra_edge_radius,
            "positions": [[round(float(a), 4), round(float(b), 4)] for a, b in pts],
        },
    )


REFERENCE_MAP_ARGS = {"n_vertices": 16, "n_targets": 3, "seed": 2016}


def reference_map() -> DeploymentMap:
    """The fixed map used by the acceptance suite and the CLI defaults."""
    return generate_map(**REFERENCE_MAP_ARGS)
