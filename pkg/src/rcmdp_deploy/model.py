"""Finite transient total-cost CMDPs: data model, validation and policies.

States and actions are dense integer indices.  Quantities defined on the
non-absorbing state/action pairs (occupation measures, uncertainty bounds,
dual auxiliaries) are plain numpy vectors aligned with ``CmdpModel.pairs``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12

FORMAT_TAG = "cmdp/1"


@dataclass(frozen=True)
class Action:
    cost: float
    dcosts: tuple[float, ...]
    transitions: tuple[tuple[int, float], ...]
    label: str = ""
    # intended traversal time for deployment models; informational only
    time: float | None = None


@dataclass(frozen=True)
class CmdpModel:
    """A CMDP with ``len(actions)`` states.

    ``actions[x]`` lists the actions available in state ``x``; ``absorbing``
    is the set M; ``thresholds`` holds one bound D_i per constraint cost.
    """

    actions: tuple[tuple[Action, ...], ...]
    absorbing: frozenset[int]
    beta: tuple[float, ...]
    thresholds: tuple[float, ...] = ()
    state_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.state_names:
            object.__setattr__(
                self, "state_names", tuple(str(x) for x in range(len(self.actions)))
            )

    @property
    def n_states(self) -> int:
        return len(self.actions)

    @property
    def n_constraints(self) -> int:
        if self.thresholds:
            return len(self.thresholds)
        for acts in self.actions:
            for a in acts:
                return len(a.dcosts)
        return 0

    @cached_property
    def transient_states(self) -> tuple[int, ...]:
        return tuple(x for x in range(self.n_states) if x not in self.absorbing)

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        """The pairs (x, a) with x outside M, in (state, action) order."""
        return tuple(
            (x, a) for x in self.transient_states for a in range(len(self.actions[x]))
        )

    @cached_property
    def pair_index(self) -> dict[tuple[int, int], int]:
        return {p: i for i, p in enumerate(self.pairs)}

    @cached_property
    def state_slices(self) -> dict[int, slice]:
        """Slice of the pair vector holding the actions of each transient state."""
        out: dict[int, slice] = {}
        i = 0
        for x in self.transient_states:
            k = len(self.actions[x])
            out[x] = slice(i, i + k)
            i += k
        return out

    def pair_action(self, i: int) -> Action:
        x, a = self.pairs[i]
        return self.actions[x][a]

    def cost_vector(self) -> np.ndarray:
        return np.array([self.pair_action(i).cost for i in range(len(self.pairs))])

    def dcost_vector(self, i: int = 0) -> np.ndarray:
        return np.array([self.pair_action(k).dcosts[i] for k in range(len(self.pairs))])

    def flow_matrix(self) -> np.ndarray:
        """Rows indexed by transient states, columns by pairs: delta_x(y) - P^a_{yx}."""
        row = {x: r for r, x in enumerate(self.transient_states)}
        F = np.zeros((len(self.transient_states), len(self.pairs)))
        for j, (y, a) in enumerate(self.pairs):
            F[row[y], j] += 1.0
            for x, p in self.actions[y][a].transitions:
                if x in row:
                    F[row[x], j] -= p
        return F

    def beta_transient(self) -> np.ndarray:
        return np.array([self.beta[x] for x in self.transient_states])

    def with_thresholds(self, thresholds: Sequence[float]) -> "CmdpModel":
        return CmdpModel(
            self.actions, self.absorbing, self.beta, tuple(thresholds), self.state_names
        )


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "model is valid"
        return "\n".join(f"- {p}" for p in self.problems)


class ModelError(ValueError):
    """Raised when a model or a quantity defined on it is malformed."""


def _rows_ok(model: CmdpModel, problems: list[str]) -> bool:
    n = model.n_states
    ok = True
    for x, acts in enumerate(model.actions):
        for a, act in enumerate(acts):
            total = 0.0
            for y, p in act.transitions:
                if not (0 <= y < n):
                    problems.append(f"state {x} action {a}: successor {y} out of range")
                    ok = False
                if not (0.0 <= p <= 1.0) or not np.isfinite(p):
                    problems.append(f"state {x} action {a}: probability {p!r} outside [0, 1]")
                    ok = False
                total += p
            if abs(total - 1.0) > PROB_TOL:
                problems.append(f"state {x} action {a}: transition row sums to {total!r}")
                ok = False
    return ok


def validate_model(model: CmdpModel) -> ValidationReport:
    """Check every structural invariant; an empty report means the model is usable."""
    problems: list[str] = []
    n = model.n_states
    if n == 0:
        return ValidationReport(["model has no states"])
    for y in model.absorbing:
        if not (0 <= y < n):
            problems.append(f"absorbing state {y} out of range")
    if len(model.beta) != n:
        problems.append(f"beta has length {len(model.beta)}, expected {n}")
    else:
        if any(b < 0 or not np.isfinite(b) for b in model.beta):
            problems.append("beta has negative or non-finite entries")
        if abs(sum(model.beta) - 1.0) > PROB_TOL:
            problems.append(f"beta sums to {sum(model.beta)!r}")
        for y in model.absorbing:
            if 0 <= y < n and model.beta[y] != 0:
                problems.append(f"beta({y}) = {model.beta[y]!r} on absorbing state")
    L = model.n_constraints
    if any(t < 0 for t in model.thresholds):
        problems.append("negative constraint threshold")
    for x, acts in enumerate(model.actions):
        if x not in model.absorbing and not acts:
            problems.append(f"transient state {x} has no actions")
        for a, act in enumerate(acts):
            if act.cost < 0 or any(d < 0 for d in act.dcosts):
                problems.append(f"state {x} action {a}: negative cost")
            if len(act.dcosts) != L:
                problems.append(
                    f"state {x} action {a}: {len(act.dcosts)} constraint costs, expected {L}"
                )
            if x in model.absorbing and (act.cost != 0 or any(d != 0 for d in act.dcosts)):
                problems.append(f"absorbing state {x} action {a}: nonzero cost")
    rows_ok = _rows_ok(model, problems)
    if rows_ok:
        for y in model.absorbing:
            for a, act in enumerate(model.actions[y]):
                leak = sum(p for x, p in act.transitions if x not in model.absorbing and p > 0)
                if leak > 0:
                    problems.append(f"absorbing state {y} action {a} leaves the absorbing set")
        if not problems:
            ecs = end_components(model)
            for ec in ecs:
                problems.append(
                    "transience violated: end component outside the absorbing set "
                    f"on states {sorted(ec)}"
                )
    return ValidationReport(problems)


def _sccs(nodes: Iterable[int], succ: dict[int, list[int]]) -> list[list[int]]:
    """Tarjan's algorithm, iterative, restricted to ``nodes``."""
    nodes = list(nodes)
    allowed = set(nodes)
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, i = work.pop()
            if i == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            nbrs = succ.get(v, [])
            while i < len(nbrs):
                w = nbrs[i]
                i += 1
                if w not in allowed:
                    continue
                if w not in index:
                    work.append((v, i))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
    return out


def end_components(model: CmdpModel) -> list[frozenset[int]]:
    """Maximal end components lying entirely outside the absorbing set.

    Standard refinement: repeatedly split the candidate states into SCCs of
    the graph induced by the actions whose support stays inside the
    candidate's component, dropping actions that can leave it and states
    left without actions.
    """
    live = {
        x: {a for a, act in enumerate(model.actions[x])}
        for x in model.transient_states
    }

    def support(x: int, a: int) -> list[int]:
        return [y for y, p in model.actions[x][a].transitions if p > 0]

    candidates = [set(model.transient_states)]
    result: list[frozenset[int]] = []
    while candidates:
        cand = candidates.pop()
        changed = True
        while changed:
            changed = False
            for x in list(cand):
                keep = {a for a in live[x] if all(y in cand for y in support(x, a))}
                if keep != live[x]:
                    live[x] = keep
                if not keep:
                    cand.discard(x)
                    changed = True
        if not cand:
            continue
        succ = {
            x: sorted({y for a in live[x] for y in support(x, a)}) for x in cand
        }
        comps = _sccs(sorted(cand), succ)
        if len(comps) == 1 and set(comps[0]) == cand:
            # every remaining action stays inside cand and cand is strongly connected
            result.append(frozenset(cand))
        else:
            candidates.extend(set(c) for c in comps)
    return sorted(result, key=min)


def check_transience(model: CmdpModel) -> bool:
    """True iff every policy reaches M with probability one from every state in X'."""
    return not end_components(model)


@dataclass(frozen=True)
class RandomizedPolicy:
    """Per-state action distributions; absorbing states carry an empty array."""

    probs: tuple[np.ndarray, ...]

    def __getitem__(self, x: int) -> np.ndarray:
        return self.probs[x]

    def randomized_states(self, tol: float = 1e-9, support: Iterable[int] | None = None) -> list[int]:
        """States whose distribution puts mass above ``tol`` on two or more actions.

        ``support`` restricts the count, e.g. to states with positive occupation
        (zero-occupation states carry the uniform convention).
        """
        states = range(len(self.probs)) if support is None else sorted(support)
        return [x for x in states if np.count_nonzero(self.probs[x] > tol) > 1]

    def to_json(self) -> list[list[float]]:
        return [[float(v) for v in p] for p in self.probs]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[float]]) -> "RandomizedPolicy":
        return cls(tuple(np.asarray(p, dtype=float) for p in data))


def occupation_to_policy(model: CmdpModel, rho: np.ndarray) -> RandomizedPolicy:
    """Normalize occupation measures state by state.

    States whose total occupation is zero get the uniform distribution.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(model.pairs),):
        raise ModelError(f"rho has shape {rho.shape}, expected ({len(model.pairs)},)")
    if np.any(rho < 0):
        raise ModelError("occupation measure has negative entries")
    probs: list[np.ndarray] = []
    slices = model.state_slices
    for x in range(model.n_states):
        if x in model.absorbing:
            probs.append(np.zeros(0))
            continue
        r = rho[slices[x]]
        total = r.sum()
        if total > 0:
            p = r / total
        else:
            p = np.full(len(r), 1.0 / len(r))
        probs.append(p)
    return RandomizedPolicy(tuple(probs))


def policy_occupation(model: CmdpModel, policy: RandomizedPolicy) -> np.ndarray:
    """Occupation measure induced by a stationary policy (linear solve on X')."""
    trans = model.transient_states
    row = {x: r for r, x in enumerate(trans)}
    Q = np.zeros((len(trans), len(trans)))
    for x in trans:
        for a, act in enumerate(model.actions[x]):
            w = policy[x][a]
            if w == 0:
                continue
            for y, p in act.transitions:
                if y in row:
                    Q[row[x], row[y]] += w * p
    visits = np.linalg.solve(np.eye(len(trans)) - Q.T, model.beta_transient())
    out = np.zeros(len(model.pairs))
    for x in trans:
        out[model.state_slices[x]] = visits[row[x]] * policy[x]
    return out


# serialization -----------------------------------------------------------


def model_to_dict(model: CmdpModel) -> dict[str, Any]:
    states = []
    for x, acts in enumerate(model.actions):
        acts_out = []
        for act in acts:
            rec: dict[str, Any] = {
                "cost": act.cost,
                "dcosts": list(act.dcosts),
                "transitions": [[y, p] for y, p in act.transitions],
            }
            if act.label:
                rec["label"] = act.label
            if act.time is not None:
                rec["time"] = act.time
            acts_out.append(rec)
        states.append({"name": model.state_names[x], "actions": acts_out})
    return {
        "format": FORMAT_TAG,
        "states": states,
        "absorbing": sorted(model.absorbing),
        "beta": list(model.beta),
        "thresholds": list(model.thresholds),
    }


def model_from_dict(data: dict[str, Any]) -> CmdpModel:
    if data.get("format", FORMAT_TAG) != FORMAT_TAG:
        raise ModelError(f"unsupported model format {data.get('format')!r}")
    actions = []
    names = []
    for s in data["states"]:
        names.append(str(s.get("name", len(names))))
        actions.append(
            tuple(
                Action(
                    cost=float(a["cost"]),
                    dcosts=tuple(float(d) for d in a["dcosts"]),
                    transitions=tuple((int(y), float(p)) for y, p in a["transitions"]),
                    label=a.get("label", ""),
                    time=None if a.get("time") is None else float(a["time"]),
                )
                for a in s["actions"]
            )
        )
    return CmdpModel(
        actions=tuple(actions),
        absorbing=frozenset(int(y) for y in data["absorbing"]),
        beta=tuple(float(b) for b in data["beta"]),
        thresholds=tuple(float(t) for t in data.get("thresholds", ())),
        state_names=tuple(names),
    )


def dumps_model(model: CmdpModel) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def loads_model(text: str) -> CmdpModel:
    return model_from_dict(json.loads(text))
