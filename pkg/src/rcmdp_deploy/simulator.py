"""Seeded Monte Carlo rollouts of randomized policies on deployment models.

Rollouts are vectorized over trials.  Each random decision of robot ``r`` at
step ``t`` reads its own stream (see :mod:`rcmdp_deploy.streams`), so a trial's
outcome is fixed by ``(seed, trial, robot)`` alone.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterator, Mapping, Sequence

import numpy as np

from . import streams
from .model import CmdpModel, ModelError, RandomizedPolicy, check_transience
from .robust import UncertaintySet

EPS_MODES = ("nominal", "worst_case", "sampled")
KL_CLAMP = 1e-12
MAX_STEPS = 100_000
EPS_CHUNK = 256
EPS_REJECTION_ATTEMPTS = 32
EPS_GIBBS_SWEEPS = 16


def kl_divergence(p_emp: float, p_theory: float) -> float:
    """Divergence of Bernoulli(p_emp) from Bernoulli(p_theory), arguments clamped away from 0 and 1."""
    p = min(max(p_emp, KL_CLAMP), 1 - KL_CLAMP)
    q = min(max(p_theory, KL_CLAMP), 1 - KL_CLAMP)
    return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))


@dataclass
class TrialResult:
    trial: int
    success: bool
    duration: float
    path: list[tuple[int, int]]


@dataclass
class SimStats:
    n_trials: int
    n_success: int
    empirical_success_prob: float
    mean_duration: float
    std_duration: float
    mean_duration_given_success: float | None
    std_duration_given_success: float | None
    theoretical_success_prob: float | None = None
    convergence_error: float | None = None
    kl_divergence: float | None = None
    eps_mode: str = "nominal"
    seed: int = 0

    @property
    def success_stderr(self) -> float:
        p = self.empirical_success_prob
        return math.sqrt(p * (1 - p) / self.n_trials)

    @property
    def duration_stderr(self) -> float:
        return self.std_duration / math.sqrt(self.n_trials)

    @property
    def duration_given_success_stderr(self) -> float | None:
        if not self.n_success or self.std_duration_given_success is None:
            return None
        return self.std_duration_given_success / math.sqrt(self.n_success)

    def ci95(self) -> tuple[float, float]:
        """Wilson score interval for the success probability."""
        n, p, z = self.n_trials, self.empirical_success_prob, 1.959963984540054
        den = 1 + z * z / n
        mid = (p + z * z / (2 * n)) / den
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
        return max(0.0, mid - half), min(1.0, mid + half)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_std(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = math.fsum(x.tolist()) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum(((x - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var)


def summarize(
    success: np.ndarray,
    duration: np.ndarray,
    theoretical_success: float | None = None,
    eps_mode: str = "nominal",
    seed: int = 0,
) -> SimStats:
    n = int(success.size)
    if n == 0:
        raise ValueError("no trials to summarize")
    ns = int(success.sum())
    p = ns / n
    mean, std = _mean_std(duration)
    if ns:
        ms, ss = _mean_std(duration[success])
    else:
        ms = ss = None
    conv = kl = None
    if theoretical_success is not None:
        pf_theory = 1.0 - theoretical_success
        if pf_theory > 0:
            conv = abs((1.0 - p) - pf_theory) / pf_theory
        kl = kl_divergence(p, theoretical_success)
    return SimStats(n, ns, p, mean, std, ms, ss, theoretical_success, conv, kl, eps_mode, seed)


class CompiledPolicy:
    """Dense lookup tables for fast vectorized rollouts of one model/policy pair."""

    def __init__(self, model: CmdpModel, policy: RandomizedPolicy, sink_pair: tuple[int, int] | None):
        if not check_transience(model):
            raise ModelError("model is not transient; rollouts would not terminate")
        n = model.n_states
        na = max(len(a) for a in model.actions)
        ns = max(len(act.transitions) for acts in model.actions for act in acts)
        self.model = model
        self.sink_state = None if sink_pair is None else sink_pair[0]
        self.absorbing = np.zeros(n + 1, dtype=bool)
        self.absorbing[list(model.absorbing)] = True
        if self.sink_state is not None:
            self.absorbing[self.sink_state] = True
        self.n_actions = np.array([len(a) for a in model.actions])
        self.act_cum = np.ones((n, na))
        self.d = np.zeros((n, na))
        self.pidx = np.full((n, na), -1, dtype=np.int64)
        self.succ = np.zeros((n, na, ns), dtype=np.int64)
        self.succ_cum = np.ones((n, na, ns))
        self.n_succ = np.ones((n, na), dtype=np.int64)
        for x in range(n):
            acts = model.actions[x]
            if x in model.absorbing:
                continue
            p = np.asarray(policy[x], dtype=float)
            if p.shape != (len(acts),) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
                raise ModelError(f"policy at state {x} is not a distribution over its actions")
            self.act_cum[x, : len(acts)] = np.cumsum(p)
            for a, act in enumerate(acts):
                self.d[x, a] = act.dcosts[0] if act.dcosts else 0.0
                self.pidx[x, a] = model.pair_index[(x, a)]
                ys = [y for y, _ in act.transitions]
                ps = np.cumsum([q for _, q in act.transitions])
                self.succ[x, a, : len(ys)] = ys
                self.succ_cum[x, a, : len(ys)] = ps
                self.n_succ[x, a] = len(ys)
        self.beta_cum = np.cumsum(model.beta)

    def rollout(
        self,
        seed: int,
        robot: int,
        trials: np.ndarray,
        eps: np.ndarray | None = None,
        record: bool = False,
    ) -> tuple[np.ndarray, np.ndarray, list[np.ndarray] | None]:
        """Roll out ``trials``; ``eps`` is per pair (shared) or per trial x pair."""
        trials = np.asarray(trials, dtype=np.int64)
        m = trials.size
        u0 = streams.at(seed, (robot, 0, streams.SLOT_INIT), trials)
        state = np.minimum(np.searchsorted(self.beta_cum, u0, side="right"), self.model.n_states - 1)
        duration = np.zeros(m)
        failed = np.zeros(m, dtype=bool)
        steps: list[np.ndarray] | None = [] if record else None
        active = ~self.absorbing[state]
        rows = np.arange(m)
        step = 0
        while active.any():
            if step >= MAX_STEPS:
                raise RuntimeError("rollout exceeded the step limit")
            idx = np.flatnonzero(active)
            s = state[idx]
            ua = streams.at(seed, (robot, step, streams.SLOT_ACTION), trials[idx])
            a = (ua[:, None] >= self.act_cum[s]).sum(axis=1)
            a = np.minimum(a, self.n_actions[s] - 1)
            cost = self.d[s, a]
            if eps is not None:
                pi = self.pidx[s, a]
                cost = cost + (eps[pi] if eps.ndim == 1 else eps[rows[idx], pi])
            duration[idx] += cost
            ut = streams.at(seed, (robot, step, streams.SLOT_TRANSITION), trials[idx])
            k = (ut[:, None] >= self.succ_cum[s, a]).sum(axis=1)
            k = np.minimum(k, self.n_succ[s, a] - 1)
            nxt = self.succ[s, a, k]
            if record:
                rec = np.full((m, 2), -1, dtype=np.int64)
                rec[idx, 0] = s
                rec[idx, 1] = a
                steps.append(rec)
            state[idx] = nxt
            if self.sink_state is not None:
                failed[idx] |= nxt == self.sink_state
            active[idx] = ~self.absorbing[nxt]
            step += 1
        return ~failed, duration, steps


def sample_uncertainty(
    u: UncertaintySet, seed: int, robot: int, trials: np.ndarray
) -> np.ndarray:
    """One perturbation vector per trial, distributed over U.

    Box samples are accepted when they meet the budget; trials still
    unresolved after ``EPS_REJECTION_ATTEMPTS`` tries fall back to a
    coordinate hit-and-run chain from the origin (``EPS_GIBBS_SWEEPS`` sweeps),
    whose stationary law is also uniform on U.
    """
    trials = np.asarray(trials, dtype=np.int64)
    k = u.eps_bar.size
    out = np.zeros((trials.size, k))
    chunks = trials // EPS_CHUNK
    for c in np.unique(chunks):
        sel = np.flatnonzero(chunks == c)
        local = trials[sel] % EPS_CHUNK
        done = np.zeros(sel.size, dtype=bool)
        for attempt in range(EPS_REJECTION_ATTEMPTS):
            g = streams.generator(seed, (robot, streams.SLOT_EPS, int(c), attempt))
            draw = g.random((EPS_CHUNK, k))[local] * u.eps_bar
            ok = ~done & (draw.sum(axis=1) <= u.gamma)
            out[sel[ok]] = draw[ok]
            done |= ok
            if done.all():
                break
        todo = np.flatnonzero(~done)
        if todo.size == 0:
            continue
        eps = np.zeros((todo.size, k))
        total = np.zeros(todo.size)
        for sweep in range(EPS_GIBBS_SWEEPS):
            g = streams.generator(seed, (robot, streams.SLOT_EPS, int(c), 1000 + sweep))
            draw = g.random((EPS_CHUNK, k))[local[todo]]
            for j in range(k):
                rest = total - eps[:, j]
                hi = np.clip(np.minimum(u.eps_bar[j], u.gamma - rest), 0.0, None)
                eps[:, j] = draw[:, j] * hi
                total = rest + eps[:, j]
        out[sel[todo]] = eps
    return out


def _eps_for(
    eps_mode: str,
    seed: int,
    robot: int,
    trials: np.ndarray,
    eps_star: np.ndarray | None,
    uncertainty: UncertaintySet | None,
) -> np.ndarray | None:
    if eps_mode == "nominal":
        return None
    if eps_mode == "worst_case":
        if eps_star is None:
            raise ValueError("worst_case mode needs the worst-case perturbation eps_star")
        return np.asarray(eps_star, dtype=float)
    if eps_mode == "sampled":
        if uncertainty is None:
            raise ValueError("sampled mode needs the uncertainty set")
        return sample_uncertainty(uncertainty, seed, robot, trials)
    raise ValueError(f"unknown eps_mode {eps_mode!r}; expected one of {EPS_MODES}")


@dataclass
class SingleRun:
    stats: SimStats
    success: np.ndarray
    duration: np.ndarray
    steps: list[np.ndarray] | None = field(default=None, repr=False)

    def trials(self) -> Iterator[TrialResult]:
        for i in range(self.success.size):
            path: list[tuple[int, int]] = []
            if self.steps is not None:
                path = [(int(r[i, 0]), int(r[i, 1])) for r in self.steps if r[i, 0] >= 0]
            yield TrialResult(i, bool(self.success[i]), float(self.duration[i]), path)

    def trial_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "success", "duration"])
        for i in range(self.success.size):
            w.writerow([i, int(self.success[i]), repr(float(self.duration[i]))])
        return buf.getvalue()


def run_single(
    model: CmdpModel,
    policy: RandomizedPolicy,
    sink_pair: tuple[int, int],
    eps_mode: str = "nominal",
    seed: int = 0,
    n_trials: int = 1000,
    *,
    eps_star: np.ndarray | None = None,
    uncertainty: UncertaintySet | None = None,
    theoretical_pf: float | None = None,
    record_paths: bool = False,
    robot: int = 0,
) -> SingleRun:
    """Simulate ``n_trials`` independent runs of one robot.

    A trial fails when it enters the sink; its duration is the sum of the
    realized traversal times, including the edge on which it failed.
    """
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    comp = CompiledPolicy(model, policy, sink_pair)
    trials = np.arange(n_trials)
    eps = _eps_for(eps_mode, seed, robot, trials, eps_star, uncertainty)
    success, duration, steps = comp.rollout(seed, robot, trials, eps, record_paths)
    theo = None if theoretical_pf is None else 1.0 - theoretical_pf
    stats = summarize(success, duration, theo, eps_mode, seed)
    return SingleRun(stats, success, duration, steps)


@dataclass
class TargetPlan:
    """Everything needed to roll out robots heading to one target."""

    model: CmdpModel
    policy: RandomizedPolicy
    sink_pair: tuple[int, int]
    eps_star: np.ndarray | None = None
    uncertainty: UncertaintySet | None = None

    def __post_init__(self) -> None:
        self._compiled: CompiledPolicy | None = None

    @property
    def compiled(self) -> CompiledPolicy:
        if self._compiled is None:
            self._compiled = CompiledPolicy(self.model, self.policy, self.sink_pair)
        return self._compiled


def _team_rollouts(
    plans: Mapping[Hashable, TargetPlan],
    robot_targets: np.ndarray,
    eps_mode: str,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """``robot_targets[r, i]`` is the target index of robot r in trial i."""
    targets = list(plans)
    K, n = robot_targets.shape
    reached = np.zeros((len(targets), n), dtype=bool)
    duration = np.zeros(n)
    for r in range(K):
        for j, t in enumerate(targets):
            ids = np.flatnonzero(robot_targets[r] == j)
            if ids.size == 0:
                continue
            plan = plans[t]
            eps = _eps_for(eps_mode, seed, r, ids, plan.eps_star, plan.uncertainty)
            ok, dur, _ = plan.compiled.rollout(seed, r, ids, eps)
            reached[j, ids] |= ok
            duration[ids] = np.maximum(duration[ids], dur)
    return reached.all(axis=0), duration


def run_team(
    plans: Mapping[Hashable, TargetPlan],
    assignment: Sequence[Hashable],
    seed: int = 0,
    n_trials: int = 1000,
    eps_mode: str = "nominal",
    theoretical_success: float | None = None,
) -> SimStats:
    """All robots move independently; the team succeeds when every target is reached.

    Team duration is the largest individual duration.
    """
    targets = list(plans)
    pos = {t: j for j, t in enumerate(targets)}
    alpha = np.array([pos[a] for a in assignment], dtype=np.int64)
    robot_targets = np.repeat(alpha[:, None], n_trials, axis=1)
    success, duration = _team_rollouts(plans, robot_targets, eps_mode, seed)
    return summarize(success, duration, theoretical_success, eps_mode, seed)


def uniform_assignments(seed: int, n_robots: int, n_targets: int, draws: int) -> np.ndarray:
    """``draws`` i.i.d. uniform assignments, shape (draws, n_robots)."""
    g = streams.generator(seed, (0, 0, streams.SLOT_ASSIGN))
    return g.integers(0, n_targets, size=(draws, n_robots))


def run_team_uniform(
    plans: Mapping[Hashable, TargetPlan],
    n_robots: int,
    seed: int = 0,
    n_trials: int = 1000,
    eps_mode: str = "nominal",
    draws: int = 32,
    theoretical_success: float | None = None,
) -> SimStats:
    """Team success under uniform random assignment, trial ``i`` using draw ``i mod draws``."""
    alphas = uniform_assignments(seed, n_robots, len(plans), draws)
    robot_targets = alphas[np.arange(n_trials) % draws].T
    success, duration = _team_rollouts(plans, robot_targets, eps_mode, seed)
    return summarize(success, duration, theoretical_success, eps_mode, seed)
