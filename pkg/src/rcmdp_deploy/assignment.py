"""Target assignment: how many robots to send to each target.

Maximizes prod_j (1 - PF_j^(k_j + 1)) over nonnegative integers with
sum_j k_j = K - |T|, where k_j counts the robots sent to target j beyond the
first one.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

BRUTE_FORCE_LIMIT = 10**6
RTA_TOL = 1e-9


class AssignmentError(ValueError):
    pass


@dataclass(frozen=True)
class TaInstance:
    pf: tuple[float, ...]
    K: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "pf", tuple(float(p) for p in self.pf))
        if not self.pf:
            raise AssignmentError("need at least one target")
        if any(not 0.0 < p < 1.0 for p in self.pf):
            raise AssignmentError("failure probabilities must lie strictly inside (0, 1); preprocess first")
        if self.K < len(self.pf):
            raise AssignmentError(f"{self.K} robots cannot cover {len(self.pf)} targets")

    @property
    def n_targets(self) -> int:
        return len(self.pf)

    @property
    def extra(self) -> int:
        return self.K - self.n_targets


@dataclass(frozen=True)
class TaSolution:
    counts: tuple[int, ...]
    objective: float
    method: str

    @property
    def robots_per_target(self) -> tuple[int, ...]:
        return tuple(k + 1 for k in self.counts)


def log_objective(pf: Sequence[float], counts: Sequence[float]) -> float:
    return math.fsum(math.log1p(-(p ** (k + 1))) for p, k in zip(pf, counts))


def objective(pf: Sequence[float], counts: Sequence[float]) -> float:
    return math.exp(log_objective(pf, counts))


def _gain(p: float, k: int) -> float:
    """Log-objective increase from one more robot on a target that already has k extra."""
    return math.log1p(-(p ** (k + 2))) - math.log1p(-(p ** (k + 1)))


def preprocess(pf: Sequence[float], K: int) -> tuple[list[int], int, list[int]]:
    """Split off targets with PF = 0 and reject PF = 1.

    Returns (indices of regular targets, robots left for them, indices of
    certain targets that receive exactly one robot).
    """
    if any(p >= 1.0 for p in pf):
        raise AssignmentError("some target can never be reached (PF = 1)")
    certain = [j for j, p in enumerate(pf) if p <= 0.0]
    regular = [j for j, p in enumerate(pf) if p > 0.0]
    left = K - len(certain)
    if left < len(regular):
        raise AssignmentError(f"{K} robots cannot cover {len(pf)} targets")
    return regular, left, certain


def brute_force_ta(inst: TaInstance) -> TaSolution:
    """Exhaustive search; the first allocation in lexicographic order wins ties."""
    T, R = inst.n_targets, inst.extra
    if math.comb(R + T - 1, T - 1) > BRUTE_FORCE_LIMIT:
        raise AssignmentError("too many allocations for brute force")
    best, best_val = None, -math.inf
    for bars in itertools.combinations(range(R + T - 1), T - 1):
        cuts = (-1,) + bars + (R + T - 1,)
        counts = tuple(cuts[i + 1] - cuts[i] - 1 for i in range(T))
        val = log_objective(inst.pf, counts)
        if val > best_val:
            best, best_val = counts, val
    return TaSolution(best, math.exp(best_val), "brute")


def _relaxed_bound(pf: Sequence[float], total: float) -> float:
    """Max of sum log(1 - p^(k+1)) over real k >= 0 with sum k = total.

    Water-filling on the log-multiplier; an upper bound for any integer
    allocation of ``total`` extra robots over these targets.
    """
    if not pf:
        return 0.0 if total == 0 else -math.inf
    logs = [math.log(p) for p in pf]

    def ks(nu: float) -> list[float]:
        return [max(0.0, _k_of_nu(nu, lp)) for lp in logs]

    if total <= 0:
        return log_objective(pf, [0.0] * len(pf))
    # sum of clipped k decreases in nu
    lo, hi = -50.0, 50.0
    while sum(ks(lo)) < total:
        lo -= 64.0
    while sum(ks(hi)) > total:
        hi += 64.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sum(ks(mid)) > total:
            lo = mid
        else:
            hi = mid
    return log_objective(pf, ks(lo))


def solve_ta_exact(inst: TaInstance) -> TaSolution:
    """Best-first branch and bound over per-target counts.

    Targets are fixed one at a time; a node's bound is its fixed part plus
    the continuous relaxation over the remaining targets.  The incumbent
    starts from the greedy marginal allocation.
    """
    pf, T, R = inst.pf, inst.n_targets, inst.extra
    inc = _greedy(pf, R)
    inc_val = log_objective(pf, inc)
    tie = itertools.count()
    heap: list = []

    def push(prefix: tuple[int, ...]) -> None:
        left = R - sum(prefix)
        fixed = log_objective(pf[: len(prefix)], prefix)
        if len(prefix) == T - 1:
            full = prefix + (left,)
            heapq.heappush(heap, (-log_objective(pf, full), next(tie), full))
            return
        bound = fixed + _relaxed_bound(pf[len(prefix):], left)
        heapq.heappush(heap, (-bound, next(tie), prefix))

    push(())
    if T == 1:
        return TaSolution((R,), objective(pf, (R,)), "exact")
    while heap:
        negb, _, node = heapq.heappop(heap)
        if -negb <= inc_val + 1e-15:
            break
        if len(node) == T:
            if -negb > inc_val:
                inc, inc_val = node, -negb
            continue
        left = R - sum(node)
        for k in range(left + 1):
            push(node + (k,))
    return TaSolution(tuple(int(k) for k in inc), math.exp(inc_val), "exact")


def _greedy(pf: Sequence[float], R: int, start: Sequence[int] | None = None) -> tuple[int, ...]:
    counts = list(start) if start is not None else [0] * len(pf)
    heap = [(-_gain(p, k), j) for j, (p, k) in enumerate(zip(pf, counts))]
    heapq.heapify(heap)
    for _ in range(R):
        _, j = heapq.heappop(heap)
        counts[j] += 1
        heapq.heappush(heap, (-_gain(pf[j], counts[j]), j))
    return tuple(counts)


def _k_of_nu(nu: float, log_p: float) -> float:
    """k*(lambda) with lambda = -exp(nu), evaluated without underflow."""
    log_ratio = nu - np.logaddexp(nu, math.log(-log_p))
    return float(log_ratio / log_p - 1.0)


@dataclass(frozen=True)
class RtaSolution:
    k_star: tuple[float, ...]
    lambda_star: float
    log_neg_lambda: float
    residual: float


def solve_rta(inst: TaInstance) -> RtaSolution:
    """Relaxed assignment via bisection on the multiplier.

    Searches over nu = log(-lambda) so that very small multipliers (large
    teams) stay representable; sum_j k_j(nu) is increasing in nu.
    """
    T, K = inst.n_targets, inst.K
    if K < 2 * T:
        raise AssignmentError("the relaxation needs K >= 2|T|")
    logs = [math.log(p) for p in inst.pf]
    target = K - 2 * T

    def resid(nu: float) -> float:
        return math.fsum(_k_of_nu(nu, lp) for lp in logs) - target

    # nu = log(-lambda); the residual decreases in nu.  Start from the
    # lambda bracket [-C * max|log PF|, -1e-18] and widen until it brackets.
    big = math.log(max(-lp for lp in logs))
    small = math.log(1e-18)
    for _ in range(200):
        if resid(big) < 0:
            break
        big += math.log(2.0)
    else:
        raise AssignmentError("could not bracket the multiplier (large side)")
    for _ in range(200):
        if resid(small) > 0:
            break
        small *= 2.0
    else:
        raise AssignmentError("could not bracket the multiplier (small side)")
    for _ in range(400):
        mid = 0.5 * (small + big)
        if mid in (small, big):
            break
        if resid(mid) > 0:
            small = mid
        else:
            big = mid
    nu = small if abs(resid(small)) <= abs(resid(big)) else big
    ks = tuple(_k_of_nu(nu, lp) for lp in logs)
    r = resid(nu)
    if abs(r) > RTA_TOL:
        raise AssignmentError(f"bisection stalled with residual {r:.3e}")
    return RtaSolution(ks, -math.exp(nu), nu, r)


def kkt_residual(inst: TaInstance, rta: RtaSolution) -> float:
    """Largest relative mismatch between lambda* and PF^(k+1) log PF / (1 - PF^(k+1))."""
    worst = 0.0
    for p, k in zip(inst.pf, rta.k_star):
        # both sides divided by -lambda, in logs to survive tiny multipliers
        lhs_log = (k + 1) * math.log(p) + math.log(-math.log(p)) - math.log1p(-(p ** (k + 1)))
        worst = max(worst, abs(math.expm1(lhs_log - rta.log_neg_lambda)))
    return worst


def round_rta(inst: TaInstance, rta: RtaSolution) -> TaSolution:
    """Round the relaxed counts up and hand out the leftover robots greedily."""
    base = [int(math.ceil(k - 1e-12)) for k in rta.k_star]
    base = [max(b, 0) for b in base]
    left = inst.extra - sum(base)
    if left < 0:
        raise AssignmentError("rounded relaxation exceeds the robot budget")
    counts = _greedy(inst.pf, left, base)
    return TaSolution(counts, objective(inst.pf, counts), "approx")


def solve_ta(inst: TaInstance) -> TaSolution:
    """Branch and bound for |T| <= K < 2|T|, the rounded relaxation otherwise."""
    if inst.K >= 2 * inst.n_targets:
        return round_rta(inst, solve_rta(inst))
    return solve_ta_exact(inst)


def assign(pf: Sequence[float], K: int, method: str = "auto") -> TaSolution:
    """Solve the assignment for raw failure probabilities, handling PF in {0, 1}.

    ``method`` is ``auto`` (switch at K = 2|T|), ``exact``, ``approx`` or ``brute``.
    """
    regular, left, certain = preprocess(pf, K)
    counts = [0] * len(pf)
    if regular:
        inst = TaInstance([pf[j] for j in regular], left)
        if method == "auto":
            sol = solve_ta(inst)
        elif method == "exact":
            sol = solve_ta_exact(inst)
        elif method == "approx":
            sol = round_rta(inst, solve_rta(inst))
        elif method == "brute":
            sol = brute_force_ta(inst)
        else:
            raise ValueError(f"unknown method {method!r}")
        for j, k in zip(regular, sol.counts):
            counts[j] = k
        tag = sol.method
    else:
        # every target is certain; spare robots go to the first one
        counts[certain[0]] = left
        tag = "trivial"
    full = tuple(counts)
    val = math.exp(math.fsum(math.log1p(-(p ** (k + 1))) for p, k in zip(pf, full) if p > 0))
    return TaSolution(full, val, tag)


def counts_to_alpha(targets: Sequence, counts: Sequence[int]) -> list:
    """Per-robot targets: target j is listed counts[j] + 1 times, in target order."""
    alpha = []
    for t, k in zip(targets, counts):
        alpha.extend([t] * (k + 1))
    return alpha
