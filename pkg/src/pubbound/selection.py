"""Outer optimisation over study-level selection probabilities.

After the inner problem is solved exactly (top-fraction envelope), the bias
contrast for the max direction is

    F(p) = sum_i a_i H_i(p_i),   H_i(q) = mean of study i's top-q scores,

to be maximised over p_i in (0, 1] that are non-decreasing along the studies
sorted by key (descending), with ties in the key forced equal, under a
constraint on how many studies may be unpublished.

Two forms of that constraint are supported:

``harmonic`` (default)
    mean_i(1/p_i) <= 1/p. Published designs are a size-biased sample, so
    sum_i 1/p_i estimates the population size S and p = N/S. In u_i = 1/p_i
    each H_i is concave and piecewise linear with breakpoints at u = K/m, so
    the problem is convex; it is solved exactly by a Lagrangian search whose
    inner step is pool-adjacent-violators.

``arithmetic``
    mean_i(p_i) >= p, a looser relaxation that lets a few studies carry
    vanishing selection probability. Non-convex; solved by multi-start
    local search seeded with the uniform point, the harmonic optimum and
    two-level step profiles.

Every harmonic-feasible point is arithmetic-feasible (harmonic <= arithmetic
mean), so the arithmetic bound is never tighter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .bounds import ScoreMatrix, envelope_ratio, selection_weights

P_FLOOR = 1e-6
CONSTRAINTS = ("harmonic", "arithmetic")
DIRECTIONS = ("max", "min")


@dataclass
class BoundSolution:
    p: float
    direction: str
    value: float
    p_i: np.ndarray
    mean_constraint: str = "harmonic"
    constraint_active: bool = True
    converged: bool = True
    gap: float = 0.0
    mc_se: float = 0.0
    bias: np.ndarray = field(default_factory=lambda: np.zeros(0))
    replicate_values: tuple = ()
    median: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.replicate_values:
            self.replicate_values = (self.value,)
        if self.median is None:
            self.median = self.value

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "direction": self.direction,
            "value": self.value,
            "median": self.median,
            "replicate_values": list(self.replicate_values),
            "p_i": [float(v) for v in self.p_i],
            "mean_constraint": self.mean_constraint,
            "constraint_active": self.constraint_active,
            "converged": self.converged,
            "gap": self.gap,
            "mc_se": self.mc_se,
            "bias": [float(v) for v in self.bias],
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# chain structure
# ---------------------------------------------------------------------------


def chain_groups(keys, rtol: float = 1e-12) -> list[np.ndarray]:
    """Studies ordered by key (descending), equal keys pooled into one group.

    Selection probabilities must be non-decreasing along the returned list.
    """
    keys = np.asarray(keys, dtype=float)
    order = np.argsort(-keys, kind="stable")
    groups, current = [], [order[0]]
    for idx in order[1:]:
        ref = keys[current[0]]
        if abs(keys[idx] - ref) <= rtol * max(1.0, abs(ref)):
            current.append(idx)
        else:
            groups.append(np.array(current))
            current = [idx]
    groups.append(np.array(current))
    return groups


def _objective(sorted_scores, weights, p_i) -> float:
    return float(
        sum(w * envelope_ratio(s, q) for s, w, q in zip(sorted_scores, weights, p_i))
    )


def _group_objective(sorted_scores, weights, group, q):
    """Sum over a tie group at common level(s) q (vectorised over q)."""
    q = np.asarray(q, dtype=float)
    return sum(weights[i] * envelope_ratio(sorted_scores[i], q) for i in group)


class _ChainEnvelope:
    """Objective of a contiguous run of chain groups held at a common level.

    Weighted sorted scores are summed within groups and prefix-summed along
    the chain, so any run evaluates in O(1) per level.
    """

    def __init__(self, sorted_scores, weights, groups):
        per = np.array([(weights[g, None] * sorted_scores[g]).sum(axis=0) for g in groups])
        G, K = per.shape
        self.K = K
        self.G = G
        csum = np.concatenate((np.zeros((G, 1)), np.cumsum(per, axis=1)), axis=1)
        self._C = np.concatenate((np.zeros((1, K + 1)), np.cumsum(csum, axis=0)))
        self._S = np.concatenate((np.zeros((1, K)), np.cumsum(per, axis=0)))

    def block(self, a: int, b: int, q):
        """Sum of group objectives for groups a..b (inclusive) at level(s) q."""
        q = np.asarray(q, dtype=float)
        C = self._C[b + 1] - self._C[a]
        S = self._S[b + 1] - self._S[a]
        K = self.K
        kq = K * q
        m = np.minimum(np.floor(kq).astype(int), K)
        nxt = np.where(m < K, S[np.minimum(m, K - 1)], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (C[m] + (kq - m) * nxt) / kq
        out = np.where(q > 0, val, S[0])
        return float(out) if out.ndim == 0 else out

    def profile(self, levels):
        """Objective of level profiles; ``levels`` has the groups on its last axis."""
        levels = np.asarray(levels, dtype=float)
        return sum(self.block(g, g, levels[..., g]) for g in range(self.G))


# ---------------------------------------------------------------------------
# harmonic constraint: exact convex solver
# ---------------------------------------------------------------------------


def _piece_slopes(sorted_row) -> np.ndarray:
    """Slopes of u -> H(1/u) on [K/(m+1), K/m] for m = 1..K-1 (non-decreasing in m)."""
    K = sorted_row.size
    m = np.arange(1, K)
    csum = np.cumsum(sorted_row)[:-1]  # C_m for m = 1..K-1
    return (csum - m * sorted_row[1:]) / K


def _block_argmax(slopes, n, lam, K):
    # smallest maximiser of Psi(u) - lam*n*u on [1, K]
    idx = int(np.searchsorted(slopes, lam * n, side="right"))
    if idx >= slopes.size:
        return 1.0
    return K / (idx + 1)


def _pav(group_slopes, sizes, lam, K):
    """Maximise sum_g Psi_g(u_g) - lam n_g u_g over u non-increasing along groups."""
    blocks = []  # [first, last, n, slopes, u]
    for g, (sl, n) in enumerate(zip(group_slopes, sizes)):
        blk = [g, g, n, sl, _block_argmax(sl, n, lam, K)]
        while blocks and blocks[-1][4] < blk[4]:
            prev = blocks.pop()
            sl_m = prev[3] + blk[3]
            n_m = prev[2] + blk[2]
            blk = [prev[0], blk[1], n_m, sl_m, _block_argmax(sl_m, n_m, lam, K)]
        blocks.append(blk)
    u = np.empty(len(sizes))
    for first, last, _, _, val in blocks:
        u[first : last + 1] = val
    return u


def _solve_harmonic(sorted_scores, weights, groups, p):
    N, K = sorted_scores.shape
    sizes = np.array([len(g) for g in groups], dtype=float)
    slopes = [sum(weights[i] * _piece_slopes(sorted_scores[i]) for i in g) for g in groups]
    budget = N / p

    def spend(u):
        return float(np.dot(sizes, u))

    iterations = 0
    u0 = _pav(slopes, sizes, 0.0, K)
    if spend(u0) <= budget * (1 + 1e-15):
        u, active, lam = u0, False, 0.0
        u_dual = u0
    else:
        lo = 0.0
        hi = max(float(sl[-1]) / n for sl, n in zip(slopes, sizes)) * 2.0 + 1.0
        u_lo = u0
        u_hi = _pav(slopes, sizes, hi, K)
        for iterations in range(1, 400):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            u_mid = _pav(slopes, sizes, mid, K)
            if spend(u_mid) > budget:
                lo, u_lo = mid, u_mid
            else:
                hi, u_hi = mid, u_mid
        s_lo, s_hi = spend(u_lo), spend(u_hi)
        t = 0.0 if s_lo == s_hi else (budget - s_hi) / (s_lo - s_hi)
        u = u_hi + t * (u_lo - u_hi)
        active, lam, u_dual = True, hi, u_hi

    p_groups = np.minimum(1.0 / u, 1.0)
    primal = sum(
        float(np.sum(_group_objective(sorted_scores, weights, g, q)))
        for g, q in zip(groups, p_groups)
    )
    # Lagrangian dual bound at lam, attained by u_dual
    dual = lam * budget
    for g, ug, n in zip(groups, u_dual, sizes):
        dual += float(_group_objective(sorted_scores, weights, g, 1.0 / ug)) - lam * n * ug
    return p_groups, primal, dual - primal, active, iterations


# ---------------------------------------------------------------------------
# arithmetic constraint: multi-start local search
# ---------------------------------------------------------------------------


def _step_profiles(sizes, p, floor, K, max_levels=40):
    """Three-level profiles (low, v, 1) along the chain with v pinned by the budget.

    ``low`` ranges over the floor and a subsample of breakpoints m/K. These
    are the vertices of the feasible polytope when each group's objective is
    convex in its level, which holds between breakpoints.
    """
    N = sizes.sum()
    G = len(sizes)
    lows = np.arange(1, K + 1) / K
    lows = lows[lows < p]
    if lows.size > max_levels:
        lows = lows[np.unique(np.linspace(0, lows.size - 1, max_levels).round().astype(int))]
    lows = np.concatenate(([floor], lows))
    csum = np.concatenate(([0.0], np.cumsum(sizes)))
    out = []
    for low in lows:
        for a in range(G + 1):  # groups [0, a) at low
            for b in range(a, G + 1):  # groups [a, b) at v, [b, G) at 1
                n_v = csum[b] - csum[a]
                rest = N * p - low * csum[a] - (N - csum[b])
                if n_v == 0:
                    if rest <= 1e-12:
                        prof = np.ones(G)
                        prof[:a] = low
                        out.append(prof)
                    continue
                v = rest / n_v
                if low - 1e-15 <= v <= 1.0:
                    prof = np.ones(G)
                    prof[:a] = low
                    prof[a:b] = max(v, low)
                    out.append(prof)
    return out


def _level_candidates(q_now, K, floor, n_max=96, near=6):
    """Breakpoints m/K: a uniform subsample plus those adjacent to the current level."""
    levels = np.arange(1, K + 1) / K
    if levels.size > n_max:
        pick = np.unique(np.linspace(0, levels.size - 1, n_max).round().astype(int))
        m_now = int(round(q_now * K))
        local = np.arange(max(m_now - near, 1), min(m_now + near, K) + 1) - 1
        levels = levels[np.union1d(pick, local)]
    return np.concatenate(([floor], levels))


def _tied_blocks(q):
    """Contiguous blocks of equal level: every prefix and suffix of each maximal run."""
    G = len(q)
    out = set()
    start = 0
    for j in range(1, G + 1):
        if j == G or q[j] != q[start]:
            for k in range(start, j):
                out.add((start, k))
                out.add((k, j - 1))
            start = j
    return sorted(out)


def _local_search_arithmetic(env, sizes, p, start, floor, max_sweeps):
    """Move a tied block to a breakpoint level, re-balancing the budget through another block."""
    K = env.K
    N = sizes.sum()
    q = np.maximum.accumulate(np.clip(start, floor, 1.0))
    per_group = np.array([env.block(g, g, lvl) for g, lvl in enumerate(q)])

    for _ in range(max_sweeps):
        improved = False
        for a, b in _tied_blocks(q):
            cand = _level_candidates(q[a], K, floor)
            cand = cand[cand != q[a]]
            n_ab = sizes[a : b + 1].sum()
            moved = None
            for c, d in _tied_blocks(q):
                if not (d < a or c > b):
                    continue
                n_cd = sizes[c : d + 1].sum()
                slack = float(np.dot(sizes, q) - N * p)
                y = np.clip(q[c] + (n_ab * (q[a] - cand) - slack) / n_cd, floor, 1.0)
                trial = np.tile(q, (cand.size, 1))
                trial[:, a : b + 1] = cand[:, None]
                trial[:, c : d + 1] = y[:, None]
                ok = np.all(np.diff(trial, axis=1) >= -1e-12, axis=1)
                ok &= trial @ sizes >= N * p - 1e-9
                if not np.any(ok):
                    continue
                gain = (
                    env.block(a, b, cand[ok])
                    + env.block(c, d, y[ok])
                    - per_group[a : b + 1].sum()
                    - per_group[c : d + 1].sum()
                )
                k = int(np.argmax(gain))
                if gain[k] > 1e-12 * max(1.0, abs(per_group.sum())):
                    moved = trial[ok][k]
                    break
            if moved is not None:
                q = moved
                per_group = np.array([env.block(g, g, lvl) for g, lvl in enumerate(q)])
                improved = True
                break  # block structure changed
        if not improved:
            break
    return q, float(per_group.sum())


def _solve_arithmetic(sorted_scores, weights, groups, p, floor, max_sweeps=200, n_polish=8):
    sizes = np.array([len(g) for g in groups], dtype=float)
    env = _ChainEnvelope(sorted_scores, weights, groups)
    seeds = [np.full(len(groups), p)]
    hp, *_ = _solve_harmonic(sorted_scores, weights, groups, p)
    seeds.append(hp)
    candidates = np.array(_step_profiles(sizes, p, floor, env.K))
    if candidates.size:
        top = np.argsort(env.profile(candidates))[::-1][:n_polish]
        seeds.extend(candidates[top])
    best_q, best_v = None, -np.inf
    for seed in seeds:
        q, v = _local_search_arithmetic(env, sizes, p, seed, floor, max_sweeps)
        if v > best_v:
            best_q, best_v = q, v
    active = bool(np.dot(sizes, best_q) <= sizes.sum() * p + 1e-9)
    return best_q, best_v, active, len(seeds)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def _check_args(p, direction, mean_constraint):
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if mean_constraint not in CONSTRAINTS:
        raise ValueError(f"mean_constraint must be one of {CONSTRAINTS}")


def optimize_selection(
    scores: ScoreMatrix,
    p: float,
    direction: str = "max",
    *,
    mean_constraint: str = "harmonic",
    floor: float = P_FLOOR,
) -> BoundSolution:
    """Extremal bias contrast over monotone selection patterns at marginal ``p``."""
    _check_args(p, direction, mean_constraint)
    work = scores if direction == "max" else scores.negated()
    srt = work.sorted_desc
    weights = np.asarray(scores.weights, dtype=float)
    groups = chain_groups(scores.keys)

    if mean_constraint == "harmonic":
        q_groups, val, gap, active, iters = _solve_harmonic(srt, weights, groups, p)
        converged = gap <= 1e-9 * max(1.0, abs(val))
        diag = {"solver": "lagrangian-pav", "bisection_steps": iters}
    else:
        q_groups, val, active, n_starts = _solve_arithmetic(srt, weights, groups, p, floor)
        gap, converged = float("nan"), True
        diag = {"solver": "multistart-local", "starts": n_starts}

    p_i = np.empty(scores.n_studies)
    for g, q in zip(groups, q_groups):
        p_i[g] = q

    # per-draw contributions and the full bias vector under the optimal pattern
    K = scores.K
    contrib = np.zeros(K)
    bias = np.zeros(scores.loadings.shape[1])
    for i in range(scores.n_studies):
        w = selection_weights(work.raw[i], p_i[i]) / p_i[i]
        contrib += weights[i] * work.raw[i] * w
        bias += scores.loadings[i] @ (scores.z.T @ w) / K
    sign = 1.0 if direction == "max" else -1.0
    value = sign * val
    diag["groups"] = len(groups)
    return BoundSolution(
        p=float(p),
        direction=direction,
        value=float(value),
        p_i=p_i,
        mean_constraint=mean_constraint,
        constraint_active=bool(active),
        converged=bool(converged),
        gap=float(gap),
        mc_se=float(np.std(contrib, ddof=1) / np.sqrt(K)),
        bias=bias,
        diagnostics=diag,
    )


def selection_objective(scores: ScoreMatrix, p_i, direction: str = "max") -> float:
    """Bias contrast at study-level probabilities ``p_i`` with optimal p_ik."""
    work = scores if direction == "max" else scores.negated()
    val = _objective(work.sorted_desc, scores.weights, np.asarray(p_i, dtype=float))
    return val if direction == "max" else -val


def is_feasible(scores: ScoreMatrix, p_i, p, mean_constraint="harmonic", tol=1e-9) -> bool:
    q = np.asarray(p_i, dtype=float)
    if np.any(q <= 0) or np.any(q > 1 + tol):
        return False
    for g_prev, g_next in zip(chain_groups(scores.keys)[:-1], chain_groups(scores.keys)[1:]):
        if np.ptp(q[g_prev]) > tol or np.ptp(q[g_next]) > tol:
            return False
        if q[g_prev][0] > q[g_next][0] + tol:
            return False
    if mean_constraint == "harmonic":
        return bool(np.mean(1.0 / q) <= 1.0 / p + tol)
    return bool(np.mean(q) >= p - tol)


BRUTE_GRID = np.round(np.arange(1, 51) * 0.02, 10)


def brute_force_bound(
    scores: ScoreMatrix,
    p: float,
    direction: str = "max",
    *,
    mean_constraint: str = "harmonic",
    floor: float = P_FLOOR,
) -> float:
    """Exhaustive search for small instances (N <= 4, K <= 16).

    Levels range over {0.02, ..., 1.00} together with the envelope breakpoints
    m/K and the floor. Each tie-group takes a level, non-decreasing along the
    chain; in addition every contiguous run of groups may take the single
    level that makes the mean constraint tight. Vertices of the piecewise
    problem are all of this form, so the search is exact.
    """
    _check_args(p, direction, mean_constraint)
    if scores.n_studies > 4 or scores.K > 16:
        raise ValueError("brute_force_bound is limited to N <= 4 studies and K <= 16 draws")
    work = scores if direction == "max" else scores.negated()
    srt = work.sorted_desc
    weights = np.asarray(scores.weights, dtype=float)
    groups = chain_groups(scores.keys)
    G = len(groups)
    N = scores.n_studies
    sizes = np.array([len(g) for g in groups], dtype=float)
    K = scores.K
    levels = np.unique(np.concatenate((BRUTE_GRID, np.arange(1, K + 1) / K, [floor])))
    table = np.array([_group_objective(srt, weights, g, levels) for g in groups])

    def feasible(spend_arith, spend_harm):
        if mean_constraint == "harmonic":
            return spend_harm <= N / p * (1 + 1e-12)
        return spend_arith >= N * p * (1 - 1e-12)

    best = -np.inf
    combos = np.array(list(itertools.combinations_with_replacement(range(levels.size), G)))
    lv = levels[combos]
    ok = feasible(lv @ sizes, (1.0 / lv) @ sizes)
    if np.any(ok):
        vals = table[np.arange(G), combos[ok]].sum(axis=1)
        best = float(vals.max())

    # runs whose common level is pinned by the constraint
    for first in range(G):
        for last in range(first, G):
            run = list(range(first, last + 1))
            others = [g for g in range(G) if g not in run]
            n_run = sizes[run].sum()
            if others:
                oc = np.array(
                    list(itertools.combinations_with_replacement(range(levels.size), len(others)))
                )
                olv = levels[oc]
                osz = sizes[others]
                if mean_constraint == "harmonic":
                    rest = N / p - (1.0 / olv) @ osz
                    with np.errstate(divide="ignore", invalid="ignore"):
                        v = np.where(rest > 0, n_run / rest, np.inf)
                else:
                    v = (N * p - olv @ osz) / n_run
                n_before = first
                below = olv[:, n_before - 1] if n_before > 0 else np.full(len(oc), -np.inf)
                above = olv[:, n_before] if n_before < len(others) else np.full(len(oc), np.inf)
                mask = (v >= floor) & (v <= 1.0) & (below <= v) & (v <= above)
                if not np.any(mask):
                    continue
                vals = table[[others], oc[mask]].sum(axis=1)
                vv = v[mask]
            else:
                vv = np.array([1.0 / p if mean_constraint == "harmonic" else p])
                vv = 1.0 / vv if mean_constraint == "harmonic" else vv
                vv = vv[(vv >= floor) & (vv <= 1.0)]
                if vv.size == 0:
                    continue
                vals = np.zeros(vv.size)
            for g in run:
                vals = vals + _group_objective(srt, weights, groups[g], vv)
            best = max(best, float(np.max(vals)))
    return best if direction == "max" else -best
