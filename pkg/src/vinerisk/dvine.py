"""D-vine copula models on a path of variables.

A D-vine couples d variables laid out on a path. Tree level t holds the pair
copulas of variables t steps apart on the path, conditioned on everything
between them, so the model is a triangular array of bivariate copulas: edge
(t, i) couples path positions i and i+t given positions i+1..i+t-1.

The module covers structure selection (a greedy path ordering on normalized
scores that can pin one or two conditioning variables to the right end of
the path), sequential fitting for a fixed order, log likelihood, and exact
sampling: unconditional, and conditional on the rightmost one or two
variables via triangular auxiliary recursions. Conditioning variables always
occupy the rightmost path slots.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .copulas import (
    FAMILY_ORDER,
    FIRST_GIVEN_SECOND,
    SECOND_GIVEN_FIRST,
    PairCopula,
    fit_pair,
    h_function,
    h_inverse,
    pair_log_density,
)
from .distributions import U_EPS, ParameterError


class DegenerateCorrelationWarning(UserWarning):
    """Emitted when a partial correlation cannot be resolved and 0 is used."""


@dataclass(frozen=True)
class DVineModel:
    """A fitted D-vine: path order, triangular edge array, conditioning count.

    order maps path position (left to right) to the variable identifier, i.e.
    the column index of the data panel the model was fitted on. When n_cond
    is 1 the rightmost variable is the conditioning one; when it is 2 the
    rightmost is the outer conditioning variable and its neighbor the inner.
    edges[t-1][i-1] is the pair copula of path positions (i, i+t) given the
    positions strictly between.
    """

    order: tuple
    edges: tuple
    n_cond: int = 0

    def __post_init__(self):
        d = len(self.order)
        if d < 1:
            raise ParameterError("a D-vine needs at least one variable")
        # d == 1 is the degenerate single-variable model: no edges, uniform law
        if sorted(self.order) != list(range(d)):
            raise ParameterError("order must be a permutation of 0..d-1")
        if self.n_cond not in (0, 1, 2):
            raise ParameterError("n_cond must be 0, 1 or 2")
        if d - self.n_cond < 1:
            raise ParameterError("model needs at least one non-conditioning variable")
        if len(self.edges) != d - 1:
            raise ParameterError(f"expected {d - 1} tree levels, got {len(self.edges)}")
        for t, level in enumerate(self.edges, start=1):
            if len(level) != d - t:
                raise ParameterError(
                    f"tree {t} must hold {d - t} edges, got {len(level)}"
                )
            for pc in level:
                if not isinstance(pc, PairCopula):
                    raise ParameterError("edges must be PairCopula instances")

    @property
    def dim(self) -> int:
        return len(self.order)

    @property
    def asset_order(self) -> tuple:
        """Identifiers of the non-conditioning variables, in path order."""
        d = self.dim - self.n_cond
        return tuple(self.order[:d])

    def edge(self, tree: int, position: int) -> PairCopula:
        """Edge (tree, position), both 1-based as in the recursions."""
        return self.edges[tree - 1][position - 1]


@dataclass(frozen=True)
class OrderingWeights:
    """Normalized-score correlation matrix plus the greedy cutoff depth."""

    pearson: np.ndarray
    cutoff_depth: int

    def __post_init__(self):
        p = np.asarray(self.pearson, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ParameterError("pearson must be a square matrix")
        if not np.allclose(np.diag(p), 1.0, atol=1e-8):
            raise ParameterError("pearson diagonal must be 1")
        if np.max(np.abs(p)) > 1.0 + 1e-8:
            raise ParameterError("pearson entries must lie in [-1, 1]")
        if not (1 <= int(self.cutoff_depth)):
            raise ParameterError("cutoff_depth must be a positive integer")
        object.__setattr__(self, "pearson", p)


def partial_correlation(corr, i: int, j: int, conditioning: Sequence[int] = ()) -> float:
    """Partial correlation of variables i and j given a conditioning set.

    Computed from the inverse of the correlation submatrix over {i, j} | D:
    rho = -P_ij / sqrt(P_ii P_jj). Falls back to the pseudo-inverse when the
    submatrix is ill conditioned; a fully degenerate submatrix yields 0 with
    a warning so the greedy ordering can continue.
    """
    corr = np.asarray(corr, dtype=float)
    cond = list(conditioning)
    if i == j or i in cond or j in cond:
        raise ParameterError("require i != j and i, j not in the conditioning set")
    if not cond:
        return float(np.clip(corr[i, j], -1.0, 1.0))
    idx = [i, j] + cond
    sub = corr[np.ix_(idx, idx)]
    try:
        prec = np.linalg.inv(sub)
        if not np.all(np.isfinite(prec)) or np.linalg.cond(sub) > 1e12:
            prec = np.linalg.pinv(sub)
    except np.linalg.LinAlgError:
        prec = np.linalg.pinv(sub)
    denom = prec[0, 0] * prec[1, 1]
    if not np.isfinite(denom) or denom <= 1e-300:
        warnings.warn(
            "degenerate correlation submatrix; using partial correlation 0",
            DegenerateCorrelationWarning,
            stacklevel=2,
        )
        return 0.0
    return float(np.clip(-prec[0, 1] / np.sqrt(denom), -1.0, 1.0))


def _score_correlations(copula_data: np.ndarray) -> np.ndarray:
    z = special.ndtri(np.clip(copula_data, U_EPS, 1.0 - U_EPS))
    r = np.corrcoef(z, rowvar=False)
    return np.clip(r, -1.0, 1.0)


def _greedy_extend(r, chosen, anchors, candidates, cutoff_depth, d_select):
    """Append variables to `chosen` by the greedy absolute-correlation rule.

    anchors is the list of already-placed right-end variables in inner-to-
    outer order; chained as j_0, j_-1 in the weight sums. At step l the
    candidate score is the sum over k = max(l - cutoff_depth, 1 - len(anchors))
    .. l-1 of |partial corr(delta, j_k | j_{k+1}..j_{l-1})|, where j_k for
    k <= 0 are the anchors. Ties go to the smallest identifier.
    """
    chosen = list(chosen)
    candidates = sorted(candidates)
    while len(chosen) < d_select:
        l = len(chosen) + 1
        k_min = max(l - cutoff_depth, 1 - len(anchors))
        best_delta, best_score = None, -np.inf
        for delta in candidates:
            if delta in chosen:
                continue
            score = 0.0
            for k in range(k_min, l):
                # edge (delta, j_k) conditioned on everything strictly between
                # them on the prospective path, i.e. j_{k+1}..j_{l-1}
                if k >= 1:
                    jk = chosen[k - 1]
                    cond = chosen[k : l - 1]
                else:
                    jk = anchors[-k]  # k=0 -> inner anchor, k=-1 -> outer
                    cond = list(anchors[: -k]) + chosen[: l - 1]
                score += abs(partial_correlation(r, delta, jk, cond))
            if score > best_score:
                best_delta, best_score = delta, score
        chosen.append(best_delta)
    return chosen


def select_order(copula_data, n_cond: int = 0, cutoff_depth: int | None = None) -> tuple:
    """Choose a D-vine path order by greedy absolute-correlation weights.

    Correlations are Pearson correlations of normalized scores (standard
    normal quantiles of the copula data), with partial correlations for
    conditioned edges. Conditioning variables are the last n_cond columns of
    the data and end up in the rightmost path slots; the variable most
    correlated with them is placed adjacent, and each further slot is filled
    by the candidate maximizing the summed absolute (partial) correlations
    of the edges it would add, looking back at most cutoff_depth steps.

    Returns a permutation of column indices, leftmost path position first.
    With n_cond=2 the returned rightmost variable is the outer conditioning
    variable (the one less correlated with the chosen first asset) and the
    second-rightmost the inner one.
    """
    u = np.asarray(copula_data, dtype=float)
    if u.ndim != 2:
        raise ParameterError("copula_data must be a 2-d array")
    n, p = u.shape
    d = p - n_cond
    if n_cond not in (0, 1, 2):
        raise ParameterError("n_cond must be 0, 1 or 2")
    if d < 1:
        raise ParameterError("need at least one non-conditioning variable")
    if n < p + 2:
        raise ParameterError(f"need at least {p + 2} rows to order {p} variables")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ParameterError("copula data must lie strictly inside (0, 1)")
    if cutoff_depth is None:
        cutoff_depth = d
    if cutoff_depth < 1:
        raise ParameterError("cutoff_depth must be >= 1")
    r = _score_correlations(u)
    assets = list(range(d))

    if n_cond == 0:
        if d == 1:
            return (0,)
        totals = np.sum(np.abs(r[:d, :d]), axis=1) - 1.0
        j1 = max(assets, key=lambda a: (totals[a], -a))
        chosen = _greedy_extend(r, [j1], [], assets, cutoff_depth, d)
        return tuple(reversed(chosen))

    if n_cond == 1:
        idx_i = d
        j1 = max(assets, key=lambda a: (abs(r[a, idx_i]), -a))
        chosen = _greedy_extend(r, [j1], [idx_i], assets, cutoff_depth, d)
        return tuple(reversed(chosen)) + (idx_i,)

    # n_cond == 2: pick the (asset, index) pair of maximal |rho|; that index
    # becomes the inner conditioning variable, the other the outer one.
    idx1, idx2 = d, d + 1
    best = None
    for a in assets:
        for k, idx in ((1, idx1), (2, idx2)):
            cand = (abs(r[a, idx]), -a, -k)
            if best is None or cand > best[0]:
                best = (cand, a, idx)
    _, j1, inner = best
    outer = idx2 if inner == idx1 else idx1
    chosen = _greedy_extend(r, [j1], [inner, outer], assets, cutoff_depth, d)
    return tuple(reversed(chosen)) + (inner, outer)


def _edge_fit_task(args):
    """Top-level so process pools can pickle it."""
    pairs, families = args
    return fit_pair(pairs, families).copula


def fit_dvine(
    copula_data,
    order: Sequence[int],
    allowed_families: Sequence[str] = FAMILY_ORDER,
    n_cond: int = 0,
    map_fn=None,
) -> DVineModel:
    """Fit a D-vine with a fixed path order by sequential per-tree MLE.

    Tree 1 is fitted on adjacent data columns in path order. Each higher
    tree is fitted on pseudo-observations propagated through the fitted
    h-functions of the tree below: the left argument of edge (t, i) is the
    conditional CDF of path position i given the positions between, the
    right argument that of position i+t.

    map_fn, when given, evaluates the independent edge fits of one tree
    (a pool's map, say); it must preserve argument order. Results are
    identical to the sequential default.
    """
    if map_fn is None:
        map_fn = map
    u = np.asarray(copula_data, dtype=float)
    if u.ndim != 2:
        raise ParameterError("copula_data must be a 2-d array")
    d = u.shape[1]
    if sorted(order) != list(range(d)):
        raise ParameterError("order must be a permutation of the data columns")
    path = u[:, list(order)]
    left = [path[:, i] for i in range(d - 1)]  # C(pos i | between) per edge
    right = [path[:, i + 1] for i in range(d - 1)]  # C(pos i+t | between)
    trees = []
    families = tuple(allowed_families)
    for t in range(1, d):
        tasks = [
            (np.column_stack([left[i], right[i]]), families) for i in range(d - t)
        ]
        level = list(map_fn(_edge_fit_task, tasks))
        trees.append(tuple(level))
        if t == d - 1:
            break
        new_left = []
        new_right = []
        for i in range(d - t - 1):
            new_left.append(
                h_function(level[i], FIRST_GIVEN_SECOND, left[i], right[i])
            )
            new_right.append(
                h_function(level[i + 1], SECOND_GIVEN_FIRST, right[i + 1], left[i + 1])
            )
        left, right = new_left, new_right
    return DVineModel(order=tuple(order), edges=tuple(trees), n_cond=n_cond)


def dvine_loglik(model: DVineModel, copula_data) -> float:
    """Log likelihood of the data panel under the model (sum over rows)."""
    u = np.asarray(copula_data, dtype=float)
    d = model.dim
    if u.ndim != 2 or u.shape[1] != d:
        raise ParameterError(f"copula_data must have {d} columns")
    path = u[:, list(model.order)]
    left = [path[:, i] for i in range(d - 1)]
    right = [path[:, i + 1] for i in range(d - 1)]
    total = 0.0
    for t in range(1, d):
        level = model.edges[t - 1]
        for i in range(d - t):
            total += float(np.sum(pair_log_density(level[i], left[i], right[i])))
        if t == d - 1:
            break
        new_left = []
        new_right = []
        for i in range(d - t - 1):
            new_left.append(h_function(level[i], FIRST_GIVEN_SECOND, left[i], right[i]))
            new_right.append(
                h_function(level[i + 1], SECOND_GIVEN_FIRST, right[i + 1], left[i + 1])
            )
        left, right = new_left, new_right
    return total


# ---------------------------------------------------------------------------
# sampling
#
# All three samplers run the same triangular recursion over auxiliary
# columns: v holds the partially inverted coordinates of the current path
# position, prev_v2 the conditional CDFs C(previous position | positions
# between) needed as conditioning values one level deeper. Everything is
# vectorized over the sample axis.
# ---------------------------------------------------------------------------


def _check_ucond(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 < value < 1.0):
        raise ParameterError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


def sample_unconditional(model: DVineModel, n: int, seed) -> np.ndarray:
    """Draw n rows from the model copula; columns follow path positions.

    Column p-1 of the output is the copula value of path position p, i.e.
    of the variable model.order[p-1].
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    d = model.dim
    rng = np.random.default_rng(seed)
    w = rng.random((n, d))
    out = np.empty((n, d))
    out[:, 0] = w[:, 0]
    prev_v2 = {1: w[:, 0]}
    for j in range(2, d + 1):
        v = {j: w[:, j - 1]}
        cur_v2 = {}
        for k in range(j - 1, 0, -1):
            edge = model.edge(k, j - k)
            v[k] = h_inverse(edge, SECOND_GIVEN_FIRST, v[k + 1], prev_v2[k])
            if j < d:
                cur_v2[k + 1] = h_function(edge, FIRST_GIVEN_SECOND, prev_v2[k], v[k])
        out[:, j - 1] = v[1]
        if j < d:
            cur_v2[1] = v[1]
            prev_v2 = cur_v2
    return out


def sample_conditional_one(model: DVineModel, u_cond: float, n: int, seed) -> np.ndarray:
    """Draw n rows of the d non-conditioning coordinates given the rightmost one.

    u_cond is the copula value of the rightmost path variable. Column p-1 of
    the output belongs to path position p (identifier model.order[p-1]); the
    conditioning coordinate is not returned.
    """
    if model.n_cond < 1:
        raise ParameterError("model has no conditioning variable")
    if n < 1:
        raise ParameterError("n must be >= 1")
    u_cond = _check_ucond(u_cond, "u_cond")
    d = model.dim - 1
    rng = np.random.default_rng(seed)
    w = rng.random((n, d))
    out = np.empty((n, d))
    prev_v2 = {1: np.full(n, u_cond)}
    for j in range(2, d + 2):
        a = d + 2 - j
        v = {j: w[:, a - 1]}
        cur_v2 = {}
        for k in range(j - 1, 0, -1):
            edge = model.edge(k, a)
            v[k] = h_inverse(edge, FIRST_GIVEN_SECOND, v[k + 1], prev_v2[k])
            if j < d + 1:
                cur_v2[k + 1] = h_function(edge, SECOND_GIVEN_FIRST, prev_v2[k], v[k])
        out[:, a - 1] = v[1]
        if j < d + 1:
            cur_v2[1] = v[1]
            prev_v2 = cur_v2
    return out


def sample_conditional_two(
    model: DVineModel, u_cond_outer: float, u_cond_inner: float, n: int, seed
) -> np.ndarray:
    """Draw n rows of the d non-conditioning coordinates given the last two.

    u_cond_inner belongs to the second-rightmost path variable, u_cond_outer
    to the rightmost one. The recursion is seeded with the conditional CDF of
    the outer value given the inner one through their tree-1 edge; afterwards
    it proceeds exactly like the single-conditional recursion, skipping the
    auxiliary updates only in the final iteration.
    """
    if model.n_cond != 2:
        raise ParameterError("model must carry exactly two conditioning variables")
    if n < 1:
        raise ParameterError("n must be >= 1")
    outer = _check_ucond(u_cond_outer, "u_cond_outer")
    inner = _check_ucond(u_cond_inner, "u_cond_inner")
    d = model.dim - 2
    rng = np.random.default_rng(seed)
    w = rng.random((n, d))
    out = np.empty((n, d))
    index_edge = model.edge(1, d + 1)
    v2_22 = h_function(
        index_edge, SECOND_GIVEN_FIRST, np.full(n, outer), np.full(n, inner)
    )
    prev_v2 = {1: np.full(n, inner), 2: v2_22}
    for j in range(3, d + 3):
        a = d + 3 - j
        v = {j: w[:, a - 1]}
        cur_v2 = {}
        for k in range(j - 1, 0, -1):
            edge = model.edge(k, a)
            v[k] = h_inverse(edge, FIRST_GIVEN_SECOND, v[k + 1], prev_v2[k])
            if j < d + 2:
                cur_v2[k + 1] = h_function(edge, SECOND_GIVEN_FIRST, prev_v2[k], v[k])
        out[:, a - 1] = v[1]
        if j < d + 2:
            cur_v2[1] = v[1]
            prev_v2 = cur_v2
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: DVineModel) -> dict:
    """JSON-ready representation: order, n_cond, and the edge list."""
    edges = []
    for t, level in enumerate(model.edges, start=1):
        for i, pc in enumerate(level, start=1):
            edges.append(
                {
                    "tree": t,
                    "position": i,
                    "family": pc.family,
                    "rotation": pc.rotation,
                    "params": list(pc.params),
                }
            )
    return {"order": list(model.order), "n_cond": model.n_cond, "edges": edges}


def model_from_dict(doc: dict) -> DVineModel:
    order = tuple(int(x) for x in doc["order"])
    d = len(order)
    levels = [[None] * (d - t) for t in range(1, d)]
    for rec in doc["edges"]:
        t, i = int(rec["tree"]), int(rec["position"])
        levels[t - 1][i - 1] = PairCopula(
            rec["family"], int(rec["rotation"]), tuple(float(p) for p in rec["params"])
        )
    for t, level in enumerate(levels, start=1):
        if any(pc is None for pc in level):
            raise ParameterError(f"edge list incomplete in tree {t}")
    return DVineModel(
        order=order,
        edges=tuple(tuple(level) for level in levels),
        n_cond=int(doc["n_cond"]),
    )
