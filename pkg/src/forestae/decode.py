"""Decoders: map latent vectors back to feature space.

Four routes with different cost/accuracy trade-offs:

* k-NN regression against a synthetic training set that embeds exactly onto Z;
* split relabeling, turning the fitted trees into routers over the embedding;
* an exclusive-lasso relaxation scoring fuzzy leaf memberships, hardened by a
  greedy clique-repair pass;
* exact enumeration of the leaf-assignment program for desk-scale forests.

All decoders emit schema-conformant tables; rows are independent, so query
batches can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Table
from .forest import (
    Forest,
    Region,
    assigned_regions,
    leaf_region,
    node_region,
    region_intersect,
    region_sample,
    regions_empty,
    route_table,
    route_values,
    sample_region_rows,
    sample_regions,
    tree_leaf_arrays,
)
from .kernel import LeafProfile, cross_from_values, profile_from_ids
from .spectral import SpectralModel, nystrom_embed, reconstruct_kernel

__all__ = [
    "SyntheticTrainingSet",
    "NeighborSet",
    "FuzzyAssignment",
    "GreedyResult",
    "IlpResult",
    "RelabeledForest",
    "build_synthetic_training",
    "knn_neighbors",
    "knn_decode",
    "relabel_forest",
    "relabel_decode",
    "exclusive_lasso",
    "greedy_leaf_assign",
    "lasso_decode",
    "ilp_decode_exact",
]

_ZERO_DIST_EPS = 1e-12
_SWEEP_TOL = 1e-8
_MAX_SWEEPS = 10_000
_KDTREE_MAX_DIM = 20
_ILP_MAX_COMBINATIONS = 10**6
_TIE_TOL = 1e-12


class DecodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# synthetic training set


@dataclass
class SyntheticTrainingSet:
    """Stand-in training rows drawn from each sample's assigned-leaf cell.

    Routes identically to the originals by construction, so it shares their
    kernel rows and embedding.
    """

    table: Table
    leaf_ids: np.ndarray  # (n, B) local leaf ids, same as the source rows
    seed: int

    @property
    def n(self) -> int:
        return self.table.n


def build_synthetic_training(forest: Forest, table: Table, seed: int) -> SyntheticTrainingSet:
    leaf_ids, _ = route_table(forest, table)
    lo, hi, open_, masks = assigned_regions(forest, leaf_ids)
    empty = regions_empty(lo, hi, open_, masks)
    assert not empty.any(), "training row with empty leaf intersection"
    rng = np.random.default_rng(seed)
    values = sample_regions(forest, lo, hi, open_, masks, rng)
    synth = Table(table.schema, values)
    check, _ = route_table(forest, synth)
    assert np.array_equal(check, leaf_ids), "synthetic row escaped its source regions"
    return SyntheticTrainingSet(table=synth, leaf_ids=leaf_ids, seed=seed)


# ---------------------------------------------------------------------------
# k-nearest neighbors


@dataclass
class NeighborSet:
    indices: np.ndarray  # ascending distance
    distances: np.ndarray
    weights: np.ndarray  # simplex, non-increasing in distance


def _knn_batch(Z0: np.ndarray, Z: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    if Z.shape[1] <= _KDTREE_MAX_DIM:
        dist, idx = cKDTree(Z).query(Z0, k=k)
    else:
        d2 = ((Z0[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
        dist = np.sqrt(np.take_along_axis(d2, idx, axis=1))
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    return idx, dist


def _inverse_distance_weights(dist: np.ndarray) -> np.ndarray:
    w = 1.0 / (dist + _ZERO_DIST_EPS)
    exact = dist == 0.0
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(np.float64)
    return w / w.sum(axis=1, keepdims=True)


def knn_neighbors(z0: np.ndarray, Z: np.ndarray, k: int) -> NeighborSet:
    """The k nearest training embeddings, weighted inversely to distance.

    Exact matches (zero distance) absorb all the weight, split equally.
    """
    if not 1 <= k <= Z.shape[0]:
        raise DecodeError(f"k must lie in [1, {Z.shape[0]}]")
    idx, dist = _knn_batch(np.atleast_2d(z0), Z, k)
    w = _inverse_distance_weights(dist)
    return NeighborSet(indices=idx[0], distances=dist[0], weights=w[0])


def knn_decode(
    Z0: np.ndarray,
    model: SpectralModel,
    forest: Forest,
    synth: SyntheticTrainingSet,
    k: int,
    seed: int = 0,
) -> Table:
    """Weighted neighbor average: continuous features take the weighted mean
    of synthetic neighbor values, categorical ones the weight-summed majority
    level (ties broken uniformly at random).
    """
    _, Z = model.require_time()
    if not 1 <= k <= Z.shape[0]:
        raise DecodeError(f"k must lie in [1, {Z.shape[0]}]")
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=np.float64))
    idx, dist = _knn_batch(Z0, Z, k)
    w = _inverse_distance_weights(dist)
    rng = np.random.default_rng(seed)
    vals = synth.table.values[idx]  # (m, k, d)
    m = Z0.shape[0]
    out = np.empty((m, synth.table.d))
    for j, col in enumerate(synth.table.schema.columns):
        if not col.is_categorical:
            out[:, j] = (w * vals[:, :, j]).sum(axis=1)
            continue
        n_levels = len(col.levels)
        scores = np.zeros((m, n_levels))
        rows = np.repeat(np.arange(m), k)
        np.add.at(scores, (rows, vals[:, :, j].astype(np.intp).ravel()), w.ravel())
        best = scores.max(axis=1, keepdims=True)
        ties = scores >= best - _TIE_TOL
        pick = np.argmax(ties, axis=1).astype(np.float64)
        multi = ties.sum(axis=1) > 1
        for i in np.flatnonzero(multi):
            pick[i] = rng.choice(np.flatnonzero(ties[i]))
        out[:, j] = pick
    return Table(synth.table.schema, out)


# ---------------------------------------------------------------------------
# split relabeling


@dataclass
class RelabeledTree:
    """Same topology as the source tree, but splits test embedding axes.

    ``flip`` inverts a node's routing (z < threshold goes right) when the
    best-matching latent split runs opposite to the original literal.
    """

    feature: np.ndarray
    threshold: np.ndarray
    flip: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    smc: np.ndarray  # per-node split agreement on the synthetic draws


@dataclass
class RelabeledForest:
    trees: list[RelabeledTree]
    d_z: int
    n_degenerate: int


def _best_latent_split(Z0: np.ndarray, labels: np.ndarray):
    """(dim, threshold, flip, matches) maximizing agreement with labels."""
    m = Z0.shape[0]
    n1 = int(labels.sum())
    best = None
    for kdim in range(Z0.shape[1]):
        z = Z0[:, kdim]
        order = np.argsort(z, kind="stable")
        zs = z[order]
        valid = zs[:-1] < zs[1:]
        if not valid.any():
            continue
        cum1 = np.cumsum(labels[order].astype(np.int64))[:-1]
        sizes = np.arange(1, m)
        matches = 2 * cum1 - sizes + (m - n1)
        matches = np.where(valid, matches, -1)
        agree = np.maximum(matches, m - matches)
        agree = np.where(valid, agree, -1)
        i = int(np.argmax(agree))
        if best is None or agree[i] > best[3]:
            flip = (m - matches[i]) > matches[i]
            best = (kdim, 0.5 * (zs[i] + zs[i + 1]), bool(flip), int(agree[i]))
    return best


def relabel_forest(
    forest: Forest,
    model: SpectralModel,
    synth: SyntheticTrainingSet,
    n_synth: int = 256,
    seed: int = 0,
) -> RelabeledForest:
    """Re-express every split in embedding coordinates.

    Per internal node: draw ``n_synth`` rows uniformly from the node's region,
    embed them through the cross kernel + out-of-sample extension, label each
    by the original split literal, and install the latent axis/threshold with
    the highest simple matching coefficient. Nodes whose draws all route one
    way get a constant split toward the majority side (counted).
    """
    profile = profile_from_ids(forest, synth.leaf_ids)
    rng = np.random.default_rng(seed)
    degenerate = 0
    out_trees = []
    for b, tree in enumerate(forest.trees):
        feat = np.full(tree.n_nodes, -1, dtype=np.int32)
        thr = np.zeros(tree.n_nodes)
        flip = np.zeros(tree.n_nodes, dtype=bool)
        smc = np.full(tree.n_nodes, np.nan)
        for idx in range(tree.n_nodes):
            if tree.left[idx] < 0:
                continue
            region = node_region(forest, b, idx)
            draws = sample_region_rows(region, n_synth, rng)
            col = draws[:, tree.feature[idx]]
            labels = (col == tree.threshold[idx]) if tree.is_equal[idx] else (
                col < tree.threshold[idx]
            )
            n_left = int(labels.sum())
            best = None
            if 0 < n_left < n_synth:
                K0 = cross_from_values(forest, draws, profile, strict=False)
                Z0 = nystrom_embed(K0, model)
                best = _best_latent_split(Z0, labels)
            if best is None:
                # constant split: +inf sends everything left, -inf right
                feat[idx] = 0
                thr[idx] = np.inf if n_left * 2 >= n_synth else -np.inf
                smc[idx] = max(n_left, n_synth - n_left) / n_synth
                degenerate += 1
                continue
            feat[idx], thr[idx], flip[idx] = best[0], best[1], best[2]
            smc[idx] = best[3] / n_synth
        out_trees.append(
            RelabeledTree(
                feature=feat,
                threshold=thr,
                flip=flip,
                left=tree.left.copy(),
                right=tree.right.copy(),
                leaf_id=tree.leaf_id.copy(),
                smc=smc,
            )
        )
    return RelabeledForest(trees=out_trees, d_z=model.d_z, n_degenerate=degenerate)


def route_relabeled(relabeled: RelabeledForest, Z0: np.ndarray) -> np.ndarray:
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=np.float64))
    out = np.empty((Z0.shape[0], len(relabeled.trees)), dtype=np.int32)
    for b, tree in enumerate(relabeled.trees):
        node = np.zeros(Z0.shape[0], dtype=np.int32)
        while True:
            active = tree.left[node] >= 0
            if not active.any():
                break
            idx = np.flatnonzero(active)
            f = tree.feature[node[idx]]
            go_left = (Z0[idx, f] < tree.threshold[node[idx]]) ^ tree.flip[node[idx]]
            node[idx] = np.where(go_left, tree.left[node[idx]], tree.right[node[idx]])
        out[:, b] = tree.leaf_id[node]
    return out


def relabel_decode(
    relabeled: RelabeledForest,
    original: Forest,
    Z0: np.ndarray,
    seed: int = 0,
) -> Table:
    """Route embeddings through the relabeled trees, then sample from the
    intersection of the original forest's corresponding leaf regions. Empty
    intersections fall back to greedy repair seeded with the assignments.
    """
    leaf_ids = route_relabeled(relabeled, Z0)
    lo, hi, open_, masks = assigned_regions(original, leaf_ids)
    empty = regions_empty(lo, hi, open_, masks)
    rng = np.random.default_rng(seed)
    values = np.empty((leaf_ids.shape[0], original.schema.n_columns))
    good = ~empty
    if good.any():
        values[good] = sample_regions(
            original, lo[good], hi[good], open_[good],
            {j: m[good] for j, m in masks.items()}, rng,
        )
    offsets = original.leaf_offsets
    for i in np.flatnonzero(empty):
        fuzzy = FuzzyAssignment(
            values=np.ones(original.n_trees),
            leaf_ids=leaf_ids[i].astype(np.int64) + offsets,
            groups=np.arange(original.n_trees),
        )
        res = greedy_leaf_assign(fuzzy, original, seed=int(rng.integers(2**31)))
        region = region_intersect(
            [leaf_region(original, b, int(l)) for b, l in enumerate(res.assignment)]
        )
        values[i] = region_sample(region, rng)
    return Table(original.schema, values)


# ---------------------------------------------------------------------------
# exclusive lasso + greedy assignment


@dataclass
class FuzzyAssignment:
    """Soft leaf memberships over a reduced leaf set, grouped by tree."""

    values: np.ndarray  # in [0, 1]
    leaf_ids: np.ndarray  # global leaf indices
    groups: np.ndarray  # tree index per entry
    converged: bool = True
    objective: float = 0.0
    sweeps: int = 0


def exclusive_lasso(
    phi_reduced: np.ndarray,
    s_reduced: np.ndarray,
    khat_row: np.ndarray,
    lam: float,
    groups: np.ndarray,
) -> tuple[np.ndarray, bool, float, list[float]]:
    """Box-constrained coordinate descent for the grouped squared-l1 penalty.

    Minimizes ||B khat - Phi S psi||^2 + lam * sum_trees (sum_leaves psi)^2
    over psi in [0,1]^d. Each coordinate step solves its quadratic exactly
    against the current group sum, then clips, so the objective never
    increases. Sweeps run in column order until the largest coordinate change
    drops below 1e-8 (or 10^4 sweeps). Returns (psi, converged, objective,
    per-sweep objective history).
    """
    if lam <= 0:
        raise DecodeError("penalty weight must be positive")
    A = phi_reduced * s_reduced[None, :]
    y = np.asarray(khat_row, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise DecodeError("non-finite kernel estimates")
    d = A.shape[1]
    col_sq = (A * A).sum(axis=0)
    psi = np.zeros(d)
    resid = y.copy()
    gsum = np.zeros(int(groups.max()) + 1)
    converged = False
    history: list[float] = []
    for _ in range(_MAX_SWEEPS):
        max_delta = 0.0
        for l in range(d):
            g = groups[l]
            c = gsum[g] - psi[l]
            rho = A[:, l] @ resid + col_sq[l] * psi[l] - lam * c
            new = min(1.0, max(0.0, rho / (col_sq[l] + lam)))
            delta = new - psi[l]
            if delta != 0.0:
                resid -= A[:, l] * delta
                gsum[g] += delta
                psi[l] = new
                max_delta = max(max_delta, abs(delta))
        history.append(float(resid @ resid + lam * float(gsum @ gsum)))
        if max_delta < _SWEEP_TOL:
            converged = True
            break
    return psi, converged, history[-1], history


@dataclass
class GreedyResult:
    assignment: np.ndarray  # (B,) local leaf ids
    rounds: int
    repaired: bool


def _bron_kerbosch_pivot(adj: np.ndarray) -> list[frozenset]:
    """All maximal cliques (deterministic order) with pivoting."""
    n = adj.shape[0]
    nbrs = [frozenset(np.flatnonzero(adj[v]).tolist()) - {v} for v in range(n)]
    cliques: list[frozenset] = []

    def expand(r: set, p: set, x: set) -> None:
        if not p and not x:
            cliques.append(frozenset(r))
            return
        pivot = max(sorted(p | x), key=lambda u: len(p & nbrs[u]))
        for v in sorted(p - nbrs[pivot]):
            expand(r | {v}, p & nbrs[v], x & nbrs[v])
            p.remove(v)
            x.add(v)

    expand(set(), set(range(n)), set())
    return cliques


class _Box:
    """Mutable region arrays used inside the greedy loop."""

    __slots__ = ("lo", "hi", "open", "masks")

    def __init__(self, lo, hi, open_, masks):
        self.lo, self.hi, self.open, self.masks = lo, hi, open_, masks


def _leaf_intersects(leaf_arrays, box: _Box) -> np.ndarray:
    lo, hi, open_, masks = leaf_arrays
    L = np.maximum(lo, box.lo[None, :])
    H = np.minimum(hi, box.hi[None, :])
    Hopen = np.where(
        hi < box.hi[None, :], open_, np.where(hi == box.hi[None, :], open_ | box.open, box.open)
    )
    ok = ~np.any((L > H) | ((L == H) & Hopen), axis=1)
    for j, m in masks.items():
        ok &= (m & box.masks[j][None, :]).any(axis=1)
    return ok


def _intersect_picks(leaf_arrays_list, picks, members) -> _Box | None:
    lo = None
    for b in members:
        llo, lhi, lopen, lmasks = leaf_arrays_list[b]
        i = picks[b]
        if lo is None:
            lo, hi = llo[i].copy(), lhi[i].copy()
            open_ = lopen[i].copy()
            masks = {j: m[i].copy() for j, m in lmasks.items()}
            continue
        tighter = lhi[i] < hi
        open_ = np.where(tighter, lopen[i], np.where(lhi[i] == hi, open_ | lopen[i], open_))
        hi = np.minimum(hi, lhi[i])
        lo = np.maximum(lo, llo[i])
        for j in masks:
            masks[j] &= lmasks[j][i]
    box = _Box(lo, hi, open_, masks)
    if np.any((box.lo > box.hi) | ((box.lo == box.hi) & box.open)):
        return None
    for m in box.masks.values():
        if not m.any():
            return None
    return box


def _sample_box(forest: Forest, box: _Box, rng) -> np.ndarray:
    return sample_regions(
        forest,
        box.lo[None, :],
        box.hi[None, :],
        box.open[None, :],
        {j: m[None, :] for j, m in box.masks.items()},
        rng,
    )[0]


def greedy_leaf_assign(p_hat: FuzzyAssignment, forest: Forest, seed: int = 0) -> GreedyResult:
    """Harden fuzzy leaf scores into consistent one-hot-per-tree assignments.

    Each round picks, per tree, the highest-scoring leaf intersecting the
    current feasible region, builds the pairwise-overlap graph over trees, and
    either stops (complete graph) or shrinks the feasible region to a maximal
    clique's common cell. Ties and clique choices are uniform (seeded). If the
    final assignment has no common cell (possible with categorical level
    sets), a consistent assignment is repaired by routing a point sampled from
    the last feasible region; the repair is flagged.
    """
    rng = np.random.default_rng(seed)
    B = forest.n_trees
    offsets = forest.leaf_offsets
    p_full = []
    for b, tree in enumerate(forest.trees):
        p = np.zeros(tree.n_leaves)
        sel = p_hat.groups == b
        if sel.any():
            p[(p_hat.leaf_ids[sel] - offsets[b]).astype(np.intp)] = p_hat.values[sel]
        if p.sum() == 0:
            p[:] = 1.0 / tree.n_leaves
        p_full.append(p)
    leaf_arrays = [tree_leaf_arrays(forest, b) for b in range(B)]

    from .forest import _full_box

    root = _full_box(forest)
    box = _Box(root.lo, root.hi, root.hi_open, root.masks)
    cap = B * max(t.n_leaves for t in forest.trees)
    picks = np.zeros(B, dtype=np.int64)
    rounds = 0
    while rounds < cap:
        rounds += 1
        for b in range(B):
            ok = _leaf_intersects(leaf_arrays[b], box)
            vals = np.where(ok, p_full[b], -np.inf)
            top = vals.max()
            tied = np.flatnonzero(vals == top)
            picks[b] = tied[0] if tied.shape[0] == 1 else tied[rng.integers(tied.shape[0])]
        adj = _pairwise_overlap(leaf_arrays, picks)
        if adj.all():
            break
        np.fill_diagonal(adj, True)
        cliques = _bron_kerbosch_pivot(adj)
        if len(cliques) == 1:
            members = sorted(cliques[0])
        else:
            common = frozenset.intersection(*cliques)
            if common:
                members = sorted(common)
            else:
                members = sorted(cliques[rng.integers(len(cliques))])
        new_box = _intersect_picks(leaf_arrays, picks, members)
        if new_box is None:
            break  # categorical sets broke pairwise-implies-common; repair below
        box = new_box

    final = _intersect_picks(leaf_arrays, picks, range(B))
    if final is not None:
        return GreedyResult(assignment=picks.copy(), rounds=rounds, repaired=False)
    x = _sample_box(forest, box, rng)
    repaired = route_values(forest, x[None, :])[0].astype(np.int64)
    return GreedyResult(assignment=repaired, rounds=rounds, repaired=True)


def _pairwise_overlap(leaf_arrays, picks) -> np.ndarray:
    B = len(leaf_arrays)
    d = leaf_arrays[0][0].shape[1]
    lo = np.empty((B, d))
    hi = np.empty((B, d))
    open_ = np.empty((B, d), dtype=bool)
    for b in range(B):
        llo, lhi, lopen, _ = leaf_arrays[b]
        lo[b], hi[b], open_[b] = llo[picks[b]], lhi[picks[b]], lopen[picks[b]]
    L = np.maximum(lo[:, None, :], lo[None, :, :])
    H = np.minimum(hi[:, None, :], hi[None, :, :])
    Hopen = np.where(
        hi[:, None, :] < hi[None, :, :],
        open_[:, None, :],
        np.where(
            hi[:, None, :] > hi[None, :, :],
            open_[None, :, :],
            open_[:, None, :] | open_[None, :, :],
        ),
    )
    ok = ~np.any((L > H) | ((L == H) & Hopen), axis=2)
    masks0 = leaf_arrays[0][3]
    for j in masks0:
        M = np.stack([leaf_arrays[b][3][j][picks[b]] for b in range(B)])
        ok &= (M[:, None, :] & M[None, :, :]).any(axis=2)
    return ok


def lasso_decode(
    Z0: np.ndarray,
    model: SpectralModel,
    forest: Forest,
    synth: SyntheticTrainingSet,
    lam: float = 1e-4,
    sparsity_cap: int = 100,
    seed: int = 0,
) -> Table:
    """Reconstruct kernel rows, reduce to the strongest neighbors, solve the
    exclusive lasso over the leaves those neighbors touch, harden greedily,
    and sample from the assigned-leaf intersection.
    """
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=np.float64))
    khat_all = reconstruct_kernel(Z0, model)
    pi = synth.leaf_ids
    profile = profile_from_ids(forest, pi)
    counts_flat = profile.counts_flat.astype(np.float64)
    offsets = forest.leaf_offsets
    rng = np.random.default_rng(seed)
    B = forest.n_trees
    values = np.empty((Z0.shape[0], forest.schema.n_columns))
    for i in range(Z0.shape[0]):
        khat = khat_all[i]
        nz = np.flatnonzero(np.abs(khat) > 0)
        order = nz[np.argsort(-np.abs(khat[nz]), kind="stable")]
        neighbors = np.sort(order[: min(sparsity_cap, order.shape[0])])
        if neighbors.size == 0:
            neighbors = np.arange(min(sparsity_cap, khat.shape[0]))
        cols: list[np.ndarray] = []
        groups: list[np.ndarray] = []
        for b in range(B):
            leaves = np.unique(pi[neighbors, b])
            cols.append(leaves.astype(np.int64) + offsets[b])
            groups.append(np.full(leaves.shape[0], b))
        col_ids = np.concatenate(cols)
        group_ids = np.concatenate(groups)
        full_ids = pi[neighbors].astype(np.int64) + offsets[None, :]
        phi = (full_ids[:, None, :] == col_ids[None, :, None]).any(axis=2).astype(np.float64)
        s_red = 1.0 / counts_flat[col_ids]
        psi, converged, objective, history = exclusive_lasso(
            phi, s_red, B * khat[neighbors], lam, group_ids
        )
        fuzzy = FuzzyAssignment(
            values=psi,
            leaf_ids=col_ids,
            groups=group_ids,
            converged=converged,
            objective=objective,
            sweeps=len(history),
        )
        res = greedy_leaf_assign(fuzzy, forest, seed=int(rng.integers(2**31)))
        region = region_intersect(
            [leaf_region(forest, b, int(l)) for b, l in enumerate(res.assignment)]
        )
        values[i] = region_sample(region, rng)
    return Table(forest.schema, values)


# ---------------------------------------------------------------------------
# exact enumeration


@dataclass
class IlpResult:
    assignment: np.ndarray  # lexicographically first optimum
    objective: float
    n_optima: int
    optima: list[np.ndarray]

    @property
    def tie(self) -> bool:
        return self.n_optima > 1


def ilp_decode_exact(khat_row: np.ndarray, forest: Forest, pi: np.ndarray) -> IlpResult:
    """Exact minimizer of the leaf-assignment program for one kernel row.

    Depth-first enumeration over per-tree leaves, pruning branches whose
    partial region intersection is already empty; exact l1 objective against
    B * khat over the training rows. Ties are reported and broken by
    lexicographic leaf order.
    """
    B = forest.n_trees
    sizes = [t.n_leaves for t in forest.trees]
    combos = 1
    for s in sizes:
        combos *= s
        if combos > _ILP_MAX_COMBINATIONS:
            raise DecodeError(
                "assignment space exceeds the exact-enumeration budget; "
                "use lasso_decode for forests this large"
            )
    n = pi.shape[0]
    target = B * np.asarray(khat_row, dtype=np.float64)
    if target.shape[0] != n:
        raise DecodeError("kernel row length must match training assignments")
    members: list[list[np.ndarray]] = []
    svals: list[np.ndarray] = []
    regions: list[list[Region]] = []
    for b in range(B):
        counts = np.bincount(pi[:, b], minlength=sizes[b])
        svals.append(np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0))
        members.append([np.flatnonzero(pi[:, b] == l) for l in range(sizes[b])])
        regions.append([leaf_region(forest, b, l) for l in range(sizes[b])])

    acc = np.zeros(n)
    current = np.zeros(B, dtype=np.int64)
    best: dict = {"obj": np.inf, "assign": None, "n": 0, "optima": []}

    def descend(b: int, region: Region | None) -> None:
        if b == B:
            obj = float(np.abs(target - acc).sum())
            if obj < best["obj"] - _TIE_TOL:
                best["obj"] = obj
                best["assign"] = current.copy()
                best["n"] = 1
                best["optima"] = [current.copy()]
            elif abs(obj - best["obj"]) <= _TIE_TOL:
                best["n"] += 1
                if len(best["optima"]) < 8:
                    best["optima"].append(current.copy())
            return
        for l in range(sizes[b]):
            nxt = regions[b][l] if region is None else region_intersect([region, regions[b][l]])
            if nxt.is_empty():
                continue
            current[b] = l
            acc[members[b][l]] += svals[b][l]
            descend(b + 1, nxt)
            acc[members[b][l]] -= svals[b][l]
        return

    descend(0, None)
    if best["assign"] is None:
        raise DecodeError("no feasible leaf assignment: every combination has empty overlap")
    return IlpResult(
        assignment=best["assign"],
        objective=best["obj"],
        n_optima=best["n"],
        optima=best["optima"],
    )
