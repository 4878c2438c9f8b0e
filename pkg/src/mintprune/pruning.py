"""Dependency-driven pruning: group filters, score producer->consumer group
pairs with conditional GMI, threshold into retained sets, and expand the
group decisions into per-connection binary masks.

A layer pair (l, l+1) masks the weight matrix feeding layer l+1: entry
mask[f_out][f_in] is 1 iff the producer group of f_in is retained for the
consumer group of f_out. For convolutional shapes one mask entry governs the
whole kernel between the filter pair (kernel_size in the shape tuples).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InvalidGroupingError, ShapeError
from .gmi import BlockSpec, conditional_gmi, gmi
from .validation import check_sample_matrix, check_same_rows

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One splitmix64 step; the documented 64-bit mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_pair_seed(master_seed: int, layer: int, i: int, j: int) -> int:
    """Deterministic per-cell seed: chained splitmix64 over (seed, l, i, j).

    Guarantees identical scores regardless of the order cells are evaluated
    in, which is what makes parallel table computation safe.
    """
    h = master_seed & _M64
    for v in (layer, i, j):
        h = _splitmix64(h ^ _splitmix64(v & _M64))
    return h


def group_filters(n_filters: int, n_groups: int) -> list[range]:
    """Split [0, N) into G consecutive ranges; the last absorbs the remainder."""
    if n_groups < 1 or n_groups > n_filters:
        raise InvalidGroupingError(
            f"group count {n_groups} invalid for {n_filters} filters"
        )
    size = n_filters // n_groups
    starts = [g * size for g in range(n_groups)]
    ends = starts[1:] + [n_filters]
    return [range(a, b) for a, b in zip(starts, ends)]


@dataclass
class DependencyTable:
    """rho scores for one layer pair: consumer groups x producer groups."""

    layer_pair: tuple[int, int]
    values: np.ndarray  # (G_consumer, G_producer) floats in [0, 1]
    raw_fr_counts: np.ndarray = field(default=None)
    subset_size: int = 0


def compute_dependency_table(
    producer_acts,
    consumer_acts,
    producer_groups: list[range],
    consumer_groups: list[range],
    layer_index: int = 0,
    master_seed: int = 0,
) -> DependencyTable:
    """Score every (consumer group i, producer group j) pair.

    X = producer group-j columns, Y = consumer group-i columns, Z = the
    remaining producer columns; conditional GMI except when the producer has
    a single group (empty complement), where the unconditional estimator is
    used. Each cell gets its own seed from derive_pair_seed.
    """
    P = check_sample_matrix(producer_acts, min_rows=4, name="producer_acts")
    C = check_sample_matrix(consumer_acts, min_rows=4, name="consumer_acts")
    check_same_rows(P, C, ("producer_acts", "consumer_acts"))
    n_prod = P.shape[1]
    gi, gj = len(consumer_groups), len(producer_groups)
    values = np.zeros((gi, gj))
    counts = np.zeros((gi, gj), dtype=np.int64)
    subset = 0
    for i, cg in enumerate(consumer_groups):
        ycols = P.shape[1] + np.arange(cg.start, cg.stop)
        for j, pg in enumerate(producer_groups):
            xcols = np.arange(pg.start, pg.stop)
            zcols = np.array(
                [c for c in range(n_prod) if c not in pg], dtype=np.int64
            )
            # samples carry producer columns first, then the consumer group
            data = np.hstack([P, C[:, list(cg)]])
            ncols = data.shape[1]
            keep = np.concatenate([xcols, np.arange(n_prod, ncols), zcols])
            sub = data[:, keep]
            nx, ny, nz = len(xcols), ncols - n_prod, len(zcols)
            spec = BlockSpec.from_ranges(
                range(nx), range(nx, nx + ny), range(nx + ny, nx + ny + nz)
            )
            seed = derive_pair_seed(master_seed, layer_index, i, j)
            if nz:
                score = conditional_gmi(sub, spec, seed)
            else:
                score = gmi(sub, spec, seed)
            values[i, j] = score.value
            counts[i, j] = score.raw_fr_count
            subset = score.subset_size
    return DependencyTable(
        layer_pair=(layer_index, layer_index + 1),
        values=values,
        raw_fr_counts=counts,
        subset_size=subset,
    )


def apply_threshold(table: DependencyTable, delta: float) -> list[set[int]]:
    """Retained producer-group sets per consumer group: S_i = {j : rho >= delta}."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    return [
        {j for j in range(table.values.shape[1]) if table.values[i, j] >= delta}
        for i in range(table.values.shape[0])
    ]


def gamma_cap(table: DependencyTable, delta: float, gamma: float) -> float:
    """Re-evaluate delta for one layer pair so at most a gamma fraction of
    its group-pair entries is pruned.

    If pruning at delta stays within gamma, delta is returned untouched.
    Otherwise the cap picks the largest threshold from the table's own score
    multiset whose pruned fraction (entries strictly below it) does not
    exceed gamma; ties among equal scores are retained together.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    flat = np.sort(table.values, axis=None)
    k = flat.size
    pruned = int(np.sum(flat < delta))
    if pruned / k <= gamma:
        return delta
    t = int(np.floor(gamma * k))
    return float(flat[t])


def masks_from_retained(
    retained: list[set[int]],
    n_consumer: int,
    n_producer: int,
    consumer_groups: list[range],
    producer_groups: list[range],
) -> np.ndarray:
    """Expand group-level retained sets into an (n_consumer, n_producer)
    binary mask by exact block replication of each group decision."""
    if len(retained) != len(consumer_groups):
        raise ShapeError("one retained set per consumer group required")
    mask = np.zeros((n_consumer, n_producer), dtype=np.uint8)
    for i, cg in enumerate(consumer_groups):
        for j in retained[i]:
            pg = producer_groups[j]
            mask[cg.start : cg.stop, pg.start : pg.stop] = 1
    return mask


def retained_from_mask(
    mask: np.ndarray,
    consumer_groups: list[range],
    producer_groups: list[range],
) -> list[set[int]]:
    """Inverse of masks_from_retained for block-constant masks."""
    out = []
    for cg in consumer_groups:
        s = set()
        for j, pg in enumerate(producer_groups):
            block = mask[cg.start : cg.stop, pg.start : pg.stop]
            if np.all(block == 1):
                s.add(j)
            elif np.any(block == 1):
                raise ShapeError("mask is not block-constant for this grouping")
        out.append(s)
    return out


def _masks_at_delta(tables, delta, gamma, groupings, shapes, skip_pairs):
    masks = []
    deltas = []
    for p, (table, (n_out, n_in, _)) in enumerate(zip(tables, shapes)):
        if p in skip_pairs:
            masks.append(np.ones((n_out, n_in), dtype=np.uint8))
            deltas.append(0.0)
            continue
        d_eff = gamma_cap(table, delta, gamma)
        retained = apply_threshold(table, d_eff)
        masks.append(
            masks_from_retained(
                retained, n_out, n_in, groupings[p + 1], groupings[p]
            )
        )
        deltas.append(d_eff)
    return masks, deltas


def sparsity_report(
    masks: list[np.ndarray],
    shapes: list[tuple[int, int, int]],
    bias_counts: list[int] | None = None,
    extra_params: int = 0,
) -> dict:
    """Pruned-parameter accounting.

    shapes are (n_out, n_in, kernel_size) per masked matrix; each zeroed mask
    entry removes kernel_size weight parameters. Biases count toward the
    total but are never pruned.
    """
    if bias_counts is None:
        bias_counts = [s[0] for s in shapes]
    per_layer = []
    pruned_total = 0
    params_total = extra_params
    for mask, (n_out, n_in, kernel), nb in zip(masks, shapes, bias_counts):
        if mask.shape != (n_out, n_in):
            raise ShapeError(f"mask shape {mask.shape} != ({n_out}, {n_in})")
        weights = n_out * n_in * kernel
        pruned = int(np.sum(mask == 0)) * kernel
        per_layer.append(
            {
                "weights": weights,
                "biases": nb,
                "pruned": pruned,
                "pruned_pct": 100.0 * pruned / weights if weights else 0.0,
            }
        )
        pruned_total += pruned
        params_total += weights + nb
    return {
        "layers": per_layer,
        "pruned": pruned_total,
        "params": params_total,
        "pruned_pct": 100.0 * pruned_total / params_total if params_total else 0.0,
    }


def solve_delta_for_sparsity(
    tables: list[DependencyTable],
    target: float,
    gamma: float,
    shapes: list[tuple[int, int, int]],
    groupings: list[list[range]],
    skip_pairs: set[int] = frozenset(),
    bias_counts: list[int] | None = None,
    extra_params: int = 0,
    iterations: int = 48,
) -> tuple[float, bool]:
    """Binary search for the global delta whose masked pruned fraction is
    closest to the target without exceeding it.

    Returns (delta, warning); warning is True when the target is unreachable
    under the gamma caps and the best achievable delta is returned instead.
    """
    if not 0.0 <= target < 1.0:
        raise ValueError(f"target must lie in [0, 1), got {target}")

    def fraction(delta):
        masks, _ = _masks_at_delta(tables, delta, gamma, groupings, shapes, skip_pairs)
        rep = sparsity_report(masks, shapes, bias_counts, extra_params)
        return rep["pruned"] / rep["params"]

    if fraction(1.0) < target:
        return 1.0, True
    lo, hi = 0.0, 1.0
    best = 0.0
    for _ in range(iterations):
        mid = (lo + hi) / 2
        if fraction(mid) <= target:
            best = mid
            lo = mid
        else:
            hi = mid
    return best, False


class MintPruner(BaseEstimator):
    """Estimator that turns per-layer activation matrices into pruning masks.

    Parameters
    ----------
    groups : list of int
        Group count per activation layer (ordered input to output); length
        must equal the number of activation matrices passed to fit.
    delta : float
        Global score threshold; producer groups scoring below it are pruned.
    gamma : float
        Per-layer-pair cap on the fraction of group pairs pruned.
    target_sparsity : float or None
        When set, delta is solved by binary search for this overall pruned
        parameter fraction and the delta parameter is ignored.
    skip_pairs : set of int
        Layer-pair indices that always receive all-ones masks.
    master_seed : int
        Root of all per-cell estimator seeds.

    After fit: tables_, deltas_ (effective per pair), retained_, masks_,
    report_.
    """

    def __init__(
        self,
        groups=None,
        delta=0.645,
        gamma=0.9,
        target_sparsity=None,
        skip_pairs=frozenset(),
        master_seed=0,
    ):
        self.groups = groups
        self.delta = delta
        self.gamma = gamma
        self.target_sparsity = target_sparsity
        self.skip_pairs = skip_pairs
        self.master_seed = master_seed

    def fit(self, activations, y=None):
        acts = [check_sample_matrix(a, min_rows=4) for a in activations]
        if len(acts) < 2:
            raise ShapeError("need at least two activation layers")
        groups = self.groups or [min(8, a.shape[1]) for a in acts]
        if len(groups) != len(acts):
            raise ShapeError("one group count per activation layer required")
        self.groupings_ = [group_filters(a.shape[1], g) for a, g in zip(acts, groups)]
        skip = set(self.skip_pairs)
        shapes = [
            (acts[p + 1].shape[1], acts[p].shape[1], 1) for p in range(len(acts) - 1)
        ]
        self.tables_ = []
        for p in range(len(acts) - 1):
            if p in skip:
                n_out, n_in, _ = shapes[p]
                self.tables_.append(
                    DependencyTable(
                        layer_pair=(p, p + 1),
                        values=np.ones((len(self.groupings_[p + 1]), len(self.groupings_[p]))),
                    )
                )
                continue
            self.tables_.append(
                compute_dependency_table(
                    acts[p],
                    acts[p + 1],
                    self.groupings_[p],
                    self.groupings_[p + 1],
                    layer_index=p,
                    master_seed=self.master_seed,
                )
            )
        if self.target_sparsity is not None:
            delta, warn = solve_delta_for_sparsity(
                self.tables_,
                self.target_sparsity,
                self.gamma,
                shapes,
                self.groupings_,
                skip,
            )
            self.solved_delta_ = delta
            self.target_warning_ = warn
        else:
            self.solved_delta_ = self.delta
            self.target_warning_ = False
        self.masks_, self.deltas_ = _masks_at_delta(
            self.tables_, self.solved_delta_, self.gamma, self.groupings_, shapes, skip
        )
        self.retained_ = [
            retained_from_mask(m, self.groupings_[p + 1], self.groupings_[p])
            for p, m in enumerate(self.masks_)
        ]
        self.report_ = sparsity_report(self.masks_, shapes)
        return self

    def transform(self, model):
        """Apply the fitted masks to a dense model (see network.apply_mask)."""
        from .network import apply_mask

        return apply_mask(model, self.masks_)
