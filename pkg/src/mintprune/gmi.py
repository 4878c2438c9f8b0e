"""Graph-based estimation of geometric mutual information (GMI).

The dependency measure used throughout the toolkit is the p = q = 1/2
geometric mutual information

    I(X;Y) = 1 - 2 * double-integral  f_xy * f_x * f_y / (f_xy + f_x * f_y)

which lies in [0, 1], vanishes under independence, and is estimable without
density estimates: merge joint samples with product (or conditionally
independent) surrogate samples, build a Euclidean minimum spanning tree, and
count dichotomous edges (the Friedman-Rafsky statistic R). With n joint and
n surrogate points, R/(2n) converges to the integral above, so

    I_hat = 1 - R / n        (clamped to [0, 1]).

The conditional variant replaces the product surrogate with a
nearest-neighbor bootstrap on the conditioning block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DegenerateLabelsError, InsufficientSamplesError, ShapeError
from .validation import check_rng, check_sample_matrix


@dataclass(frozen=True)
class BlockSpec:
    """Partition of the columns of a sample matrix into X, Y and Z blocks.

    Blocks are stored as tuples of column indices. z_dims may be empty
    (unconditional case); the three blocks must be disjoint and together
    cover every column of the matrix they are applied to.
    """

    x_dims: tuple[int, ...]
    y_dims: tuple[int, ...]
    z_dims: tuple[int, ...] = ()

    @classmethod
    def from_ranges(cls, x: range, y: range, z: range = range(0)) -> "BlockSpec":
        return cls(tuple(x), tuple(y), tuple(z))

    def validate(self, n_cols: int) -> None:
        blocks = (self.x_dims, self.y_dims, self.z_dims)
        all_dims = [d for b in blocks for d in b]
        if len(set(all_dims)) != len(all_dims):
            raise ShapeError("block column ranges overlap")
        if sorted(all_dims) != list(range(n_cols)):
            raise ShapeError(
                f"blocks cover {len(all_dims)} columns, matrix has {n_cols}"
            )
        if not self.x_dims or not self.y_dims:
            raise ShapeError("x and y blocks must be nonempty")


@dataclass
class EdgeList:
    """A spanning tree as (a, b, weight) triples over node_count points."""

    edges: list[tuple[int, int, float]]
    node_count: int


@dataclass
class DependencyScore:
    """A single rho score with its raw tree statistic."""

    value: float
    raw_fr_count: int
    subset_size: int


def standardize(samples) -> np.ndarray:
    """Center each column and scale to unit population standard deviation.

    Zero-variance columns become all-zero instead of dividing by zero.
    """
    X = check_sample_matrix(samples, min_rows=2)
    mean = X.mean(axis=0)
    std = X.std(axis=0)  # population (ddof=0) by convention
    out = X - mean
    nonzero = std > 0
    out[:, nonzero] /= std[nonzero]
    out[:, ~nonzero] = 0.0
    return out


def euclidean_mst(points) -> EdgeList:
    """Exact Euclidean MST via dense Prim's algorithm, O(m^2).

    Deterministic: the next node is the unvisited one with the smallest
    attachment distance (lowest index on ties), and a node's parent is only
    replaced by a strictly closer one.
    """
    X = check_sample_matrix(points, min_rows=2, name="points")
    m = X.shape[0]
    dist = cdist(X, X)
    in_tree = np.zeros(m, dtype=bool)
    best = np.full(m, np.inf)
    parent = np.full(m, -1, dtype=np.int64)
    in_tree[0] = True
    best[0] = 0.0
    np.copyto(best, dist[0], where=~in_tree)
    parent[~in_tree] = 0
    edges: list[tuple[int, int, float]] = []
    masked = best.copy()
    masked[in_tree] = np.inf
    for _ in range(m - 1):
        nxt = int(np.argmin(masked))
        p = int(parent[nxt])
        a, b = (p, nxt) if p < nxt else (nxt, p)
        edges.append((a, b, float(best[nxt])))
        in_tree[nxt] = True
        masked[nxt] = np.inf
        closer = dist[nxt] < best
        closer &= ~in_tree
        best[closer] = dist[nxt][closer]
        parent[closer] = nxt
        masked[closer] = best[closer]
    return EdgeList(edges=edges, node_count=m)


def fr_statistic(tree: EdgeList, origins) -> int:
    """Friedman-Rafsky statistic: MST edges joining points of different origin."""
    labels = np.asarray(origins)
    if labels.shape[0] != tree.node_count:
        raise ShapeError(
            f"{labels.shape[0]} labels for a tree over {tree.node_count} nodes"
        )
    if len(np.unique(labels)) < 2:
        raise DegenerateLabelsError("both origin tags must be present")
    return int(sum(1 for a, b, _ in tree.edges if labels[a] != labels[b]))


def nn_bootstrap(s2, spec: BlockSpec, seed=None) -> np.ndarray:
    """Conditionally independent surrogate of s2.

    Each row's Y block is replaced by the Y block of the row whose Z block is
    its nearest Euclidean neighbor (self excluded, ties to the lowest row
    index). X and Z blocks are returned unchanged. Deterministic; the seed
    argument exists for signature symmetry with permute_product.
    """
    X = check_sample_matrix(s2, min_rows=2)
    spec.validate(X.shape[1])
    if not spec.z_dims:
        raise ShapeError("nn_bootstrap requires a nonempty z block")
    z = X[:, list(spec.z_dims)]
    dist = cdist(z, z)
    np.fill_diagonal(dist, np.inf)
    nearest = np.argmin(dist, axis=1)  # argmin takes the lowest index on ties
    out = X.copy()
    ycols = list(spec.y_dims)
    out[:, ycols] = X[nearest][:, ycols]
    return out


def permute_product(s2, spec: BlockSpec, seed=None) -> np.ndarray:
    """Surrogate with the Y block permuted uniformly across rows.

    Breaks the X-Y coupling while preserving both marginals exactly; this is
    the unconditional counterpart of nn_bootstrap.
    """
    X = check_sample_matrix(s2, min_rows=2)
    spec.validate(X.shape[1])
    rng = check_rng(seed)
    perm = rng.permutation(X.shape[0])
    out = X.copy()
    ycols = list(spec.y_dims)
    out[:, ycols] = X[perm][:, ycols]
    return out


def _estimate(samples, spec: BlockSpec, seed, conditional: bool) -> DependencyScore:
    X = check_sample_matrix(samples, min_rows=4)
    spec.validate(X.shape[1])
    rng = check_rng(seed)
    m = X.shape[0]
    if m % 2 == 1:
        drop = int(rng.integers(m))
        X = np.delete(X, drop, axis=0)
        m -= 1
    perm = rng.permutation(m)
    n = m // 2
    s1 = X[perm[:n]]
    s2 = X[perm[n:]]
    if conditional:
        s2_bar = nn_bootstrap(s2, spec, rng)
    else:
        s2_bar = permute_product(s2, spec, rng)
    merged = standardize(np.vstack([s1, s2_bar]))
    if conditional:
        cols = list(spec.x_dims) + list(spec.y_dims) + list(spec.z_dims)
    else:
        cols = list(spec.x_dims) + list(spec.y_dims)
    tree = euclidean_mst(merged[:, cols])
    labels = np.concatenate([np.zeros(n, dtype=np.int8), np.ones(n, dtype=np.int8)])
    r = fr_statistic(tree, labels)
    value = float(np.clip(1.0 - r / n, 0.0, 1.0))
    return DependencyScore(value=value, raw_fr_count=r, subset_size=n)


def gmi(samples, spec: BlockSpec, seed=None) -> DependencyScore:
    """Unconditional GMI estimate between the X and Y blocks.

    Rows are split into seeded halves S1/S2 (odd row counts drop one seeded
    row), S2's Y block is permuted to form the product surrogate, the merged
    set is standardized, and the FR statistic over the Euclidean MST of the
    (X, Y) columns yields I_hat = clamp(1 - R/n, 0, 1) with n = |S1|.
    """
    if spec.z_dims:
        raise ShapeError("gmi expects an empty z block; use conditional_gmi")
    return _estimate(samples, spec, seed, conditional=False)


def conditional_gmi(samples, spec: BlockSpec, seed=None) -> DependencyScore:
    """Conditional GMI estimate of X and Y given Z.

    Same pipeline as gmi except the surrogate comes from the nearest-neighbor
    bootstrap on Z and the MST spans the full (X, Y, Z) columns.
    """
    if not spec.z_dims:
        raise ShapeError("conditional_gmi requires a nonempty z block")
    return _estimate(samples, spec, seed, conditional=True)


def gaussian_gmi_oracle(r: float, grid: int = 256) -> float:
    """GMI of a standard bivariate Gaussian with correlation r, by quadrature.

    Evaluates 1 - 2 * integral of f_xy*f_x*f_y / (f_xy + f_x*f_y) on a
    trapezoid grid over [-6, 6]^2. Test-support oracle, independent of the
    tree-based estimator.
    """
    if not -1.0 < r < 1.0:
        raise ValueError(f"correlation must lie in (-1, 1), got {r}")
    if grid < 64:
        raise ValueError("grid must be at least 64 points per axis")
    ax = np.linspace(-6.0, 6.0, grid)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    det = 1.0 - r * r
    f_xy = np.exp(-(xx * xx - 2 * r * xx * yy + yy * yy) / (2 * det)) / (
        2 * np.pi * np.sqrt(det)
    )
    f_prod = np.exp(-(xx * xx + yy * yy) / 2) / (2 * np.pi)
    integrand = f_xy * f_prod / (f_xy + f_prod)
    trapezoid = getattr(np, "trapezoid", np.trapz)
    val = trapezoid(trapezoid(integrand, ax, axis=1), ax)
    return float(1.0 - 2.0 * val)
