"""Clenshaw-Curtis quadrature rules and tensor grids over ANOVA subcubes.

The one-dimensional rules live on [-1, 1] and are mapped affinely to
arbitrary intervals.  Tensor products over a set of coordinates provide the
grids used to estimate the mean of each ANOVA term, via a weighted sum of
term values against the input density evaluated at the grid points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuadratureRule1D:
    """A one-dimensional quadrature rule on an interval [a, b].

    Nodes are strictly increasing and contained in the interval; weights are
    positive and sum to the interval length.
    """

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must have equal length")

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class TensorQuadrature:
    """Tensor-product quadrature grid over the subcube of a set of coordinates.

    ``points`` has shape (n_points, n_dims) with lexicographic ordering over
    the per-dimension node indices (last dimension varies fastest); weights
    are the products of the corresponding 1-D weights.
    """

    index: tuple[int, ...]
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have equal length")

    @property
    def n_points(self) -> int:
        return self.weights.size


def cc_nodes(n: int) -> np.ndarray:
    """Clenshaw-Curtis nodes on [-1, 1], ascending.

    For n >= 2 these are the Chebyshev extreme points cos(k*pi/(n-1)); for
    n == 1 the single midpoint node 0.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    if n == 1:
        return np.zeros(1)
    k = np.arange(n - 1, -1, -1)
    nodes = np.cos(k * np.pi / (n - 1))
    # kill the rounding fuzz at the symmetric points
    nodes[0] = -1.0
    nodes[-1] = 1.0
    if n % 2 == 1:
        nodes[(n - 1) // 2] = 0.0
    return nodes


def cc_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [-1, 1], matching ``cc_nodes`` ordering.

    Computed by solving the exactness conditions in the Chebyshev basis:
    sum_k w_k T_j(x_k) = int_{-1}^{1} T_j(x) dx for j = 0..n-1.  The rule is
    then exact for every polynomial of degree <= n-1 and the weights sum to 2.
    """
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    if n == 1:
        return np.full(1, 2.0)
    x = cc_nodes(n)
    j = np.arange(n)
    # T_j(cos t) = cos(j t); the Vandermonde in the Chebyshev basis is
    # well-conditioned at these nodes.
    vander = np.cos(np.outer(j, np.arccos(np.clip(x, -1.0, 1.0))))
    moments = np.zeros(n)
    even = j[j % 2 == 0]
    moments[even] = 2.0 / (1.0 - even.astype(float) ** 2)
    moments[0] = 2.0
    weights = np.linalg.solve(vander, moments)
    return weights


def cc_rule(n: int) -> QuadratureRule1D:
    """The n-point Clenshaw-Curtis rule on [-1, 1]."""
    return QuadratureRule1D(cc_nodes(n), cc_weights(n), (-1.0, 1.0))


def map_rule(rule: QuadratureRule1D, target: tuple[float, float]) -> QuadratureRule1D:
    """Map a rule on [-1, 1] to [a, b] by the affine change of variables."""
    a, b = float(target[0]), float(target[1])
    if a >= b:
        raise ValueError(f"target interval must satisfy a < b, got [{a}, {b}]")
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return QuadratureRule1D(mid + half * rule.nodes, half * rule.weights, (a, b))


def tensor_grid(index: tuple[int, ...],
                per_dim_rules: list[QuadratureRule1D]) -> TensorQuadrature:
    """Full tensor product of 1-D rules over the coordinates in ``index``.

    Point ordering is lexicographic over per-dimension node indices, with the
    last coordinate of the index varying fastest.  The empty index is
    rejected: the anchored constant term needs no quadrature.
    """
    index = tuple(index)
    if len(index) == 0:
        raise ValueError("tensor_grid requires a nonempty index")
    if len(per_dim_rules) != len(index):
        raise ValueError("one 1-D rule is required per coordinate of the index")
    node_axes = [r.nodes for r in per_dim_rules]
    weight_axes = [r.weights for r in per_dim_rules]
    mesh = np.meshgrid(*node_axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    wmesh = np.meshgrid(*weight_axes, indexing="ij")
    weights = np.ones(points.shape[0])
    for w in wmesh:
        weights = weights * w.ravel()
    return TensorQuadrature(index=index, points=points, weights=weights)


def weighted_mean(values: np.ndarray, grid: TensorQuadrature,
                  density: np.ndarray) -> np.ndarray:
    """Density-weighted quadrature mean of vector values at the grid points.

    ``values`` has shape (n_points, d); ``density`` holds the input density
    evaluated at each grid point.  Returns sum_k values[k] * density[k] *
    weights[k], componentwise.
    """
    values = np.asarray(values, dtype=float)
    density = np.asarray(density, dtype=float)
    if values.shape[0] != grid.n_points or density.shape[0] != grid.n_points:
        raise ValueError("values/density length must match the grid size")
    return (grid.weights * density) @ values
