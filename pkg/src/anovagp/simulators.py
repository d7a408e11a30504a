"""Simulator abstraction, the Q1 FEM diffusion simulator, and analytic test simulators.

A simulator is a pure deterministic map from an m-dimensional input vector to
a d-dimensional output, together with its input box, per-coordinate input
densities and an output norm.  The diffusion simulator solves
-div(a grad u) = 1 with homogeneous Dirichlet conditions on (-1,1)^2, where
the coefficient a is piecewise constant over a k x k subdomain partition and
each subdomain value is one input coordinate.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, SimulatorError


class Simulator:
    """Base class for simulators.

    Subclasses set ``input_dim``, ``output_dim`` and ``intervals`` (an
    (m, 2) array of per-coordinate input intervals) and implement
    ``evaluate``.  Inputs are uniformly distributed on the box by default;
    override ``marginal_density`` for other product densities.
    """

    input_dim: int
    output_dim: int
    intervals: np.ndarray

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_norm(self, y: np.ndarray) -> float:
        """Norm used to score ANOVA contribution weights (Euclidean default)."""
        return float(np.linalg.norm(y))

    def marginal_density(self, coord: int, x) -> np.ndarray:
        """Density of the (1-based) input coordinate evaluated at x."""
        a, b = self.intervals[coord - 1]
        return np.full_like(np.asarray(x, dtype=float), 1.0 / (b - a))

    def density_product(self, coords: tuple[int, ...], points: np.ndarray) -> np.ndarray:
        """Joint density of the coordinates in ``coords`` at each row of points."""
        points = np.atleast_2d(points)
        dens = np.ones(points.shape[0])
        for k, i in enumerate(coords):
            dens *= self.marginal_density(i, points[:, k])
        return dens

    def anchor_point(self) -> np.ndarray:
        """Default anchor: the mean of the input distribution."""
        return self.intervals.mean(axis=1)

    def uniform_sample(self, rng: np.random.Generator, n: int,
                       coords: tuple[int, ...] | None = None) -> np.ndarray:
        """Draw n i.i.d. uniform samples over the box (or a coordinate slice)."""
        iv = self.intervals if coords is None else self.intervals[[i - 1 for i in coords]]
        return rng.uniform(iv[:, 0], iv[:, 1], size=(n, iv.shape[0]))


# ---------------------------------------------------------------------------
# Q1 FEM diffusion simulator
# ---------------------------------------------------------------------------

# Reference element matrices for a square bilinear element with counter-
# clockwise local node ordering [(0,0), (1,0), (1,1), (0,1)].  The stiffness
# matrix is independent of the element size; the mass matrix scales as h^2.
_K_REF = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0

_M_REF = np.array([
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
]) / 36.0


class DiffusionSimulator(Simulator):
    """Piecewise-constant-coefficient diffusion problem on (-1,1)^2.

    The domain is meshed with ``elements_per_side`` x ``elements_per_side``
    square Q1 elements ((n+1)^2 nodes) and partitioned into k_side x k_side
    equal subdomains.  Input coordinate k (1-based, subdomains scanned with x
    fastest from the lower-left corner) is the diffusion coefficient on
    subdomain k; inputs live in [0.01, 1]^{k_side^2}.  The output collects all
    nodal values including the (zero) boundary nodes, so d = (n+1)^2.
    """

    def __init__(self, elements_per_side: int = 32, k_side: int = 3,
                 coeff_interval: tuple[float, float] = (0.01, 1.0),
                 solver: str = "direct"):
        if elements_per_side < 2:
            raise ConfigError("elements_per_side must be >= 2")
        if k_side < 1:
            raise ConfigError("k_side must be >= 1")
        if solver not in ("direct", "cg"):
            raise ConfigError(f"unknown solver {solver!r}")
        self.elements_per_side = elements_per_side
        self.k_side = k_side
        self.solver = solver
        self.input_dim = k_side * k_side
        nn = elements_per_side + 1
        self.n_nodes_side = nn
        self.output_dim = nn * nn
        self.intervals = np.tile(np.asarray(coeff_interval, dtype=float),
                                 (self.input_dim, 1))
        self.h = 2.0 / elements_per_side

        self._build_topology()
        self._mass = self._assemble_mass()

    def _build_topology(self):
        n = self.elements_per_side
        nn = self.n_nodes_side

        ex, ey = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        ex = ex.ravel()
        ey = ey.ravel()
        # global node id = iy * nn + ix; local ordering counter-clockwise
        n00 = ey * nn + ex
        self._elem_nodes = np.stack(
            [n00, n00 + 1, n00 + nn + 1, n00 + nn], axis=1)

        # subdomain of each element by centroid; reject configurations where a
        # centroid sits exactly on a subdomain boundary
        cx = -1.0 + (ex + 0.5) * self.h
        cy = -1.0 + (ey + 0.5) * self.h
        fx = (cx + 1.0) / 2.0 * self.k_side
        fy = (cy + 1.0) / 2.0 * self.k_side
        if (np.min(np.abs(fx - np.round(fx))) < 1e-9
                or np.min(np.abs(fy - np.round(fy))) < 1e-9):
            raise ConfigError(
                "element centroids fall on subdomain boundaries for "
                f"elements_per_side={n}, k_side={self.k_side}; "
                "choose a grid whose centroids avoid the partition lines")
        sx = np.floor(fx).astype(int)
        sy = np.floor(fy).astype(int)
        self._elem_subdomain = sy * self.k_side + sx

        ix, iy = np.meshgrid(np.arange(nn), np.arange(nn), indexing="ij")
        boundary = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)
        self._interior = np.flatnonzero(~boundary.T.ravel())
        # map global node -> interior unknown (-1 on the boundary)
        self._node_to_unknown = -np.ones(self.output_dim, dtype=int)
        self._node_to_unknown[self._interior] = np.arange(self._interior.size)

        rows = np.repeat(self._elem_nodes, 4, axis=1)
        cols = np.tile(self._elem_nodes, (1, 4))
        self._asm_rows = rows.ravel()
        self._asm_cols = cols.ravel()

    def _assemble_mass(self) -> sp.csr_matrix:
        n_elem = self._elem_nodes.shape[0]
        data = np.tile((self.h ** 2 * _M_REF).ravel(), n_elem)
        m = sp.coo_matrix((data, (self._asm_rows, self._asm_cols)),
                          shape=(self.output_dim, self.output_dim))
        return m.tocsr()

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.input_dim,):
            raise SimulatorError(
                f"expected input of shape ({self.input_dim},), got {xi.shape}",
                point=xi)
        if np.any(xi <= 0.0):
            raise SimulatorError("diffusion coefficients must be positive",
                                 point=xi)
        coeff = xi[self._elem_subdomain]
        data = (coeff[:, None, None] * _K_REF[None]).reshape(-1)
        stiffness = sp.coo_matrix(
            (data, (self._asm_rows, self._asm_cols)),
            shape=(self.output_dim, self.output_dim)).tocsr()

        interior = self._interior
        a_ii = stiffness[interior][:, interior]
        # load: int of each basis function = h^2 (interior nodes)
        b = np.full(interior.size, self.h ** 2)

        if self.solver == "direct":
            u_int = spla.spsolve(a_ii.tocsc(), b)
        else:
            u_int, info = spla.cg(a_ii, b, rtol=1e-12, atol=0.0, maxiter=10000)
            if info != 0:
                raise SimulatorError(f"CG failed to converge (info={info})",
                                     point=xi)
        u = np.zeros(self.output_dim)
        u[interior] = u_int
        return u

    def output_norm(self, y: np.ndarray) -> float:
        """Functional L2 norm of the Q1 interpolant, sqrt(y^T M y)."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.output_dim,):
            raise ValueError(f"expected output of shape ({self.output_dim},)")
        return float(np.sqrt(max(y @ (self._mass @ y), 0.0)))

    def node_coordinates(self) -> np.ndarray:
        """(d, 2) array of node coordinates, matching the output ordering."""
        nn = self.n_nodes_side
        ix, iy = np.meshgrid(np.arange(nn), np.arange(nn), indexing="xy")
        x = -1.0 + ix.ravel() * self.h
        y = -1.0 + iy.ravel() * self.h
        return np.stack([x, y], axis=1)


# ---------------------------------------------------------------------------
# Analytic simulators with known ANOVA structure
# ---------------------------------------------------------------------------

class _AnalyticSimulator(Simulator):
    def __init__(self, m: int, output_dim: int):
        self.input_dim = m
        self.output_dim = output_dim
        self.intervals = np.tile([0.0, 1.0], (m, 1))


class AdditiveSimulator(_AnalyticSimulator):
    """u(xi) = sum_i g_i(xi_i): every interaction term vanishes exactly."""

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        j = np.arange(self.output_dim)
        out = np.zeros(self.output_dim)
        for i in range(self.input_dim):
            out += np.sin((i + 1) * xi[i] + np.pi * (j + 1) / (self.output_dim + 1))
        return out


class RankOneProductSimulator(_AnalyticSimulator):
    """u(xi) = s(xi) * v for a fixed direction v: output data have rank one."""

    def __init__(self, m: int, output_dim: int):
        super().__init__(m, output_dim)
        self.direction = np.cos(1.0 + np.arange(output_dim))

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        scale = float(np.prod(0.6 + xi))
        return scale * self.direction


class PolynomialMixSimulator(_AnalyticSimulator):
    """Low-order polynomial with one genuine {1,2} interaction term.

    The interaction is (xi_1 xi_2)^2 rather than xi_1 xi_2: a multilinear
    interaction anchored at the midpoint of a symmetric density has an
    exactly zero mean, so its contribution weight could never exceed any
    tolerance.  The squared form keeps a strictly positive weight.
    """

    def __init__(self, m: int, output_dim: int):
        if m < 2:
            raise ConfigError("polynomial-mix needs m >= 2")
        super().__init__(m, output_dim)
        j = np.arange(output_dim)
        self._a = np.sin(1.0 + j)
        self._b = np.cos(np.add.outer(np.arange(m), 0.5 * j))
        self._w = 0.5 * np.sin(np.outer(np.arange(1, m + 1), 1.0 + 0.3 * j))

    def evaluate(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = (xi[0] * xi[1]) ** 2 * self._a + xi @ self._b
        out = out + (xi * xi) @ self._w
        return out


_BANK = {
    "additive": AdditiveSimulator,
    "rank-one-product": RankOneProductSimulator,
    "polynomial-mix": PolynomialMixSimulator,
}


def analytic_bank(name: str, m: int, output_dim: int) -> Simulator:
    """Build an analytic simulator by name.

    Known names: additive, rank-one-product, polynomial-mix.
    """
    try:
        cls = _BANK[name]
    except KeyError:
        raise ConfigError(
            f"unknown analytic simulator {name!r}; "
            f"known: {sorted(_BANK)}") from None
    return cls(m, output_dim)
