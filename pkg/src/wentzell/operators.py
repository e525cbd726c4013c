"""Finite-volume Laplace-Beltrami operators, traces and the Wentzell operator.

A solution state carries one complex value per node; its boundary part ``v`` is
the restriction of ``u`` to the boundary rows. Elements of the larger space
(forcing terms, nonlinear images) may have ``v`` independent of ``u``; they
enter the dynamics through :meth:`StateVector.project`, the orthogonal
projection onto compatible states.

The Wentzell operator is ``A = -diag(m)^{-1} K`` with ``m`` the combined bulk
plus boundary mass and ``K`` the stiffness of the discrete Dirichlet energy

    sum over faces of c_f |u_a - u_b|^2

(bulk x-faces, bulk theta-faces, boundary-circle faces). ``K`` is symmetric by
construction, so ``A`` is self-adjoint and nonpositive in the mass inner product.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .geometry import Grid, MetricFamily, QuadratureWeights, radii, weights_at

SYMMETRY_TOL = 1e-10


class AssemblyInconsistencyError(RuntimeError):
    """Bulk and boundary rows do not pair into a symmetric operator."""


class StateShapeError(ValueError):
    pass


@dataclass
class StateVector:
    """Pair ``(u, v)``: ``u`` on every node (shape ``(n_x, n_theta)``), ``v`` on the two circles."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=np.complex128)
        self.v = np.asarray(self.v, dtype=np.complex128)
        if self.u.ndim != 2 or self.v.shape != (2, self.u.shape[1]):
            raise StateShapeError(f"incompatible shapes u{self.u.shape} v{self.v.shape}")

    @classmethod
    def from_bulk(cls, u) -> "StateVector":
        """Compatible state with ``v`` the Dirichlet trace of ``u``."""
        u = np.array(u, dtype=np.complex128)
        return cls(u, u[[0, -1]].copy())

    @classmethod
    def zeros(cls, grid: Grid) -> "StateVector":
        return cls(np.zeros(grid.shape, complex), np.zeros((2, grid.n_theta), complex))

    @classmethod
    def constant(cls, grid: Grid, c: complex = 1.0) -> "StateVector":
        return cls.from_bulk(np.full(grid.shape, c, dtype=complex))

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def is_compatible(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.u[[0, -1]] - self.v) <= atol))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))

    def project(self, weights: QuadratureWeights) -> np.ndarray:
        """Nodal values of the nearest compatible state in the weighted norm."""
        x = self.u.copy()
        wb, wv = weights.w_bulk, weights.w_boundary
        for row, k in ((0, 0), (-1, 1)):
            x[row] = (wb[row] * self.u[row] + wv[k] * self.v[k]) / (wb[row] + wv[k])
        return x

    def copy(self) -> "StateVector":
        return StateVector(self.u.copy(), self.v.copy())

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.u - other.u, self.v - other.v)

    def __mul__(self, c) -> "StateVector":
        return StateVector(c * self.u, c * self.v)

    __rmul__ = __mul__

    def __neg__(self) -> "StateVector":
        return StateVector(-self.u, -self.v)


def inner_product(X: StateVector, Y: StateVector, weights: QuadratureWeights) -> complex:
    """Weighted ``L^2(M) x L^2(boundary)`` inner product, linear in ``X``."""
    if X.shape != Y.shape or X.shape != weights.w_bulk.shape:
        raise StateShapeError(f"shape mismatch {X.shape} / {Y.shape} / {weights.w_bulk.shape}")
    return complex(
        np.sum(weights.w_bulk * X.u * np.conj(Y.u))
        + np.sum(weights.w_boundary * X.v * np.conj(Y.v))
    )


def norm(X: StateVector, weights: QuadratureWeights) -> float:
    return float(np.sqrt(max(inner_product(X, X, weights).real, 0.0)))


def dof_inner(x, y, mass) -> complex:
    """Inner product of compatible states given by their nodal values."""
    return complex(np.sum(mass * np.reshape(x, mass.shape) * np.conj(np.reshape(y, mass.shape))))


def dof_norm(x, mass) -> float:
    return float(np.sqrt(np.sum(mass * np.abs(np.reshape(x, mass.shape)) ** 2)))


def random_state(grid: Grid, rng: np.random.Generator, complex_valued: bool = True) -> StateVector:
    u = rng.standard_normal(grid.shape)
    if complex_valued:
        u = u + 1j * rng.standard_normal(grid.shape)
    return StateVector.from_bulk(u)


# --- traces -----------------------------------------------------------------


class TraceMaps:
    """Dirichlet restriction and outward normal derivative on the two circles.

    The normal derivative uses the second-order one-sided stencil
    ``(3 u_b - 4 u_{b+-1} + u_{b+-2}) / (2 dx)`` (outward: ``-d/dx`` at ``x=0``,
    ``+d/dx`` at ``x=1``); it is exact on quadratics in ``x``.
    """

    def __init__(self, grid: Grid):
        self.grid = grid

    def dirichlet(self, u) -> np.ndarray:
        u = np.asarray(u)
        return u[[0, -1]].copy()

    def extension(self, v) -> np.ndarray:
        """Bulk function equal to ``v`` on the circles and zero inside."""
        u = np.zeros(self.grid.shape, dtype=np.result_type(v, float))
        u[0], u[-1] = v[0], v[1]
        return u

    def neumann(self, u) -> np.ndarray:
        u = np.asarray(u)
        h = self.grid.dx
        lo = (3 * u[0] - 4 * u[1] + u[2]) / (2 * h)
        hi = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * h)
        return np.stack([lo, hi])

    def neumann_matrix(self) -> sp.csr_matrix:
        return neumann_stencil_matrix(self.grid, (3.0, -4.0, 1.0), 2.0)


def neumann_stencil_matrix(grid: Grid, coeffs, denom: float) -> sp.csr_matrix:
    """Sparse ``(2 n_theta, n_x n_theta)`` one-sided normal-derivative stencil.

    ``coeffs[k]`` multiplies the node ``k`` rows inward from the circle; the
    result is divided by ``denom * dx``.
    """
    nx, nt = grid.shape
    rows, cols, vals = [], [], []
    scale = 1.0 / (denom * grid.dx)
    for j in range(nt):
        for k, c in enumerate(coeffs):
            if c == 0.0:
                continue
            rows += [j, nt + j]
            cols += [k * nt + j, (nx - 1 - k) * nt + j]
            vals += [c * scale, c * scale]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nt, nx * nt))


def neumann_trace(u, t: float, grid: Grid) -> np.ndarray:
    """Outward normal derivative of ``u`` on both circles (metric independent: ``x`` is arclength)."""
    return TraceMaps(grid).neumann(u)


# --- conductances and assembled operators ---------------------------------------


@dataclass(frozen=True)
class Conductances:
    cx: np.ndarray  # (n_x - 1, n_theta): bulk axial faces
    ct_bulk: np.ndarray  # (n_x, n_theta): bulk angular faces
    ct_boundary: np.ndarray  # (2, n_theta): faces of the two boundary circles

    @property
    def ct_total(self) -> np.ndarray:
        ct = self.ct_bulk.copy()
        ct[0] += self.ct_boundary[0]
        ct[-1] += self.ct_boundary[1]
        return ct


def conductances(t: float, grid: Grid, metric: MetricFamily) -> Conductances:
    r = radii(t, grid, metric)
    r_face = metric.radius(t, grid.x_faces)
    nt = grid.n_theta
    cx = np.outer(r_face * grid.dtheta / grid.dx, np.ones(nt))
    ct_bulk = np.outer(grid.cell_widths / (r * grid.dtheta), np.ones(nt))
    ct_b = np.outer(1.0 / (r[[0, -1]] * grid.dtheta), np.ones(nt))
    return Conductances(cx=cx, ct_bulk=ct_bulk, ct_boundary=ct_b)


def _stiffness_matrix(grid: Grid, cx: np.ndarray, ct: np.ndarray) -> sp.csr_matrix:
    nx, nt = grid.shape
    idx = np.arange(nx * nt).reshape(nx, nt)
    a = np.concatenate([idx[:-1].ravel(), idx.ravel()])
    b = np.concatenate([idx[1:].ravel(), np.roll(idx, -1, axis=1).ravel()])
    c = np.concatenate([cx.ravel(), ct.ravel()])
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([c, c, -c, -c])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nx * nt, nx * nt))


def _boundary_scatter(grid: Grid) -> sp.csr_matrix:
    """``(n_x n_theta, 2 n_theta)`` injection of circle values into their nodes."""
    nb = grid.n_boundary
    return sp.csr_matrix(
        (np.ones(nb), (grid.boundary_index(), np.arange(nb))), shape=(grid.size, nb)
    )


def _exact_row_sums(A: sp.spmatrix) -> sp.csr_matrix:
    """Rebuild ``A`` with each diagonal stored last as minus the running sum of its row.

    CSR products accumulate row entries in storage order, so the image of the
    all-ones vector is then exactly zero rather than zero up to rounding.
    """
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    indptr, indices, data = A.indptr, A.indices, A.data
    cols_out, vals_out, ptr = [], [], [0]
    for i in range(A.shape[0]):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] != i:
                cols_out.append(indices[k])
                vals_out.append(data[k])
                acc += data[k]
        cols_out.append(i)
        vals_out.append(-acc)
        ptr.append(len(cols_out))
    return sp.csr_matrix((np.array(vals_out), np.array(cols_out), np.array(ptr)), shape=A.shape)


def assemble_bulk_laplacian(t: float, grid: Grid, metric: MetricFamily) -> sp.csr_matrix:
    """Cell-balance Laplacian on all nodes; boundary half-cells close with the normal derivative.

    Interior rows are ``(1/r) d_x (r d_x u) + r^{-2} d_theta^2 u``. On a boundary
    half-cell the outer face carries the flux ``r dtheta * du/dnu``.
    """
    w = weights_at(t, grid, metric)
    cond = conductances(t, grid, metric)
    K = _stiffness_matrix(grid, cond.cx, cond.ct_bulk)
    E = _boundary_scatter(grid)
    B = sp.diags(w.w_boundary.ravel())
    N = TraceMaps(grid).neumann_matrix()
    lhs = -K + E @ B @ N
    return _exact_row_sums(sp.diags(1.0 / w.w_bulk.ravel()) @ lhs)


def assemble_boundary_laplacian(t: float, grid: Grid, metric: MetricFamily) -> sp.csr_matrix:
    """Block-diagonal periodic ``r_b^{-2} d_theta^2`` on the two circles, acting on ``v.ravel()``."""
    r = radii(t, grid, metric)
    nt = grid.n_theta
    blocks = []
    for rb in (r[0], r[-1]):
        main = np.full(nt, -2.0)
        off = np.ones(nt - 1)
        L = sp.diags([main, off, off], [0, 1, -1], shape=(nt, nt), format="lil")
        L[0, nt - 1] = 1.0
        L[nt - 1, 0] = 1.0
        blocks.append(L.tocsr() / (rb * grid.dtheta) ** 2)
    return sp.csr_matrix(sp.block_diag(blocks))


@dataclass
class WentzellOperator:
    """Assembled discrete ``A(t)`` acting on nodal values of compatible states."""

    grid: Grid
    t: float
    weights: QuadratureWeights
    cond: Conductances
    stiffness: sp.csr_matrix
    perturbation: sp.csr_matrix | None = None
    symmetry_residual: float = 0.0

    def __post_init__(self) -> None:
        self.mass = self.weights.mass
        self._ct = np.ascontiguousarray(self.cond.ct_total)
        self._cx = np.ascontiguousarray(self.cond.cx)

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def matrix(self) -> sp.csr_matrix:
        A = -sp.diags(1.0 / self.mass.ravel()) @ self.stiffness
        return A if self.perturbation is not None else _exact_row_sums(A)

    def apply_stiffness(self, x) -> np.ndarray:
        """``K x`` via the flux kernel; same shape as ``x``."""
        shape = np.shape(x)
        u = np.reshape(x, self.grid.shape)
        out = kernels.stiffness_apply(u, self._cx, self._ct)
        if self.perturbation is not None:
            out += (self.perturbation @ u.ravel()).reshape(self.grid.shape)
        return out.reshape(shape)

    def apply(self, x) -> np.ndarray:
        shape = np.shape(x)
        y = self.apply_stiffness(x).reshape(self.grid.shape)
        return (-y / self.mass).reshape(shape)

    def apply_state(self, X: StateVector) -> StateVector:
        return StateVector.from_bulk(self.apply(X.u))

    def energy(self, x) -> float:
        """Dirichlet energy ``x^H K x``; equals ``-<X, AX>``."""
        x = np.reshape(x, self.grid.shape)
        return float(np.real(np.sum(np.conj(x) * self.apply_stiffness(x))))

    def inner(self, x, y) -> complex:
        return dof_inner(x, y, self.mass)

    def norm(self, x) -> float:
        return dof_norm(x, self.mass)

    def graph_norm(self, x) -> float:
        return self.norm(x) + self.norm(self.apply(x))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def stiffness_symmetry_residual(K: sp.spmatrix) -> float:
    scale = abs(K).max()
    if scale == 0:
        return 0.0
    d = abs(K - K.T)
    return float(d.max() / scale) if d.nnz else 0.0


def assemble_wentzell_operator(
    t: float,
    grid: Grid,
    metric: MetricFamily,
    rho_stencil: sp.spmatrix | None = None,
    check: bool = True,
) -> WentzellOperator:
    """Assemble ``A(t)`` with bulk rows ``Delta`` and boundary rows ``Delta_b v - rho``.

    Summing each boundary half-cell balance with its boundary equation, the
    normal flux of the half-cell cancels the ``-rho`` term exactly when both use
    the same stencil. ``rho_stencil`` overrides the stencil of the boundary rows
    (a mismatched one breaks the pairing and the symmetry check raises).
    """
    w = weights_at(t, grid, metric)
    cond = conductances(t, grid, metric)
    K = _stiffness_matrix(grid, cond.cx, cond.ct_total)
    perturbation = None
    if rho_stencil is not None:
        N = TraceMaps(grid).neumann_matrix()
        D = sp.csr_matrix(N - rho_stencil)
        D.eliminate_zeros()
        if D.nnz:
            E = _boundary_scatter(grid)
            B = sp.diags(w.w_boundary.ravel())
            perturbation = sp.csr_matrix(-(E @ B @ D))
            K = sp.csr_matrix(K + perturbation)
    residual = stiffness_symmetry_residual(K)
    if check and residual > SYMMETRY_TOL:
        raise AssemblyInconsistencyError(
            f"stiffness symmetry residual {residual:.3e} exceeds {SYMMETRY_TOL:g}"
        )
    return WentzellOperator(
        grid=grid,
        t=float(t),
        weights=w,
        cond=cond,
        stiffness=K,
        perturbation=perturbation,
        symmetry_residual=residual,
    )


def green_identity_residual(
    t: float, X: StateVector, Y: StateVector, grid: Grid, metric: MetricFamily
) -> float:
    """Defect of the boundary-triple identity for the nonnegative Laplacian ``-Delta``.

    ``(-Delta u, w) - (u, -Delta w) = (g+ u, g- w)_b - (g- u, g+ w)_b`` with
    ``g- = `` restriction and ``g+ = -d/dnu``.
    """
    w = weights_at(t, grid, metric)
    L = assemble_bulk_laplacian(t, grid, metric)
    tr = TraceMaps(grid)
    ux, uy = X.u, Y.u
    Lx = -(L @ ux.ravel()).reshape(grid.shape)
    Ly = -(L @ uy.ravel()).reshape(grid.shape)
    lhs = np.sum(w.w_bulk * Lx * np.conj(uy)) - np.sum(w.w_bulk * ux * np.conj(Ly))
    gpx, gpy = -tr.neumann(ux), -tr.neumann(uy)
    gmx, gmy = tr.dirichlet(ux), tr.dirichlet(uy)
    wb = w.w_boundary
    rhs = np.sum(wb * gpx * np.conj(gmy)) - np.sum(wb * gmx * np.conj(gpy))
    return float(abs(lhs - rhs))


def dump_matrix(op: WentzellOperator, path) -> Path:
    """Write ``A`` as ``row col value`` lines (0-based), header ``n nnz``."""
    path = Path(path)
    A = op.matrix.tocoo()
    with path.open("w") as fh:
        fh.write(f"{A.shape[0]} {A.nnz}\n")
        for i, j, a in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {a:.17g}\n")
    return path
