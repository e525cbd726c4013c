import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wentzell.geometry import MetricFamily, breathing, build_grid, static_flat, weights_at
from wentzell.operators import (
    AssemblyInconsistencyError,
    StateShapeError,
    StateVector,
    TraceMaps,
    assemble_boundary_laplacian,
    assemble_bulk_laplacian,
    assemble_wentzell_operator,
    dump_matrix,
    green_identity_residual,
    inner_product,
    neumann_stencil_matrix,
    neumann_trace,
    norm,
    random_state,
)


def _reference_matrix(grid, r):
    """Independent dense assembly of (M, K) for a radius profile r(x), loop by loop."""
    nx, nt = grid.shape
    dx, dth = grid.dx, grid.dtheta
    idx = lambda i, j: i * nt + (j % nt)  # noqa: E731
    n = nx * nt
    K = np.zeros((n, n))
    M = np.zeros(n)
    x = np.linspace(0, 1, nx)
    for i in range(nx):
        width = dx / 2 if i in (0, nx - 1) else dx
        for j in range(nt):
            M[idx(i, j)] = r(x[i]) * width * dth + (r(x[i]) * dth if i in (0, nx - 1) else 0.0)
            edges = []
            if i + 1 < nx:
                edges.append((idx(i + 1, j), r(x[i] + dx / 2) * dth / dx))
            c = width / (r(x[i]) * dth) + (1 / (r(x[i]) * dth) if i in (0, nx - 1) else 0.0)
            edges.append((idx(i, j + 1), c))
            for k, c in edges:
                a = idx(i, j)
                K[a, a] += c
                K[k, k] += c
                K[a, k] -= c
                K[k, a] -= c
    return M, K


def test_matches_independent_assembly():
    g = build_grid(6, 7)
    m = breathing(0.3)
    t = 0.2
    op = assemble_wentzell_operator(t, g, m)
    M, K = _reference_matrix(g, lambda x: float(m.radius(t, np.array([x]))[0]))
    assert np.allclose(op.mass.ravel(), M, rtol=1e-14)
    assert np.allclose(op.stiffness.toarray(), K, rtol=1e-13, atol=1e-13)


def test_smallest_eigenvalues_match_dense_oracle():
    g = build_grid(8, 8)
    op = assemble_wentzell_operator(0.0, g, static_flat())
    M, K = _reference_matrix(g, lambda x: 1.0)
    oracle = sla.eigh(K, np.diag(M), eigvals_only=True)
    ev = np.sort(np.linalg.eigvals(-op.dense()).real)
    assert np.allclose(ev[:10], oracle[:10], atol=1e-10)
    # the kernel is one-dimensional: constants only
    assert abs(oracle[0]) < 1e-12 and oracle[1] > 1e-3


def test_constant_state_in_kernel(metric):
    g = build_grid(9, 12)
    op = assemble_wentzell_operator(0.4, g, metric)
    assert np.all(op.apply(np.full(g.shape, 2.5 + 1j)) == 0)


def test_symmetry_and_dissipativity(metric, rng):
    g = build_grid(8, 8)
    for t in (0.0, 0.5, 1.0):
        op = assemble_wentzell_operator(t, g, metric)
        for _ in range(20):
            x, y = random_state(g, rng).u, random_state(g, rng).u
            s = abs(op.inner(x, op.apply(y)) - op.inner(op.apply(x), y))
            assert s <= 1e-12 * op.norm(x) * op.norm(y)
            assert op.inner(x, op.apply(x)).real <= 1e-12 * op.norm(x) ** 2
            assert abs(op.inner(x, 1j * op.apply(x)).real) <= 1e-12 * op.norm(x) ** 2


def test_bulk_laplacian_constants_exact(metric):
    g = build_grid(7, 9)
    L = assemble_bulk_laplacian(0.3, g, metric)
    assert np.all(L @ np.ones(g.size) == 0)


def test_bulk_laplacian_angular_mode():
    g = build_grid(6, 16)
    L = assemble_bulk_laplacian(0.0, g, static_flat())
    _, TH = g.mesh()
    u = np.cos(2 * TH)
    discrete = -(2 - 2 * math.cos(2 * g.dtheta)) / g.dtheta**2
    assert np.allclose(L @ u.ravel(), (discrete * u).ravel(), atol=1e-12)
    assert abs(discrete + 4) < 4 * g.dtheta**2


def test_bulk_laplacian_axial_mode_interior():
    g = build_grid(17, 4)
    L = assemble_bulk_laplacian(0.0, g, static_flat())
    X, _ = g.mesh()
    u = np.cos(math.pi * X)
    discrete = -(2 - 2 * math.cos(math.pi * g.dx)) / g.dx**2
    Lu = (L @ u.ravel()).reshape(g.shape)
    assert np.allclose(Lu[1:-1], discrete * u[1:-1], atol=1e-10)
    assert np.max(np.abs(Lu[1:-1] + math.pi**2 * u[1:-1])) < math.pi**4 * g.dx**2 / 12 + 1e-12


def test_bulk_laplacian_second_order_on_warped_metric():
    m = MetricFamily(r=lambda t, x: 1.0 + 0.5 * x, t_max=1.0)
    errs = []
    for n in (8, 16, 32):
        g = build_grid(n + 1, n)
        X, TH = g.mesh()
        u = np.sin(2 * X) * np.cos(TH)
        r = 1 + 0.5 * X
        exact = (-4 * np.sin(2 * X) + 0.5 / r * 2 * np.cos(2 * X)) * np.cos(TH) - u / r**2
        Lu = (assemble_bulk_laplacian(0, g, m) @ u.ravel()).reshape(g.shape)
        errs.append(np.max(np.abs(Lu - exact)[1:-1]))
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.9


@pytest.mark.parametrize("rb, k, expected", [(1.0, 3, -9.0), (2.0, 1, -0.25)])
def test_boundary_laplacian_modes(rb, k, expected):
    g = build_grid(4, 32)
    L = assemble_boundary_laplacian(0.0, g, static_flat(radius=rb))
    v = np.tile(np.sin(k * g.theta), 2)
    discrete = -(2 - 2 * math.cos(k * g.dtheta)) / (rb * g.dtheta) ** 2
    assert np.allclose(L @ v, discrete * v, atol=1e-12)
    assert abs(discrete - expected) < abs(expected) * (k * g.dtheta) ** 2 / 12 + 1e-14
    assert np.all(L @ np.ones(2 * g.n_theta) == 0)


def test_boundary_laplacian_symmetric_in_boundary_weights():
    g = build_grid(5, 10)
    m = breathing(0.3)
    L = assemble_boundary_laplacian(0.25, g, m).toarray()
    W = np.diag(weights_at(0.25, g, m).w_boundary.ravel())
    assert np.allclose(W @ L, (W @ L).T, atol=1e-13)


def test_neumann_trace_examples():
    g = build_grid(9, 4)
    X, _ = g.mesh()
    assert np.all(neumann_trace(np.full(g.shape, 5.0), 0, g) == 0)
    lin = neumann_trace(X, 0, g)
    assert np.allclose(lin[0], -1.0, atol=1e-13) and np.allclose(lin[1], 1.0, atol=1e-13)
    quad = neumann_trace(X**2, 0, g)
    assert np.allclose(quad[0], 0.0, atol=1e-12) and np.allclose(quad[1], 2.0, atol=1e-12)


def test_dirichlet_after_extension_is_identity(rng):
    g = build_grid(5, 6)
    tr = TraceMaps(g)
    v = rng.standard_normal((2, 6))
    assert np.array_equal(tr.dirichlet(tr.extension(v)), v)


def test_inner_product_of_constant_is_six_pi():
    g = build_grid(7, 12)
    X = StateVector.constant(g, 1.0)
    assert inner_product(X, X, weights_at(0, g, static_flat())) == pytest.approx(6 * math.pi, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20))
def test_inner_product_conjugate_symmetric_and_definite(seed):
    g = build_grid(5, 6)
    w = weights_at(0.3, g, breathing(0.3))
    r = np.random.default_rng(seed)
    X, Y = random_state(g, r), random_state(g, r)
    assert inner_product(X, Y, w) == pytest.approx(np.conj(inner_product(Y, X, w)), rel=1e-13)
    assert inner_product(X, X, w).real > 0
    assert inner_product(StateVector.zeros(g), StateVector.zeros(g), w) == 0


def test_inner_product_shape_mismatch():
    w = weights_at(0, build_grid(5, 6), static_flat())
    with pytest.raises(StateShapeError):
        inner_product(StateVector.zeros(build_grid(4, 6)), StateVector.zeros(build_grid(4, 6)), w)


def test_green_identity_random_pairs(metric, rng):
    g = build_grid(8, 8)
    w = weights_at(0.5, g, metric)
    for _ in range(100):
        X, Y = random_state(g, rng), random_state(g, rng)
        assert green_identity_residual(0.5, X, Y, g, metric) <= 1e-11 * norm(X, w) * norm(Y, w)


def test_green_identity_compact_support(rng):
    g = build_grid(9, 8)
    u = np.zeros(g.shape, complex)
    u[3:6] = rng.standard_normal((3, 8))
    X = StateVector.from_bulk(u)
    Y = StateVector.from_bulk(u[::-1].copy())
    assert green_identity_residual(0, X, Y, g, static_flat()) <= 1e-13


def test_projection_is_weighted_average(rng):
    g = build_grid(5, 6)
    w = weights_at(0, g, static_flat())
    X = StateVector(rng.standard_normal(g.shape), rng.standard_normal((2, 6)))
    p = X.project(w)
    # the residual is orthogonal to every compatible state
    for _ in range(5):
        Y = random_state(g, rng)
        assert abs(inner_product(X - StateVector.from_bulk(p), Y, w)) < 1e-12


def test_corrupted_stencil_raises():
    g = build_grid(8, 8)
    bad = neumann_stencil_matrix(g, (1.0, -1.0), 1.0)
    with pytest.raises(AssemblyInconsistencyError):
        assemble_wentzell_operator(0, g, static_flat(), rho_stencil=bad)
    op = assemble_wentzell_operator(0, g, static_flat(), rho_stencil=bad, check=False)
    assert op.symmetry_residual > 1e-3


def test_matching_stencil_override_is_accepted():
    g = build_grid(8, 8)
    same = neumann_stencil_matrix(g, (3.0, -4.0, 1.0), 2.0)
    op = assemble_wentzell_operator(0, g, static_flat(), rho_stencil=same)
    assert op.perturbation is None


def test_dump_matrix_roundtrip(tmp_path):
    g = build_grid(4, 5)
    op = assemble_wentzell_operator(0, g, breathing(0.2))
    path = dump_matrix(op, tmp_path / "A.txt")
    lines = path.read_text().splitlines()
    n, nnz = map(int, lines[0].split())
    data = np.array([l.split() for l in lines[1:]], dtype=float)
    A = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))
    assert nnz == len(lines) - 1
    assert np.array_equal(A.toarray(), op.dense())


def test_consistency_with_smooth_samples():
    # A applied to samples of a smooth compatible state: second order inside
    m = breathing(0.3)
    t = 0.3
    errs = []
    for n in (8, 16, 32):
        g = build_grid(n + 1, n)
        X, TH = g.mesh()
        u = np.cos(math.pi * X) * np.sin(TH)
        r = m.radius(t, X)
        rx = m.radius_x(t, X)
        exact = (-math.pi**2 * np.cos(math.pi * X) - rx / r * math.pi * np.sin(math.pi * X)) * np.sin(TH) - u / r**2
        Au = assemble_wentzell_operator(t, g, m).apply(u)
        errs.append(np.max(np.abs(Au - exact)[1:-1]))
    assert np.log2(errs[1] / errs[2]) > 1.9
