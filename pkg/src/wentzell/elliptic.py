"""Shifted stationary problems ``(kappa A - lambda) X = F``.

With ``A = -M^{-1} K`` the problem is ``(lambda M + kappa K) X = -M F``. For the
heat shift this is symmetric positive definite and goes to preconditioned CG;
for ``kappa = i`` the complex-symmetric system is rewritten in the real
symmetric (indefinite) form

    [ lambda M    K        ] [ Re X  ]   [ Re b ]
    [ K          -lambda M ] [ -Im X ] = [ Im b ]

and handed to MINRES. Small systems use a dense direct solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid, MetricFamily
from .operators import StateVector, WentzellOperator, assemble_wentzell_operator, random_state

DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-10


class ResolventNonconvergenceError(RuntimeError):
    pass


def _check_kappa(kappa) -> complex:
    k = complex(kappa)
    if k not in (1, 1j):
        raise ValueError(f"kappa must be 1 or 1j, got {kappa!r}")
    return k


@dataclass
class ResolventProblem:
    kappa: complex
    lam: float
    rhs: StateVector
    t: float = 0.0

    def __post_init__(self) -> None:
        self.kappa = _check_kappa(self.kappa)
        if not self.lam > 0:
            raise ValueError(f"shift must be positive, got {self.lam}")


def _system(op: WentzellOperator, kappa: complex, lam: float) -> sp.csr_matrix:
    return sp.csr_matrix(lam * sp.diags(op.mass.ravel()) + kappa * op.stiffness)


def residual_norm(op: WentzellOperator, kappa, lam, x, f) -> float:
    """``||(kappa A - lambda) X - f||`` in the mass norm (``f`` as nodal values)."""
    r = kappa * op.apply(x) - lam * x - f
    return op.norm(r)


def _solve_dense(op, kappa, lam, b):
    S = _system(op, kappa, lam).toarray()
    if op.perturbation is not None:
        return sla.solve(S, b)
    if kappa == 1:
        return sla.solve(S, b, assume_a="pos")
    return sla.solve(S, b, assume_a="sym")


def _solve_cg(op, lam, b, rtol, maxiter):
    S = _system(op, 1.0, lam)
    d = S.diagonal().real
    P = spla.LinearOperator(S.shape, matvec=lambda y: y / d, dtype=complex)
    x, info = spla.cg(S, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=P)
    if info != 0:
        raise ResolventNonconvergenceError(f"CG did not converge (info={info})")
    return x


def _solve_minres(op, lam, b, rtol, maxiter):
    n = op.n
    M = sp.diags(op.mass.ravel())
    K = sp.csr_matrix(op.stiffness.real)
    S = sp.bmat([[lam * M, K], [K, -lam * M]], format="csr")
    d = lam * op.mass.ravel() + K.diagonal()
    dd = np.concatenate([d, d])
    P = spla.LinearOperator(S.shape, matvec=lambda y: y / dd, dtype=float)
    rhs = np.concatenate([b.real, b.imag])
    z, info = spla.minres(S, rhs, rtol=rtol, maxiter=maxiter, M=P)
    if info != 0:
        raise ResolventNonconvergenceError(f"MINRES did not converge (info={info})")
    return z[:n] - 1j * z[n:]


def solve_shifted(
    op: WentzellOperator,
    kappa,
    lam: float,
    f: np.ndarray,
    method: str = "auto",
    tol: float = RESIDUAL_TOL,
    maxiter: int | None = None,
    scale: float | None = None,
) -> np.ndarray:
    """Nodal solution of ``(kappa A - lambda) x = f`` for compatible right-hand side ``f``."""
    kappa = _check_kappa(kappa)
    if not lam > 0:
        raise ValueError(f"shift must be positive, got {lam}")
    f = np.asarray(f, dtype=complex).reshape(op.grid.shape)
    fnorm = op.norm(f) if scale is None else scale
    if fnorm == 0.0:
        return np.zeros_like(f)
    b = -(op.mass * f).ravel()
    if method == "auto":
        method = "dense" if op.n < DENSE_LIMIT else "iterative"
    if method == "dense":
        x = _solve_dense(op, kappa, lam, b)
    elif method == "iterative":
        maxiter = maxiter or 20 * op.n
        inner = 0.1 * tol
        x = np.zeros(op.n, complex)
        # iterative refinement: each pass solves for the correction
        for _ in range(4):
            r = b - _system(op, kappa, lam) @ x
            if np.linalg.norm(r) == 0.0:
                break
            if kappa == 1:
                x = x + _solve_cg(op, lam, r, inner, maxiter)
            else:
                x = x + _solve_minres(op, lam, r, inner, maxiter)
            if residual_norm(op, kappa, lam, x.reshape(op.grid.shape), f) <= tol * fnorm:
                break
    else:
        raise ValueError(f"unknown method {method!r}")
    x = x.reshape(op.grid.shape)
    res = residual_norm(op, kappa, lam, x, f)
    if not res <= tol * fnorm:
        raise ResolventNonconvergenceError(
            f"relative residual {res / fnorm:.3e} above {tol:g} ({method})"
        )
    return x


def resolvent_solve(
    problem: ResolventProblem,
    grid: Grid,
    metric: MetricFamily,
    method: str = "auto",
    tol: float = RESIDUAL_TOL,
    op: WentzellOperator | None = None,
) -> StateVector:
    """Solve ``(kappa A(t) - lambda) X = F``; ``F`` is projected onto compatible states."""
    if op is None:
        op = assemble_wentzell_operator(problem.t, grid, metric)
    f = problem.rhs.project(op.weights)
    from .operators import norm as u_norm

    x = solve_shifted(op, problem.kappa, problem.lam, f, method=method, tol=tol,
                      scale=u_norm(problem.rhs, op.weights))
    return StateVector.from_bulk(x)


class ShiftedFactorization:
    """Sparse LU of ``lambda M + kappa K`` for repeated solves of ``(kappa A - lambda) x = f``."""

    def __init__(self, op: WentzellOperator, kappa, lam: float):
        self.op = op
        self.kappa = _check_kappa(kappa)
        if not lam > 0:
            raise ValueError(f"shift must be positive, got {lam}")
        self.lam = float(lam)
        self._lu = spla.splu(sp.csc_matrix(_system(op, self.kappa, self.lam), dtype=complex))

    def solve_system(self, b: np.ndarray) -> np.ndarray:
        """Raw solve of ``(lambda M + kappa K) x = b`` on flattened nodal vectors."""
        return self._lu.solve(np.asarray(b, dtype=complex).ravel())

    def solve(self, f: np.ndarray) -> np.ndarray:
        shape = np.shape(f)
        x = self.solve_system(-(self.op.mass * np.reshape(f, self.op.grid.shape)).ravel())
        return x.reshape(shape)


# --- variational form ---------------------------------------------------------


def bilinear_form(op: WentzellOperator, x, y, lam: float) -> complex:
    """``int g(grad u, grad a) + int h(grad v, grad b) + lambda (u, a)_U``."""
    x = np.reshape(x, op.grid.shape)
    y = np.reshape(y, op.grid.shape)
    grad = np.sum(op.apply_stiffness(x) * np.conj(y))
    return complex(grad + lam * op.inner(x, y))


def v_norm_sq(op: WentzellOperator, x) -> float:
    """Full energy-space norm: Dirichlet energy plus the ``U`` norm squared."""
    return op.energy(x) + op.norm(x) ** 2


def coercivity_estimate(
    t: float,
    lam: float,
    grid: Grid,
    metric: MetricFamily,
    samples: int = 100,
    rng: np.random.Generator | None = None,
) -> float:
    """Minimum of ``B(X, X) / ||X||_V^2`` over random states (the constant state included)."""
    if not lam > 0:
        raise ValueError(f"shift must be positive, got {lam}")
    rng = np.random.default_rng(0) if rng is None else rng
    op = assemble_wentzell_operator(t, grid, metric)
    states = [np.ones(grid.shape, complex)]
    for k in range(samples):
        X = random_state(grid, rng).u
        if k % 2:
            # smooth samples probe the low-energy end of the spectrum
            X = X.mean() + 0.1 * np.cos(grid.theta)[None, :] * (1 + X[:, :1].real)
        states.append(X)
    return min(bilinear_form(op, x, x, lam).real / v_norm_sq(op, x) for x in states)
