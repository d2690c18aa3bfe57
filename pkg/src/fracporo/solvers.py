"""Nonlinear and linear solver kernels.

* :func:`newton_solve` - plain Newton-Raphson with a relative-residual or
  increment stopping test.
* :func:`gmres` - restarted, right-preconditioned GMRES.
* :func:`ilu0` / :func:`jacobi` / :func:`cpr` - preconditioners.
* :func:`sparse_lu` - direct factorization.
* :func:`newton_krylov_fixed_point` - Jacobian-free Newton-Krylov solver for
  ``G(u) = u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import IterationLimit, NonConvergence, OuterNonConvergence, SingularMatrix

__all__ = [
    "NewtonConfig",
    "FixedPointConfig",
    "GmresConfig",
    "NewtonResult",
    "GmresResult",
    "FixedPointResult",
    "SolverCounters",
    "newton_solve",
    "gmres",
    "ilu0",
    "jacobi",
    "sparse_lu",
    "newton_krylov_fixed_point",
]


@dataclass(frozen=True)
class NewtonConfig:
    max_iters: int = 50
    rel_residual_tol: float = 1e-5
    max_primary_increment_tol: float = 1e-4
    abs_residual_tol: float = 1e-14
    # optional bound on the per-phase mass defect relative to the phase mass
    mass_tol: float | None = None

    def __post_init__(self):
        if self.max_iters < 1 or min(self.rel_residual_tol, self.max_primary_increment_tol) <= 0:
            raise ValueError("Newton tolerances and iteration limit must be positive")
        if self.mass_tol is not None and not self.mass_tol > 0:
            raise ValueError("mass_tol must be positive")


PRECONDITIONERS = ("cpr", "ilu0", "jacobi", "none")


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-8
    restart: int = 50
    max_iters: int = 1000
    preconditioner: str = "cpr"
    # accepted relative residual when GMRES stops short of ``tol`` inside Newton
    forcing: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0 or self.restart < 1 or self.max_iters < 1 or not 0 < self.forcing < 1:
            raise ValueError("GMRES settings must be positive")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class FixedPointConfig:
    rel_displacement_increment_tol: float = 1e-5
    max_outer_iters: int = 100
    jfnk_epsilon: float = 1e-7
    inner_tol: float = 1e-2
    inner_restart: int = 30
    inner_max_iters: int = 60
    norm_floor: float = 1e-12

    def __post_init__(self):
        if self.rel_displacement_increment_tol <= 0 or self.max_outer_iters < 1:
            raise ValueError("fixed-point tolerance and iteration limit must be positive")
        if self.jfnk_epsilon <= 0 or not 0 < self.inner_tol < 1:
            raise ValueError("JFNK epsilon must be positive and inner_tol in (0, 1)")


@dataclass
class SolverCounters:
    """Cumulative iteration counters of a run."""

    n_steps: int = 0
    n_chops: int = 0
    n_newton: int = 0
    n_gmres: int = 0
    n_gmres_nk: int = 0
    n_nk: int = 0
    cpu: float = 0.0

    def as_dict(self):
        return {
            "N_dt": self.n_steps,
            "N_Chops": self.n_chops,
            "N_Newton": self.n_newton,
            "N_GMRes": self.n_gmres,
            "N_GMRes_NK": self.n_gmres_nk,
            "N_NK": self.n_nk,
            "CPU": self.cpu,
        }


# -- Newton -------------------------------------------------------------


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    linear_iterations: int = 0
    residual_norm: float = 0.0
    history: list = field(default_factory=list)


def _default_linear_solve(J, rhs):
    if sps.issparse(J):
        return spla.spsolve(J.tocsc(), rhs), 0
    return np.linalg.solve(np.atleast_2d(J), rhs), 0


def newton_solve(
    residual_fn: Callable,
    jacobian_fn: Callable | None,
    x0,
    cfg: NewtonConfig = NewtonConfig(),
    linear_solve: Callable | None = None,
    residual_norm: Callable | None = None,
    update: Callable | None = None,
    accept: Callable | None = None,
) -> NewtonResult:
    """Solve ``R(x) = 0`` by Newton's method.

    Parameters
    ----------
    residual_fn : callable
        ``x -> R``. When ``jacobian_fn`` is None it must return ``(R, J)``.
    jacobian_fn : callable or None
        ``x -> J`` (dense or sparse).
    x0 : array_like
        Initial iterate.
    cfg : NewtonConfig
    linear_solve : callable, optional
        ``(J, rhs) -> (dx, n_linear_iterations)``; sparse direct by default.
    residual_norm : callable, optional
        Norm used in the relative-residual test; Euclidean by default.
    update : callable, optional
        ``(x, dx) -> x_new`` applying a (possibly limited) Newton update;
        ``x + dx`` by default. The increment test uses the applied change.

    Returns
    -------
    NewtonResult

    Raises
    ------
    NonConvergence
        After ``cfg.max_iters`` updates or on a non-finite residual.

    Notes
    -----
    Convergence is declared after an update when either
    ``|R| / |R_0| < rel_residual_tol`` or
    ``max|dx| / max(max|x|, 1) < max_primary_increment_tol``.
    """
    linear_solve = linear_solve or _default_linear_solve
    norm = residual_norm or np.linalg.norm
    x = np.array(x0, dtype=float, copy=True)

    def evaluate(x, need_jac):
        if jacobian_fn is None:
            return residual_fn(x)
        return residual_fn(x), (jacobian_fn(x) if need_jac else None)

    R, J = evaluate(x, True)
    r0 = norm(R)
    if not np.isfinite(r0):
        raise NonConvergence("non-finite initial residual")
    history = [r0]
    if r0 <= cfg.abs_residual_tol:
        return NewtonResult(x, 0, 0, r0, history)
    n_lin = 0
    for it in range(1, cfg.max_iters + 1):
        if J is None:
            J = jacobian_fn(x)
        dx, k = linear_solve(J, -R)
        n_lin += k
        if not np.all(np.isfinite(dx)):
            raise NonConvergence("non-finite Newton update")
        x_new = x + dx if update is None else update(x, dx)
        dx = x_new - x
        x = x_new
        R, J = evaluate(x, jacobian_fn is None)
        r = norm(R)
        history.append(r)
        if not np.isfinite(r):
            raise NonConvergence("non-finite residual")
        inc = np.max(np.abs(dx)) / max(np.max(np.abs(x)), 1.0)
        if r / r0 < cfg.rel_residual_tol or inc < cfg.max_primary_increment_tol or r <= cfg.abs_residual_tol:
            if accept is None or accept(x, R):
                return NewtonResult(x, it, n_lin, r, history)
    raise NonConvergence(f"Newton did not converge in {cfg.max_iters} iterations")


# -- GMRES --------------------------------------------------------------


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_history: list


def _as_matvec(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda v: A @ v


def gmres(
    A,
    b,
    preconditioner: Callable | None = None,
    tol: float = 1e-8,
    restart: int = 50,
    max_iters: int = 1000,
    x0=None,
    raise_on_failure: bool = True,
) -> GmresResult:
    """Restarted GMRES with right preconditioning.

    Solves ``A x = b`` until ``|b - A x| <= tol |b|``.

    Parameters
    ----------
    A : matrix, LinearOperator or callable
    b : ndarray
    preconditioner : callable, optional
        Approximate inverse ``v -> M^{-1} v``.
    tol, restart, max_iters
        Relative tolerance, Krylov subspace size and total iteration budget.
    x0 : ndarray, optional
    raise_on_failure : bool
        Raise :class:`IterationLimit` when the budget is exhausted or a
        restart cycle fails to reduce the true residual by 10 percent
        (stagnation at the attainable accuracy); otherwise return the best
        iterate with ``converged=False``.
    """
    matvec = _as_matvec(A)
    prec = preconditioner or (lambda v: v)
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float, copy=True)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), 0, True, [0.0])
    target = tol * bnorm
    total = 0
    history = []
    best = (np.inf, x)
    stagnated = False
    while True:
        r = b - matvec(x) if total or x0 is not None else b.copy()
        beta = np.linalg.norm(r)
        history.append(beta / bnorm)
        if beta <= target:
            return GmresResult(x, total, True, history)
        if beta > 0.9 * best[0]:
            stagnated = True
            break
        best = (beta, x)
        if total >= max_iters:
            break
        m = min(restart, max_iters - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            Z[j] = prec(V[j])
            w = matvec(Z[j])
            # classical Gram-Schmidt with one reorthogonalization pass
            h = V[: j + 1] @ w
            w = w - h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w = w - h2 @ V[: j + 1]
            h += h2
            hn = np.linalg.norm(w)
            H[: j + 1, j] = h
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            history.append(abs(g[j + 1]) / bnorm)
            if abs(g[j + 1]) <= target or hn == 0.0:
                break
            V[j + 1] = w / hn
        y = _upper_solve(H[:j_done, :j_done], g[:j_done])
        x = x + y @ Z[:j_done]
        if abs(g[j_done]) <= target:
            # confirm with the true residual before returning
            r = b - matvec(x)
            if np.linalg.norm(r) <= target * (1 + 1e-6):
                history.append(np.linalg.norm(r) / bnorm)
                return GmresResult(x, total, True, history)
        if total >= max_iters:
            r = b - matvec(x)
            history.append(np.linalg.norm(r) / bnorm)
            if np.linalg.norm(r) < best[0]:
                best = (np.linalg.norm(r), x)
            break
    if raise_on_failure:
        why = "stagnated" if stagnated else f"did not converge in {max_iters} iterations"
        raise IterationLimit(f"GMRES {why} at relative residual {best[0] / bnorm:.3g} (tol {tol:g})")
    return GmresResult(best[1], total, False, history)


def _upper_solve(H, g):
    n = len(g)
    y = np.zeros(n)
    for i in range(n - 1, -1, -1):
        d = H[i, i]
        y[i] = (g[i] - H[i, i + 1 :] @ y[i + 1 :]) / d if d != 0 else 0.0
    return y


# -- preconditioners ----------------------------------------------------


@numba.njit(cache=True)
def _ilu0_factor(n, indptr, indices, data, diag):
    a = data.copy()
    iw = -np.ones(n, dtype=np.int64)
    small = 0
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            iw[indices[jj]] = jj
        for kk in range(indptr[i], diag[i]):
            k = indices[kk]
            lik = a[kk] / a[diag[k]]
            a[kk] = lik
            for jj in range(diag[k] + 1, indptr[k + 1]):
                pos = iw[indices[jj]]
                if pos >= 0:
                    a[pos] -= lik * a[jj]
        for jj in range(indptr[i], indptr[i + 1]):
            iw[indices[jj]] = -1
        if a[diag[i]] == 0.0:
            a[diag[i]] = 1e-300
            small += 1
    return a, small


@numba.njit(cache=True)
def _ilu0_solve(n, indptr, indices, lu, diag, b):
    x = b.copy()
    for i in range(n):
        s = x[i]
        for jj in range(indptr[i], diag[i]):
            s -= lu[jj] * x[indices[jj]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for jj in range(diag[i] + 1, indptr[i + 1]):
            s -= lu[jj] * x[indices[jj]]
        x[i] = s / lu[diag[i]]
    return x


@numba.njit(cache=True)
def _find_diag(n, indptr, indices):
    diag = -np.ones(n, dtype=np.int64)
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] == i:
                diag[i] = jj
                break
    return diag


class ILU0:
    """Zero fill-in incomplete LU factorization in natural ordering."""

    def __init__(self, A):
        A = sps.csr_matrix(A, dtype=float)
        A.sum_duplicates()
        A.sort_indices()
        n = A.shape[0]
        self.n = n
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.diag = _find_diag(n, self.indptr, self.indices)
        if np.any(self.diag < 0):
            raise SingularMatrix("ILU(0) needs a structurally nonzero diagonal")
        self.lu, self.n_small_pivots = _ilu0_factor(n, self.indptr, self.indices, A.data, self.diag)

    def __call__(self, v):
        return _ilu0_solve(self.n, self.indptr, self.indices, self.lu, self.diag, np.asarray(v, dtype=float))


def ilu0(A) -> ILU0:
    """Build an ILU(0) preconditioner ``v -> (LU)^{-1} v``."""
    return ILU0(A)


def jacobi(A) -> Callable:
    """Diagonal (Jacobi) preconditioner."""
    d = np.asarray(sps.csr_matrix(A).diagonal(), dtype=float)
    inv = np.where(d != 0, 1.0 / np.where(d != 0, d, 1.0), 1.0)
    return lambda v: inv * v


def cpr(A, block: int = 2):
    """Two-stage constrained-pressure-residual preconditioner.

    Unknowns are grouped in consecutive blocks of ``block`` (one block per
    control volume). The first stage solves exactly for a common pressure
    shift per block, using the sum of the block's rows; the second stage
    applies ILU(0) to the remaining residual. The first stage captures the
    weakly damped total-pressure mode that ILU(0) alone resolves poorly.
    """
    A = sps.csr_matrix(A, dtype=float)
    n = A.shape[0] // block
    restrict = sps.kron(sps.eye(n, format="csr"), np.ones((1, block)), format="csr")
    prolong = restrict.T.tocsr()
    pressure = sparse_lu(restrict @ A @ prolong)
    try:
        smoother = ilu0(A)
    except SingularMatrix:
        smoother = jacobi(A)

    def apply(r):
        x1 = prolong @ pressure.solve(restrict @ r)
        return x1 + smoother(r - A @ x1)

    return apply


def make_preconditioner(A, kind: str):
    """Preconditioner by name; ILU(0) falls back to Jacobi on a zero pivot."""
    if kind == "none":
        return None
    if kind == "jacobi":
        return jacobi(A)
    if kind == "cpr":
        return cpr(A)
    try:
        return ilu0(A)
    except SingularMatrix:
        return jacobi(A)


# -- direct -------------------------------------------------------------


class SparseLU:
    """Thin wrapper around SuperLU with a singularity check."""

    def __init__(self, A):
        A = sps.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise SingularMatrix("matrix is not square")
        nnz_rows = np.diff(sps.csr_matrix(np.abs(A) > 0).indptr)
        if np.any(nnz_rows == 0):
            raise SingularMatrix("matrix has an empty row")
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        udiag = self._lu.U.diagonal()
        if np.any(udiag == 0) or not np.all(np.isfinite(udiag)):
            raise SingularMatrix("zero pivot in LU factorization")
        self.shape = A.shape

    def solve(self, rhs):
        x = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("non-finite solution")
        return x


def sparse_lu(A) -> SparseLU:
    """Factorize ``A``; raises :class:`SingularMatrix` when singular."""
    return SparseLU(A)


# -- Newton-Krylov fixed point -------------------------------------------


@dataclass
class FixedPointResult:
    u: np.ndarray
    iterations: int
    evaluations: int
    krylov_iterations: int
    history: list


def newton_krylov_fixed_point(
    G: Callable,
    u0,
    cfg: FixedPointConfig = FixedPointConfig(),
    jvp: Callable | None = None,
) -> FixedPointResult:
    """Solve ``F(u) = G(u) - u = 0`` by Jacobian-free Newton-Krylov.

    Parameters
    ----------
    G : callable
        Fixed-point map.
    u0 : ndarray
        Initial iterate.
    cfg : FixedPointConfig
    jvp : callable, optional
        ``(u, v) -> F'(u) v``. By default the directional derivative is the
        forward difference ``(F(u + eps v) - F(u)) / eps`` with
        ``eps = jfnk_epsilon (1 + |u|) / |v|``.

    Returns
    -------
    FixedPointResult
        ``iterations`` counts Newton updates, ``evaluations`` counts calls of
        ``G`` at outer iterates.

    Raises
    ------
    OuterNonConvergence
        After ``cfg.max_outer_iters`` updates.
    """
    u = np.array(u0, dtype=float, copy=True)
    history = []
    n_krylov = 0
    n_eval = 0
    for k in range(cfg.max_outer_iters + 1):
        g = G(u)
        n_eval += 1
        F = g - u
        fn = np.linalg.norm(F)
        scale = max(np.linalg.norm(g), cfg.norm_floor)
        history.append(fn / scale)
        if not np.isfinite(fn):
            raise OuterNonConvergence("non-finite fixed-point residual")
        if fn <= cfg.rel_displacement_increment_tol * scale:
            return FixedPointResult(u, k, n_eval, n_krylov, history)
        if k == cfg.max_outer_iters:
            break

        if jvp is None:
            unorm = np.linalg.norm(u)

            def matvec(v, u=u, F=F, unorm=unorm):
                vn = np.linalg.norm(v)
                if vn == 0:
                    return np.zeros_like(v)
                eps = cfg.jfnk_epsilon * (1.0 + unorm) / vn
                return (G(u + eps * v) - (u + eps * v) - F) / eps

        else:

            def matvec(v, u=u):
                return jvp(u, v)

        res = gmres(
            matvec,
            -F,
            tol=cfg.inner_tol,
            restart=cfg.inner_restart,
            max_iters=cfg.inner_max_iters,
            raise_on_failure=False,
        )
        n_krylov += res.iterations
        u = u + res.x
    raise OuterNonConvergence(
        f"fixed point not converged in {cfg.max_outer_iters} iterations "
        f"(last relative increment {history[-1]:.3g})"
    )
