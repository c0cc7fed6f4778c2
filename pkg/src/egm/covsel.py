"""Graph-constrained scatter completion and its asymptotic covariances.

Given an SPD matrix A and a graph G, :func:`constrain_scatter` computes
the unique SPD matrix that agrees with A on edges and the diagonal while
its inverse vanishes on the absent edges.  The solver is clique-wise
iterative proportional scaling on the concentration matrix, which
converges for arbitrary (also non-decomposable) graphs.

The analytic derivative of that map and the asymptotic covariance
matrices of constrained scatter estimates built from it are provided as
dense p^2 x p^2 (resp. (m-q) x (m-q)) matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DefinitenessError, PreconditionError
from .graphs import GraphIndex
from .linops import check_spd, kron, spd_inverse, symmetrization_matrix, vec

__all__ = [
    "AsymptoticScalars",
    "ConstrainedFit",
    "constrain_scatter",
    "constrain_jacobian",
    "scatter_acov",
    "constrained_scatter_acov",
    "concentration_acov",
    "edge_basis_gram",
    "pattern_violation",
]

#: condition number beyond which a conditioning warning is attached
COND_WARN = 1e12


@dataclass(frozen=True)
class AsymptoticScalars:
    """The scalar triple (sigma1, sigma2, eta) of a scatter estimator.

    sigma1 and sigma2 parametrize the asymptotic covariance of the
    estimator at an elliptical distribution; eta is the scale factor
    relating the estimator's limit to the shape matrix.
    """

    sigma1: float
    sigma2: float
    eta: float = 1.0

    def __post_init__(self):
        if self.sigma1 < 0:
            raise PreconditionError(f"sigma1 must be >= 0, got {self.sigma1}")
        if self.eta <= 0:
            raise PreconditionError(f"eta must be > 0, got {self.eta}")

    def check_bounds(self, p: int, slack: float = 1e-12) -> None:
        """Validate sigma2 >= -2*sigma1/p for dimension p."""
        if self.sigma2 < -2.0 * self.sigma1 / p - slack:
            raise PreconditionError(
                f"sigma2={self.sigma2} below the admissible bound {-2.0 * self.sigma1 / p} for p={p}"
            )


@dataclass
class ConstrainedFit:
    """Result of a constrained-scatter completion.

    ``residual`` is the max-abs violation of the two defining conditions
    (entry match on edges/diagonal, inverse zeros on absent edges);
    ``residual_history`` holds one value per completed sweep.
    """

    matrix: np.ndarray
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list)
    condition_warning: bool = False


def _residual(Sigma, Kmat, A, index: GraphIndex) -> float:
    """Max-abs violation of the two defining conditions."""
    res_match = np.max(np.abs((Sigma - A)[index.k_mask])) if index.k_mask.any() else 0.0
    res_zero = np.max(np.abs(Kmat[index.d_mask])) if index.d_mask.any() else 0.0
    return float(max(res_match, res_zero))


def constrain_scatter(A, index: GraphIndex, tol: float = 1e-10,
                      max_iter: int = 10_000) -> ConstrainedFit:
    """Complete A to the graph-constrained scatter matrix.

    Parameters
    ----------
    A : (p, p) array_like
        Symmetric positive definite input.
    index : GraphIndex
        Graph machinery from :func:`egm.graphs.build_index`.
    tol : float
        Bound on the max-abs violation of the defining conditions.
    max_iter : int
        Maximum number of full clique sweeps.

    Returns
    -------
    ConstrainedFit
        The completed matrix plus convergence diagnostics.

    Raises
    ------
    DefinitenessError
        If A is not SPD.
    ConvergenceError
        If the sweep budget is exhausted; carries the last residual.

    Notes
    -----
    One sweep updates, for every maximal clique C, the C-block of the
    concentration matrix so that the implied scatter marginal matches
    A on C.  The concentration iterate keeps exact zeros at absent-edge
    positions throughout, so only the entry-match part of the residual
    is ever nonzero.
    """
    A = check_spd(A)
    p = index.p
    if A.shape != (p, p):
        raise PreconditionError(f"matrix is {A.shape} but the graph has p={p}")
    cond_flag = bool(np.linalg.cond(A) > COND_WARN)
    if cond_flag:
        warnings.warn("input matrix has condition number above 1e12", RuntimeWarning)

    if index.q == 0:
        return ConstrainedFit(A.copy(), 0, 0.0, [0.0], cond_flag)

    # a compliant input is its own completion; return it unchanged
    res0 = _residual(A, spd_inverse(A), A, index)
    if res0 <= tol:
        return ConstrainedFit(A.copy(), 0, res0, [res0], cond_flag)

    cliques = [np.array(c, dtype=int) - 1 for c in index.cliques]
    K = np.diag(1.0 / np.diag(A))
    W = np.diag(np.diag(A).copy())  # W tracks K^{-1}

    history = []
    for sweep in range(1, max_iter + 1):
        for C in cliques:
            Acc_inv = spd_inverse(A[np.ix_(C, C)])
            Wcc = W[np.ix_(C, C)]
            delta = Acc_inv - spd_inverse(Wcc)
            K[np.ix_(C, C)] += delta
            # Woodbury update of W = K^{-1}; the (I + delta Wcc) form
            # avoids inverting a possibly tiny delta.
            WU = W[:, C]
            M = np.linalg.solve(np.eye(len(C)) + delta @ Wcc, delta)
            W = W - WU @ M @ WU.T
        # refresh the inverse once per sweep to stop Woodbury drift
        W = spd_inverse(K)
        res = _residual(W, K, A, index)
        history.append(res)
        if res <= tol:
            return ConstrainedFit(0.5 * (W + W.T), sweep, res, history, cond_flag)
    raise ConvergenceError(
        f"constrained completion did not reach tol={tol} in {max_iter} sweeps "
        f"(last residual {history[-1]:.3e})",
        residual=history[-1],
    )


def constrain_jacobian(A, index: GraphIndex, tol: float = 1e-12) -> np.ndarray:
    """Derivative of the constrained-completion map at A, as p^2 x p^2.

    With U the inverse of the completed matrix, the derivative equals

        M_p - M_p Q_D^T {Q_D M_p (U x U) Q_D^T}^{-1} Q_D (U x U) M_p,

    and reduces to M_p when the graph is complete.  The inner q x q
    system is solved by a symmetric (Cholesky) factorization; a warning
    is raised when it is ill-conditioned.
    """
    p = index.p
    Mp = symmetrization_matrix(p)
    if index.q == 0:
        return Mp
    fit = constrain_scatter(A, index, tol=tol)
    U = spd_inverse(fit.matrix)
    UU = kron(U, U)
    QD = index.Q_D
    B = QD @ (Mp @ UU) @ QD.T
    B = 0.5 * (B + B.T)
    eigs = np.linalg.eigvalsh(B)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > COND_WARN:
        warnings.warn("constraint system is ill-conditioned", RuntimeWarning)
    X = scipy.linalg.solve(B, QD @ (UU @ Mp), assume_a="pos")
    return Mp - (Mp @ QD.T) @ X


def scatter_acov(V, scalars: AsymptoticScalars) -> np.ndarray:
    """Asymptotic covariance 2*s1*M_p(V x V) + s2*vec(V)vec(V)^T."""
    V = check_spd(V)
    p = V.shape[0]
    scalars.check_bounds(p)
    Mp = symmetrization_matrix(p)
    vV = vec(V)
    return 2.0 * scalars.sigma1 * Mp @ kron(V, V) + scalars.sigma2 * np.outer(vV, vV)


def pattern_violation(V, index: GraphIndex) -> float:
    """Max-abs entry of V^{-1} on absent-edge positions."""
    U = spd_inverse(V)
    return float(np.max(np.abs(U[index.d_mask]))) if index.d_mask.any() else 0.0


def constrained_scatter_acov(V, index: GraphIndex, scalars: AsymptoticScalars,
                             form: str = "auto") -> np.ndarray:
    """Asymptotic covariance of the graph-constrained scatter estimate.

    ``form`` selects the evaluation: "general" pushes the unconstrained
    covariance through the completion derivative; "reduced" uses the
    closed form valid when the inverse of V already has the graph's zero
    pattern; "auto" picks "reduced" exactly in that case.
    """
    V = check_spd(V)
    p = index.p
    scalars.check_bounds(p)
    if form not in ("auto", "general", "reduced"):
        raise PreconditionError(f"unknown form {form!r}")
    pattern_ok = pattern_violation(V, index) <= 1e-10 * max(1.0, float(np.max(np.abs(V))))
    if form == "reduced" and not pattern_ok:
        raise PreconditionError("reduced form requires the inverse zero pattern to hold")
    if form == "auto":
        form = "reduced" if pattern_ok else "general"

    Mp = symmetrization_matrix(p)
    if form == "general" or index.q == 0:
        J = constrain_jacobian(V, index)
        VG = constrain_scatter(V, index).matrix
        vG = vec(VG)
        W = 2.0 * scalars.sigma1 * J @ kron(V, V) @ J.T + scalars.sigma2 * np.outer(vG, vG)
    else:
        U = spd_inverse(V)
        QD = index.Q_D
        B = QD @ (Mp @ kron(U, U)) @ QD.T
        B = 0.5 * (B + B.T)
        inner = kron(V, V) - QD.T @ scipy.linalg.solve(B, QD @ Mp, assume_a="pos")
        vV = vec(V)
        W = 2.0 * scalars.sigma1 * Mp @ inner + scalars.sigma2 * np.outer(vV, vV)
    return 0.5 * (W + W.T)


def edge_basis_gram(V, index: GraphIndex) -> np.ndarray:
    """Gram matrix Gamma^T (V x V) Gamma of the symmetric edge basis.

    Gamma maps the m-q free concentration entries to vec form; its
    columns are vec(E_ij + E_ji) for sub-diagonal edges and vec(E_ii)
    for the diagonal.  Entries are assembled from p x p products only.
    """
    kpos = index.K.positions
    r = len(kpos)
    G = np.empty((r, r))
    for b, (k, l) in enumerate(kpos):
        vk = V[:, k - 1]
        vl = V[:, l - 1]
        if k == l:
            T = np.outer(vk, vk)
        else:
            T = np.outer(vk, vl) + np.outer(vl, vk)
        for a, (i, j) in enumerate(kpos):
            if i == j:
                G[a, b] = T[i - 1, i - 1]
            else:
                G[a, b] = T[i - 1, j - 1] + T[j - 1, i - 1]
    return 0.5 * (G + G.T)


def concentration_acov(V, index: GraphIndex, scalars: AsymptoticScalars,
                       pattern_tol: float = 1e-8) -> np.ndarray:
    """Asymptotic covariance of the free concentration entries.

    Valid when the inverse of V carries the graph's zero pattern; raises
    otherwise.  Equals 2*s1*{Gamma^T (V x V) Gamma}^{-1} + s2*u u^T with
    u the free entries of the inverse, and has full rank.
    """
    V = check_spd(V)
    scalars.check_bounds(index.p)
    if pattern_violation(V, index) > pattern_tol:
        raise PreconditionError(
            "inverse of V violates the graph zero pattern beyond "
            f"{pattern_tol:g}"
        )
    U = spd_inverse(V)
    G = edge_basis_gram(V, index)
    u = vec(U)[index.K.vec_indices()]
    W = 2.0 * scalars.sigma1 * spd_inverse(G) + scalars.sigma2 * np.outer(u, u)
    return 0.5 * (W + W.T)
