"""Multivariate M-estimators of location and scatter.

Provides the unconstrained simultaneous fixed-point solver, the
graph-constrained (double-loop) variant, the plug-in estimator, and the
asymptotic scalars (sigma1, sigma2, eta) of the three classical cases:
sample covariance, elliptical maximum likelihood, and general monotone
M-estimators.

Built-in weight families, addressable by string:

* ``gaussian``      constant weights; reproduces mean / covariance,
* ``t:NU``          elliptical-t maximum-likelihood weights,
* ``huber:K``       Huber weights, scatter part rescaled to be
                    consistent at the Gaussian distribution.

Tyler's distribution-free estimator (u2(s) = p/s) is deliberately not
offered for graphical fitting: its phi2 is constant, which sits on the
boundary of the monotonicity assumptions, and its scale indeterminacy
does not mix well with the constrained estimating equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.optimize
import scipy.stats

from .covsel import AsymptoticScalars, constrain_scatter
from .errors import (
    ConvergenceError,
    DegenerateDataError,
    DimensionError,
    PreconditionError,
    SampleSizeError,
)
from .graphs import GraphIndex

__all__ = [
    "EstimatorSpec",
    "FitResult",
    "RadialLaw",
    "make_spec",
    "radial_for_family",
    "m_estimate",
    "graphical_m_estimate",
    "plug_in_estimate",
    "sample_cov_scalars",
    "mle_scalars",
    "m_scalars",
    "scalars_for",
]

_MC_FALLBACK_SEED = 202406
_MC_FALLBACK_SIZE = 10**6


@dataclass(frozen=True)
class EstimatorSpec:
    """A weight-function pair (u1, u2) identifying an M-estimator family.

    ``u1`` weighs the location equation, ``u2`` the scatter equation;
    both take squared Mahalanobis radii (vectorized).  ``phi2_prime`` is
    the derivative of phi2(s) = s*u2(s) where known analytically.
    """

    name: str
    u1: Callable[[np.ndarray], np.ndarray]
    u2: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)
    phi2_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def phi1(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.u1(s)

    def phi2(self, s):
        s = np.asarray(s, dtype=float)
        return s * self.u2(s)

    def check_monotone(self, upper: float = 100.0, n: int = 1000,
                       slack: float = 1e-10) -> None:
        """Verify u1, u2 non-increasing and phi1, phi2 non-decreasing.

        Checked on a grid of ``n`` points over (0, upper]; raises
        PreconditionError on violation.
        """
        grid = np.linspace(upper / n, upper, n)
        for label, f, sign in (("u1", self.u1, -1), ("u2", self.u2, -1),
                               ("phi1", self.phi1, 1), ("phi2", self.phi2, 1)):
            d = sign * np.diff(np.asarray(f(grid), dtype=float))
            if np.any(d < -slack):
                kind = "non-increasing" if sign < 0 else "non-decreasing"
                raise PreconditionError(f"{label} of spec {self.name!r} is not {kind}")


def make_spec(text: str, p: int) -> EstimatorSpec:
    """Build an estimator spec from its string form for dimension p.

    Accepted forms: ``gaussian``, ``t:NU`` (NU > 0), ``huber:K`` (K > 0).
    The Huber scatter weight is rescaled by the consistency constant
    c = p / E[min(R, k^2)] under the chi-square(p) radial law, computed
    by quadrature.
    """
    text = text.strip()
    if text == "gaussian":
        one = lambda s: np.ones_like(np.asarray(s, dtype=float))
        spec = EstimatorSpec("gaussian", one, one, {},
                             phi2_prime=lambda s: np.ones_like(np.asarray(s, dtype=float)))
    elif text.startswith("t:"):
        nu = float(text[2:])
        if nu <= 0:
            raise PreconditionError(f"t degrees of freedom must be > 0, got {nu}")
        a = p + nu

        def u(s, nu=nu, a=a):
            return a / (nu + np.asarray(s, dtype=float))

        def dphi2(s, nu=nu, a=a):
            return a * nu / (nu + np.asarray(s, dtype=float)) ** 2

        spec = EstimatorSpec(text, u, u, {"nu": nu}, phi2_prime=dphi2)
    elif text.startswith("huber:"):
        k = float(text[6:])
        if k <= 0:
            raise PreconditionError(f"huber threshold must be > 0, got {k}")
        k2 = k * k
        c = p / radial_for_family("gaussian", p).expect(lambda r: np.minimum(r, k2))

        def u1(s, k=k):
            # the floor only dodges a 0/0 warning; the weight is 1 there
            s = np.maximum(np.asarray(s, dtype=float), 1e-300)
            return np.minimum(1.0, k / np.sqrt(s))

        def u2(s, c=c, k2=k2):
            s = np.maximum(np.asarray(s, dtype=float), 1e-300)
            return c * np.minimum(1.0, k2 / s)

        def dphi2(s, c=c, k2=k2):
            return np.where(np.asarray(s, dtype=float) < k2, c, 0.0)

        spec = EstimatorSpec(text, u1, u2, {"k": k, "c": c}, phi2_prime=dphi2)
    else:
        raise PreconditionError(f"unknown estimator spec {text!r}")
    spec.check_monotone()
    return spec


@dataclass(frozen=True)
class RadialLaw:
    """Distribution of the squared radius R of an elliptical law.

    Expectations are computed by adaptive quadrature over the density
    (mapped to (0, 1) via r = s/(1-s)); empirical laws fall back to a
    fixed-seed Monte Carlo average.
    """

    kind: str
    p: int
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sampler: Optional[Callable] = None
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.density is None and self.sampler is None and self.samples is None:
            raise PreconditionError("radial law needs a density, a sampler, or samples")
        if self.density is not None:
            total = self._quad(lambda r: np.ones_like(r))
            if abs(total - 1.0) > 1e-8:
                raise PreconditionError(
                    f"radial density integrates to {total!r}, not 1"
                )

    @classmethod
    def chi_square(cls, p: int) -> "RadialLaw":
        """Radial law of a Gaussian vector: chi-square with p df."""
        dist = scipy.stats.chi2(p)
        return cls("chi-square-p", p, density=dist.pdf,
                   sampler=lambda rng, n: rng.chisquare(p, n))

    @classmethod
    def scaled_f(cls, p: int, nu: float) -> "RadialLaw":
        """Radial law of an elliptical t: R/p follows F(p, nu)."""
        dist = scipy.stats.f(p, nu)
        return cls(f"scaled-f-t:{nu:g}", p,
                   density=lambda r: dist.pdf(np.asarray(r, dtype=float) / p) / p,
                   sampler=lambda rng, n: p * rng.f(p, nu, n))

    @classmethod
    def empirical(cls, samples, p: int) -> "RadialLaw":
        return cls("empirical", p, samples=np.asarray(samples, dtype=float))

    @classmethod
    def from_density(cls, density, p: int) -> "RadialLaw":
        return cls("user-density", p, density=density)

    def _quad(self, fn) -> float:
        def integrand(s):
            r = s / (1.0 - s)
            return fn(np.asarray([r]))[0] * self.density(np.asarray([r]))[0] / (1.0 - s) ** 2

        val, _ = scipy.integrate.quad(integrand, 0.0, 1.0,
                                      epsabs=1e-12, epsrel=1e-11, limit=400)
        return val

    def _mc_samples(self) -> np.ndarray:
        if self.samples is not None:
            return self.samples
        rng = np.random.default_rng(_MC_FALLBACK_SEED)
        return self.sampler(rng, _MC_FALLBACK_SIZE)

    def expect(self, fn) -> float:
        """E[fn(R)] by quadrature, or Monte Carlo without a density."""
        if self.density is not None:
            return self._quad(lambda r: np.asarray(fn(r), dtype=float))
        return float(np.mean(fn(self._mc_samples())))

    def sample(self, rng, n: int) -> np.ndarray:
        if self.sampler is not None:
            return self.sampler(rng, n)
        if self.samples is not None:
            return rng.choice(self.samples, size=n, replace=True)
        raise PreconditionError("radial law has no sampler")


def radial_for_family(family: str, p: int) -> RadialLaw:
    """Radial law of a named elliptical family (``gaussian`` or ``t:NU``)."""
    family = family.strip()
    if family == "gaussian":
        return RadialLaw.chi_square(p)
    if family.startswith("t:"):
        nu = float(family[2:])
        if nu <= 0:
            raise PreconditionError(f"t degrees of freedom must be > 0, got {nu}")
        return RadialLaw.scaled_f(p, nu)
    raise PreconditionError(f"unknown elliptical family {family!r}")


@dataclass
class FitResult:
    """Location/scatter estimate with convergence diagnostics."""

    mu: np.ndarray
    scatter: np.ndarray
    scalars: Optional[AsymptoticScalars]
    iterations: int
    converged: bool
    residual: float


def _validate_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"data must be an n x p matrix, got shape {X.shape}")
    n, p = X.shape
    if n < p + 1:
        raise SampleSizeError(f"estimation requires at least p+1={p + 1} data points, got {n}")
    if np.linalg.matrix_rank(X - X.mean(axis=0)) < p:
        raise DegenerateDataError("data is not in general position (rank deficient)")
    return X


def _radii(X, mu, S) -> np.ndarray:
    Xc = X - mu
    L = np.linalg.cholesky(0.5 * (S + S.T))
    Y = np.linalg.solve(L, Xc.T)
    return np.einsum("ij,ij->j", Y, Y)


def _equation_residual(X, mu, S, spec) -> float:
    """Max-abs residual of the simultaneous estimating equations."""
    n = X.shape[0]
    R = _radii(X, mu, S)
    w1 = spec.u1(R)
    w2 = spec.u2(R)
    mu_fix = (w1[:, None] * X).sum(axis=0) / w1.sum()
    Xc = X - mu
    S_fix = (w2[:, None] * Xc).T @ Xc / n
    scale = max(1.0, float(np.max(np.abs(S))))
    return float(max(np.max(np.abs(mu_fix - mu)),
                     np.max(np.abs(S_fix - S)) / scale))


def m_estimate(X, spec: EstimatorSpec, tol: float = 1e-9,
               max_iter: int = 500) -> FitResult:
    """Solve the simultaneous location/scatter M-estimating equations.

    Parameters
    ----------
    X : (n, p) array_like
        Data, n >= p+1 rows in general position.
    spec : EstimatorSpec
        Weight functions.
    tol : float
        Bound on both the relative parameter change and the equation
        residual when plugging the estimate back in.
    max_iter : int
        Fixed-point iteration budget.

    Notes
    -----
    Plain alternating fixed-point iteration: reweighted mean for the
    location, reweighted scatter for the shape, radii refreshed each
    pass.  Gaussian weights converge in one step to the sample mean and
    the 1/n-denominator sample covariance.
    """
    X = _validate_data(X)
    n, p = X.shape
    mu = X.mean(axis=0)
    Xc = X - mu
    S = Xc.T @ Xc / n

    for it in range(1, max_iter + 1):
        R = _radii(X, mu, S)
        w1 = spec.u1(R)
        w2 = spec.u2(R)
        mu_new = (w1[:, None] * X).sum(axis=0) / w1.sum()
        Xc = X - mu_new
        S_new = (w2[:, None] * Xc).T @ Xc / n
        scale = max(1.0, float(np.max(np.abs(S))))
        change = max(float(np.max(np.abs(mu_new - mu))),
                     float(np.max(np.abs(S_new - S))) / scale)
        mu, S = mu_new, S_new
        if change <= tol:
            residual = _equation_residual(X, mu, S, spec)
            if residual <= tol:
                return FitResult(mu, S, None, it, True, residual)
    residual = _equation_residual(X, mu, S, spec)
    raise ConvergenceError(
        f"M-estimation did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})", residual=residual)


def _constrained_residual(X, mu, S, spec, index: GraphIndex) -> float:
    """Max-abs residual of the graph-constrained estimating equations."""
    n = X.shape[0]
    R = _radii(X, mu, S)
    w1 = spec.u1(R)
    w2 = spec.u2(R)
    mu_fix = (w1[:, None] * X).sum(axis=0) / w1.sum()
    Xc = X - mu
    W = (w2[:, None] * Xc).T @ Xc / n
    scale = max(1.0, float(np.max(np.abs(S))))
    r1 = float(np.max(np.abs(mu_fix - mu)))
    r2 = float(np.max(np.abs((S - W)[index.k_mask]))) / scale
    Khat = np.linalg.inv(S)
    r3 = float(np.max(np.abs(Khat[index.d_mask]))) if index.d_mask.any() else 0.0
    return max(r1, r2, r3)


def graphical_m_estimate(X, index: GraphIndex, spec: EstimatorSpec,
                         tol: float = 1e-9, max_iter: int = 500) -> FitResult:
    """Solve the graph-constrained M-estimating equations.

    Double-loop iteration: the outer loop reweights location and scatter
    at the current estimate, the inner loop runs a complete constrained
    completion (IPS) of the weighted scatter.  The inner tolerance
    follows the outer progress down to one hundredth of ``tol`` so early
    inner problems are not over-solved.
    """
    X = _validate_data(X)
    n, p = X.shape
    if p != index.p:
        raise DimensionError(f"data has {p} columns but the graph has p={index.p}")
    mu = X.mean(axis=0)
    Xc = X - mu
    S = constrain_scatter(Xc.T @ Xc / n, index, tol=1e-2 * tol).matrix

    change = np.inf
    for it in range(1, max_iter + 1):
        R = _radii(X, mu, S)
        w1 = spec.u1(R)
        w2 = spec.u2(R)
        mu_new = (w1[:, None] * X).sum(axis=0) / w1.sum()
        Xc = X - mu_new
        W = (w2[:, None] * Xc).T @ Xc / n
        inner_tol = min(max(1e-2 * change, 1e-2 * tol), 1e-2)
        S_new = constrain_scatter(W, index, tol=inner_tol).matrix
        scale = max(1.0, float(np.max(np.abs(S))))
        change = max(float(np.max(np.abs(mu_new - mu))),
                     float(np.max(np.abs(S_new - S))) / scale)
        mu, S = mu_new, S_new
        if change <= tol:
            residual = _constrained_residual(X, mu, S, spec, index)
            if residual <= tol:
                return FitResult(mu, S, None, it, True, residual)
    residual = _constrained_residual(X, mu, S, spec, index)
    raise ConvergenceError(
        f"graphical M-estimation did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})", residual=residual)


def plug_in_estimate(X, index: GraphIndex, spec: EstimatorSpec,
                     tol: float = 1e-9, max_iter: int = 500,
                     completion_tol: float = 1e-10) -> FitResult:
    """Unconstrained M-estimate followed by constrained completion."""
    fit = m_estimate(X, spec, tol=tol, max_iter=max_iter)
    S_P = constrain_scatter(fit.scatter, index, tol=completion_tol).matrix
    return FitResult(fit.mu, S_P, None, fit.iterations, fit.converged, fit.residual)


def sample_cov_scalars(kappa: float, p: Optional[int] = None) -> AsymptoticScalars:
    """Scalars of the sample covariance: sigma1 = 1 + kappa/3, sigma2 = kappa/3.

    ``kappa`` is the excess kurtosis of any single component; the
    Gaussian case kappa = 0 gives (1, 0, 1).
    """
    s = AsymptoticScalars(1.0 + kappa / 3.0, kappa / 3.0, 1.0)
    if p is not None:
        s.check_bounds(p)
    return s


def mle_scalars(radial: RadialLaw, g_logderiv, p: int) -> AsymptoticScalars:
    """Scalars of the elliptical maximum likelihood estimator.

    ``g_logderiv`` is (log g)'(y) for the density generator g; the MLE
    weight is u(y) = -2 (log g)'(y) and

        sigma1 = p(p+2) / E[R^2 u^2(R)],
        sigma2 = -2 sigma1 (1 - sigma1) / {2 + p(1 - sigma1)}.
    """
    def integrand(r):
        r = np.asarray(r, dtype=float)
        u = -2.0 * np.asarray(g_logderiv(r), dtype=float)
        return (r * u) ** 2

    denom = radial.expect(integrand)
    sigma1 = p * (p + 2.0) / denom
    sigma2 = -2.0 * sigma1 * (1.0 - sigma1) / (2.0 + p * (1.0 - sigma1))
    s = AsymptoticScalars(sigma1, sigma2, 1.0)
    s.check_bounds(p)
    return s


def m_scalars(spec: EstimatorSpec, radial: RadialLaw, p: int) -> AsymptoticScalars:
    """Scalars of a monotone M-estimator at the given radial law.

    The consistency scale is located by a bracketing root search on
    E[phi2(c R)] = p; with gamma1 = E[phi2^2(c R)]/{p(p+2)} and
    gamma2 = E[c R phi2'(c R)]/p,

        sigma1 = (p+2)^2 gamma1 / (2 gamma2 + p)^2,
        sigma2 = {(gamma1-1) - 2 gamma1 (gamma2-1)(p + (p+4) gamma2)
                  / (2 gamma2 + p)^2} / gamma2^2.

    The gamma2^-2 factor in sigma2 is fixed by the maximum-likelihood
    special case, where this routine and :func:`mle_scalars` must
    coincide; Monte Carlo covariances of the estimator confirm it.

    The stored eta is the factor with (estimator limit) = eta * (shape),
    i.e. the reciprocal of the root c.
    """
    spec.check_monotone()
    if spec.phi2_prime is not None:
        dphi2 = spec.phi2_prime
    else:
        def dphi2(s):
            s = np.asarray(s, dtype=float)
            h = 1e-6 * np.maximum(1.0, s)
            return (spec.phi2(s + h) - spec.phi2(s - h)) / (2.0 * h)

    def gap(c):
        return radial.expect(lambda r: spec.phi2(c * r)) - p

    lo, hi = 1.0, 1.0
    g_hi = gap(hi)
    tries = 0
    while g_hi < 0.0:
        hi *= 2.0
        g_hi = gap(hi)
        tries += 1
        if tries > 60:
            raise PreconditionError(
                "no consistency root: E[phi2(c R)] stays below p "
                f"(spec {spec.name!r} cannot match this radial law)")
    g_lo = gap(lo)
    tries = 0
    while g_lo > 0.0:
        lo /= 2.0
        g_lo = gap(lo)
        tries += 1
        if tries > 60:
            raise PreconditionError(
                "no consistency root: E[phi2(c R)] stays above p "
                f"(spec {spec.name!r} cannot match this radial law)")
    c = scipy.optimize.brentq(gap, lo, hi, xtol=1e-13, rtol=8.9e-16)

    gamma1 = radial.expect(lambda r: spec.phi2(c * r) ** 2) / (p * (p + 2.0))
    gamma2 = radial.expect(lambda r: c * r * dphi2(c * r)) / p
    sigma1 = (p + 2.0) ** 2 * gamma1 / (2.0 * gamma2 + p) ** 2
    sigma2 = ((gamma1 - 1.0)
              - 2.0 * gamma1 * (gamma2 - 1.0) * (p + (p + 4.0) * gamma2)
              / (2.0 * gamma2 + p) ** 2) / gamma2 ** 2
    s = AsymptoticScalars(sigma1, sigma2, 1.0 / c)
    s.check_bounds(p)
    return s


def scalars_for(spec: EstimatorSpec, family: str, p: int) -> AsymptoticScalars:
    """Scalars matching an estimator spec to a named data family.

    Gaussian (constant) weights are the sample covariance, handled via
    its kurtosis formula; everything else goes through the M-estimator
    scalars at the family's radial law.
    """
    if spec.name == "gaussian":
        family = family.strip()
        if family == "gaussian":
            kappa = 0.0
        elif family.startswith("t:"):
            nu = float(family[2:])
            if nu <= 4:
                raise PreconditionError(
                    f"sample covariance needs finite fourth moments (t with nu > 4), got nu={nu}")
            kappa = 6.0 / (nu - 4.0)
        else:
            raise PreconditionError(f"unknown elliptical family {family!r}")
        return sample_cov_scalars(kappa, p)
    return m_scalars(spec, radial_for_family(family, p), p)
