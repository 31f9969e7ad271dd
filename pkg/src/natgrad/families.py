"""Parametric distribution families.

A family maps a parameter vector to a probability distribution and exposes
the handful of operations the rest of the package needs: log-density and its
parameter gradient (the score), CDF/quantile and the parameter gradient of
the CDF for one-dimensional families, seeded sampling, and closed-form
Fisher information where available.

All operations are pure functions of ``(theta, x)``: families hold only
immutable configuration, so instances can be shared freely across threads.

Parameter vectors are plain 1-D float arrays.  ``Family.check_point``
canonicalizes and validates them eagerly; every public operation calls it,
so invalid parameters fail with :class:`InvalidParameterError` rather than
producing NaNs downstream.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import log_softmax, ndtr, ndtri, softmax

from .errors import (
    CapabilityError,
    ConfigError,
    InvalidParameterError,
    NumericError,
    UndefinedScoreError,
)
from .numdiff import central_gradient
from .quadrature import DEFAULT_TAIL_MASS, composite_legendre

__all__ = [
    "ParamPoint",
    "Dataset",
    "Family",
    "Gaussian1D",
    "MultivariateNormalLogCholesky",
    "CategoricalSoftmax",
    "GpPriorEq",
    "LinearlyReparameterized",
    "eq_covariance",
    "get_family",
    "FAMILY_IDS",
]

# A parameter point is a 1-D float vector; kept as a plain array rather than
# a wrapper class so numpy arithmetic stays direct.
ParamPoint = np.ndarray

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Dataset:
    """Observed regression data: paired inputs and targets plus the seed
    used to generate them (kept for provenance in benchmark outputs)."""

    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __post_init__(self):
        inputs = np.atleast_1d(np.asarray(self.inputs, dtype=float))
        targets = np.atleast_1d(np.asarray(self.targets, dtype=float))
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError(
                f"inputs and targets must have equal length, got {inputs.shape[0]} and {targets.shape[0]}"
            )
        inputs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)


class Family(ABC):
    """A smoothly parameterized family of probability distributions.

    Subclasses set the class attributes below and implement at least
    ``log_density`` and ``_in_domain``.  Defaults fall back to central
    finite differences (score, dcdf_dtheta) or raise
    :class:`CapabilityError` (cdf, quantile, fisher) so each family only
    implements what it actually supports.

    Attributes
    ----------
    name : str
        Registry identifier.
    param_dim : int
        Length of the parameter vector.
    sample_dim : int
        Dimension of one sample (1 means scalar samples).
    has_cdf : bool
        Whether cdf/quantile/dcdf_dtheta are available (1-D families only).
    has_closed_form_fisher : bool
        Whether ``fisher`` returns an analytic matrix.
    has_sampler : bool
        Whether ``sample`` is available.
    """

    name: str = ""
    param_dim: int = 0
    sample_dim: int = 1
    has_cdf: bool = False
    has_closed_form_fisher: bool = False
    has_sampler: bool = True
    is_discrete: bool = False

    # -- parameter validation -------------------------------------------------

    def check_point(self, theta) -> np.ndarray:
        """Canonicalize ``theta`` to a float vector and validate it.

        Raises
        ------
        InvalidParameterError
            If the shape is wrong, any entry is non-finite, or the point
            lies outside the family's open domain.
        """
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.ndim != 1 or arr.size != self.param_dim:
            raise InvalidParameterError(
                f"{self.name}: expected parameter vector of length {self.param_dim}, "
                f"got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError(f"{self.name}: parameters must be finite, got {arr}")
        if not self._in_domain(arr):
            raise InvalidParameterError(f"{self.name}: parameters outside domain: {arr}")
        return arr.copy()

    def in_domain(self, theta) -> bool:
        """True if ``theta`` is a valid parameter point."""
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.ndim != 1 or arr.size != self.param_dim or not np.all(np.isfinite(arr)):
            return False
        return self._in_domain(arr)

    def _in_domain(self, theta: np.ndarray) -> bool:
        return True

    # -- core operations -------------------------------------------------------

    @abstractmethod
    def log_density(self, theta, x) -> float:
        """Log-density (or log-mass) at sample point ``x``."""

    def score(self, theta, x) -> np.ndarray:
        """Gradient of ``log_density`` with respect to the parameters.

        The default implementation uses central finite differences with
        per-coordinate steps ``eps**(1/3) * max(1, |theta_i|)``.
        """
        theta = self.check_point(theta)
        if not np.isfinite(self.log_density(theta, x)):
            raise UndefinedScoreError(f"{self.name}: zero density at x={x}, score undefined")
        return central_gradient(lambda t: self.log_density(t, x), theta)

    def cdf(self, theta, x) -> float:
        """Cumulative distribution function (1-D families only)."""
        raise CapabilityError(f"{self.name}: cdf is not available")

    def quantile(self, theta, q) -> float:
        """Inverse CDF.  Default: bisection against ``cdf``.

        Raises
        ------
        ValueError
            If ``q`` is not strictly inside (0, 1).
        """
        if not self.has_cdf:
            raise CapabilityError(f"{self.name}: quantile is not available")
        q = float(q)
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {q}")
        theta = self.check_point(theta)
        lo, hi = -1.0, 1.0
        while self.cdf(theta, lo) > q:
            lo *= 2.0
        while self.cdf(theta, hi) < q:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cdf(theta, mid) < q:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14 * max(1.0, abs(lo)):
                break
        return 0.5 * (lo + hi)

    def dcdf_dtheta(self, theta, x) -> np.ndarray:
        """Gradient of the CDF with respect to the parameters, at fixed x."""
        if not self.has_cdf:
            raise CapabilityError(f"{self.name}: dcdf_dtheta is not available")
        theta = self.check_point(theta)
        return central_gradient(lambda t: self.cdf(t, x), theta)

    def sample(self, theta, seed: int, count: int) -> np.ndarray:
        """Draw ``count`` samples; deterministic for fixed ``(theta, seed)``."""
        raise CapabilityError(f"{self.name}: no sampler available")

    def fisher(self, theta) -> np.ndarray:
        """Closed-form Fisher information matrix, if the family has one."""
        raise CapabilityError(f"{self.name}: no closed-form Fisher information")

    def gaussian_moments(self, theta) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """``(mean, covariance)`` if the distribution is Gaussian, else None.

        Lets similarity measures with Gaussian closed forms (KL, squared
        2-Wasserstein) recognize the family without type checks.
        """
        return None

    def expectation(self, theta, fn: Callable[[np.ndarray], np.ndarray], n_nodes: int = 256) -> float:
        """Expectation of ``fn(X)`` under the distribution at ``theta``.

        One-dimensional continuous families integrate over the quantile
        window ``[quantile(delta), quantile(1 - delta)]`` with a composite
        Gauss-Legendre rule; discrete families sum exactly.  ``fn`` must
        accept a vector of sample points.
        """
        theta = self.check_point(theta)
        if not self.has_cdf:
            raise CapabilityError(f"{self.name}: no quadrature route for expectations")
        lo = self.quantile(theta, DEFAULT_TAIL_MASS)
        hi = self.quantile(theta, 1.0 - DEFAULT_TAIL_MASS)
        nodes, weights = composite_legendre(lo, hi, n_panels=8, nodes_per_panel=max(4, n_nodes // 8))
        dens = np.exp(np.array([self.log_density(theta, x) for x in nodes]))
        return float(weights @ (dens * np.asarray(fn(nodes), dtype=float)))


class Gaussian1D(Family):
    """Normal distribution on the real line, parameters ``(mu, sigma)``."""

    name = "gaussian1d"
    param_dim = 2
    sample_dim = 1
    has_cdf = True
    has_closed_form_fisher = True

    def _in_domain(self, theta):
        return theta[1] > 0.0

    def log_density(self, theta, x):
        mu, sigma = self.check_point(theta)
        z = (float(x) - mu) / sigma
        return -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z

    def score(self, theta, x):
        mu, sigma = self.check_point(theta)
        d = float(x) - mu
        return np.array([d / sigma**2, (d * d - sigma**2) / sigma**3])

    def cdf(self, theta, x):
        mu, sigma = self.check_point(theta)
        return float(ndtr((np.asarray(x, dtype=float) - mu) / sigma))

    def quantile(self, theta, q):
        mu, sigma = self.check_point(theta)
        q = np.asarray(q, dtype=float)
        if np.any(q <= 0.0) or np.any(q >= 1.0):
            raise ValueError(f"quantile level must be in (0, 1), got {q}")
        out = mu + sigma * ndtri(q)
        return float(out) if out.ndim == 0 else out

    def dcdf_dtheta(self, theta, x):
        # d/dmu Phi((x-mu)/sigma) = -pdf(x); d/dsigma = -z * pdf(x)
        mu, sigma = self.check_point(theta)
        z = (float(x) - mu) / sigma
        pdf = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sigma)
        return np.array([-pdf, -z * pdf])

    def sample(self, theta, seed, count):
        mu, sigma = self.check_point(theta)
        rng = np.random.default_rng(seed)
        return mu + sigma * rng.standard_normal(int(count))

    def fisher(self, theta):
        _, sigma = self.check_point(theta)
        return np.diag([1.0 / sigma**2, 2.0 / sigma**2])

    def gaussian_moments(self, theta):
        mu, sigma = self.check_point(theta)
        return np.array([mu]), np.array([[sigma * sigma]])

    def expectation(self, theta, fn, n_nodes: int = 256):
        theta = self.check_point(theta)
        mu, sigma = theta
        lo = self.quantile(theta, DEFAULT_TAIL_MASS)
        hi = self.quantile(theta, 1.0 - DEFAULT_TAIL_MASS)
        nodes, weights = composite_legendre(lo, hi, n_panels=8, nodes_per_panel=max(4, n_nodes // 8))
        z = (nodes - mu) / sigma
        dens = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sigma)
        return float(weights @ (dens * np.asarray(fn(nodes), dtype=float)))


class MultivariateNormalLogCholesky(Family):
    """Multivariate normal parameterized by mean and a log-Cholesky factor.

    The parameter vector is ``[mean (d entries), tril entries of L]`` where
    the lower triangle is stored row by row and the diagonal entries hold
    ``log L_ii``; the covariance is ``L @ L.T``.  The log transform keeps
    the domain all of R^n, so every finite vector is a valid point.
    """

    has_closed_form_fisher = True

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.name = f"mvn_lcholesky:{dim}"
        self.param_dim = dim + dim * (dim + 1) // 2
        self.sample_dim = dim
        self._rows, self._cols = np.tril_indices(dim)

    def split(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(mean, L)`` with the diagonal of L exponentiated."""
        theta = self.check_point(theta)
        mean = theta[: self.dim]
        L = np.zeros((self.dim, self.dim))
        L[self._rows, self._cols] = theta[self.dim :]
        diag = np.exp(np.diag(L).copy())
        np.fill_diagonal(L, diag)
        return mean, L

    def _check_x(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected sample of shape ({self.dim},), got {x.shape}")
        return x

    def log_density(self, theta, x):
        mean, L = self.split(theta)
        x = self._check_x(x)
        w = np.linalg.solve(L, x - mean)  # whitened residual
        return float(-0.5 * self.dim * LOG_2PI - np.sum(np.log(np.diag(L))) - 0.5 * w @ w)

    def score(self, theta, x):
        mean, L = self.split(theta)
        x = self._check_x(x)
        e = x - mean
        z = np.linalg.solve(L, e)              # L^-1 e
        w = np.linalg.solve(L.T, z)            # Sigma^-1 e
        g = np.empty(self.param_dim)
        g[: self.dim] = w
        # d log p / dL_ij = w_i z_j - delta_ij / L_ii, then chain rule for
        # the log-diagonal parameterization multiplies diagonal terms by L_ii.
        for k, (i, j) in enumerate(zip(self._rows, self._cols)):
            if i == j:
                g[self.dim + k] = (w[i] * z[j] - 1.0 / L[i, i]) * L[i, i]
            else:
                g[self.dim + k] = w[i] * z[j]
        return g

    def sample(self, theta, seed, count):
        mean, L = self.split(theta)
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((int(count), self.dim))
        return mean + z @ L.T

    def _cov_derivs(self, L: np.ndarray) -> list[np.ndarray]:
        """d(Sigma)/d(param) for each Cholesky parameter, in storage order."""
        derivs = []
        for i, j in zip(self._rows, self._cols):
            dL = np.zeros_like(L)
            dL[i, j] = L[i, i] if i == j else 1.0
            dS = dL @ L.T
            derivs.append(dS + dS.T)
        return derivs

    def fisher(self, theta):
        mean, L = self.split(theta)
        n = self.param_dim
        d = self.dim
        Sigma_inv = np.linalg.inv(L @ L.T)
        H = np.zeros((n, n))
        H[:d, :d] = Sigma_inv
        sens = [Sigma_inv @ dS for dS in self._cov_derivs(L)]
        for a in range(len(sens)):
            for b in range(a, len(sens)):
                val = 0.5 * np.trace(sens[a] @ sens[b])
                H[d + a, d + b] = val
                H[d + b, d + a] = val
        return H

    def gaussian_moments(self, theta):
        mean, L = self.split(theta)
        return mean, L @ L.T


class CategoricalSoftmax(Family):
    """Categorical distribution over ``k`` outcomes with softmax logits.

    Note the parameterization is redundant (adding a constant to all logits
    leaves the distribution unchanged), so the Fisher information is
    singular along the all-ones direction.
    """

    has_closed_form_fisher = True
    is_discrete = True

    def __init__(self, k: int):
        if k < 2:
            raise ValueError(f"k must be >= 2, got {k}")
        self.k = int(k)
        self.name = f"categorical_softmax:{k}"
        self.param_dim = self.k
        self.sample_dim = 1

    def probabilities(self, theta) -> np.ndarray:
        return softmax(self.check_point(theta))

    def _check_x(self, x) -> int:
        xi = int(x)
        if xi != x or not 0 <= xi < self.k:
            raise ValueError(f"{self.name}: outcome must be an integer in [0, {self.k}), got {x}")
        return xi

    def log_density(self, theta, x):
        return float(log_softmax(self.check_point(theta))[self._check_x(x)])

    def score(self, theta, x):
        p = self.probabilities(theta)
        g = -p
        g[self._check_x(x)] += 1.0
        return g

    def sample(self, theta, seed, count):
        p = self.probabilities(theta)
        rng = np.random.default_rng(seed)
        return rng.choice(self.k, size=int(count), p=p)

    def fisher(self, theta):
        p = self.probabilities(theta)
        return np.diag(p) - np.outer(p, p)

    def softmax_jacobian(self, theta) -> np.ndarray:
        """d(probabilities)/d(logits): ``diag(p) - p p^T`` (rank k - 1)."""
        p = self.probabilities(theta)
        return np.diag(p) - np.outer(p, p)

    def expectation(self, theta, fn, n_nodes: int = 0):
        p = self.probabilities(theta)
        outcomes = np.arange(self.k)
        return float(p @ np.asarray(fn(outcomes), dtype=float))


def eq_covariance(inputs: np.ndarray, log_amp: float, log_ls: float) -> np.ndarray:
    """Exponentiated-quadratic covariance ``a^2 exp(-(x - x')^2 / (2 l^2))``."""
    x = np.asarray(inputs, dtype=float).ravel()
    amp2 = np.exp(2.0 * log_amp)
    ls2 = np.exp(2.0 * log_ls)
    sq = (x[:, None] - x[None, :]) ** 2
    return amp2 * np.exp(-0.5 * sq / ls2)


class GpPriorEq(Family):
    """Centered Gaussian process prior evaluated at fixed inputs.

    Parameters are ``(log amplitude, log length-scale, log noise)``; the
    covariance over the ``m`` inputs is the exponentiated-quadratic kernel
    plus ``exp(2 * log_noise)`` on the diagonal.  Samples are draws of the
    full m-dimensional output vector.
    """

    name = "gp_prior_eq"
    param_dim = 3
    has_closed_form_fisher = True

    def __init__(self, inputs):
        inputs = np.atleast_1d(np.asarray(inputs, dtype=float)).copy()
        if inputs.ndim != 1 or inputs.size < 1:
            raise ValueError("inputs must be a non-empty 1-D array")
        inputs.setflags(write=False)
        self.inputs = inputs
        self.sample_dim = int(inputs.size)
        self._sqdist = (inputs[:, None] - inputs[None, :]) ** 2

    def covariance(self, theta) -> np.ndarray:
        log_amp, log_ls, log_noise = self.check_point(theta)
        K = eq_covariance(self.inputs, log_amp, log_ls)
        return K + np.exp(2.0 * log_noise) * np.eye(self.sample_dim)

    def covariance_derivs(self, theta) -> list[np.ndarray]:
        """dK/dtheta_i for the three log-parameters."""
        log_amp, log_ls, log_noise = self.check_point(theta)
        K_eq = eq_covariance(self.inputs, log_amp, log_ls)
        ls2 = np.exp(2.0 * log_ls)
        return [
            2.0 * K_eq,
            K_eq * (self._sqdist / ls2),
            2.0 * np.exp(2.0 * log_noise) * np.eye(self.sample_dim),
        ]

    def _check_x(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.sample_dim,):
            raise ValueError(
                f"{self.name}: expected sample of shape ({self.sample_dim},), got {x.shape}"
            )
        return x

    def log_density(self, theta, x):
        y = self._check_x(x)
        with np.errstate(over="ignore"):
            K = self.covariance(theta)
        # Extreme log-parameters overflow exp or make K numerically
        # indefinite; report that as a numeric failure so line searches
        # treat the point as infinitely bad instead of crashing.
        if not np.all(np.isfinite(K)):
            raise NumericError(
                "covariance is not finite", diagnostics={"theta": np.asarray(theta, dtype=float)}
            )
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                f"covariance is not positive definite: {exc}",
                diagnostics={"theta": np.asarray(theta, dtype=float)},
            ) from exc
        w = np.linalg.solve(L, y)
        return float(
            -0.5 * self.sample_dim * LOG_2PI - np.sum(np.log(np.diag(L))) - 0.5 * w @ w
        )

    def score(self, theta, x):
        y = self._check_x(x)
        K = self.covariance(theta)
        K_inv = np.linalg.inv(K)
        alpha = K_inv @ y
        # d log p / dtheta_i = -1/2 tr((K^-1 - alpha alpha^T) dK_i)
        inner = K_inv - np.outer(alpha, alpha)
        return np.array([-0.5 * np.sum(inner * dK.T) for dK in self.covariance_derivs(theta)])

    def sample(self, theta, seed, count):
        K = self.covariance(theta)
        L = np.linalg.cholesky(K)
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((int(count), self.sample_dim))
        return z @ L.T

    def fisher(self, theta):
        K = self.covariance(theta)
        K_inv = np.linalg.inv(K)
        sens = [K_inv @ dK for dK in self.covariance_derivs(theta)]
        H = np.empty((3, 3))
        for i in range(3):
            for j in range(i, 3):
                H[i, j] = H[j, i] = 0.5 * np.sum(sens[i] * sens[j].T)
        return H

    def gaussian_moments(self, theta):
        return np.zeros(self.sample_dim), self.covariance(theta)


class LinearlyReparameterized(Family):
    """View of a base family under the substitution ``theta = A @ xi``.

    Used to check that natural-gradient steps transform contravariantly
    under invertible linear reparameterization.
    """

    def __init__(self, base: Family, A):
        A = np.asarray(A, dtype=float)
        if A.shape != (base.param_dim, base.param_dim):
            raise ValueError(f"A must be {base.param_dim}x{base.param_dim}, got {A.shape}")
        if abs(np.linalg.det(A)) < 1e-12:
            raise ValueError("A must be invertible")
        self.base = base
        self.A = A.copy()
        self.A.setflags(write=False)
        self.name = f"reparam({base.name})"
        self.param_dim = base.param_dim
        self.sample_dim = base.sample_dim
        self.has_cdf = base.has_cdf
        self.has_closed_form_fisher = base.has_closed_form_fisher
        self.has_sampler = base.has_sampler
        self.is_discrete = base.is_discrete

    def _in_domain(self, xi):
        return self.base.in_domain(self.A @ xi)

    def log_density(self, xi, x):
        return self.base.log_density(self.A @ self.check_point(xi), x)

    def score(self, xi, x):
        return self.A.T @ self.base.score(self.A @ self.check_point(xi), x)

    def cdf(self, xi, x):
        return self.base.cdf(self.A @ self.check_point(xi), x)

    def quantile(self, xi, q):
        return self.base.quantile(self.A @ self.check_point(xi), q)

    def dcdf_dtheta(self, xi, x):
        return self.A.T @ self.base.dcdf_dtheta(self.A @ self.check_point(xi), x)

    def sample(self, xi, seed, count):
        return self.base.sample(self.A @ self.check_point(xi), seed, count)

    def fisher(self, xi):
        return self.A.T @ self.base.fisher(self.A @ self.check_point(xi)) @ self.A

    def gaussian_moments(self, xi):
        return self.base.gaussian_moments(self.A @ self.check_point(xi))

    def expectation(self, xi, fn, n_nodes: int = 256):
        return self.base.expectation(self.A @ self.check_point(xi), fn, n_nodes)


FAMILY_IDS = ["gaussian1d", "mvn_lcholesky[:dim]", "categorical_softmax[:k]", "gp_prior_eq"]


def get_family(identifier: str, inputs=None) -> Family:
    """Resolve a family by string identifier.

    ``mvn_lcholesky`` and ``categorical_softmax`` accept an optional
    ``:<int>`` suffix for the dimension / outcome count (defaults 2 and 3).
    ``gp_prior_eq`` needs the evaluation inputs, supplied by the caller.
    """
    name, _, arg = str(identifier).partition(":")
    try:
        if name == "gaussian1d":
            return Gaussian1D()
        if name == "mvn_lcholesky":
            return MultivariateNormalLogCholesky(int(arg) if arg else 2)
        if name == "categorical_softmax":
            return CategoricalSoftmax(int(arg) if arg else 3)
        if name == "gp_prior_eq":
            if inputs is None:
                raise ConfigError(
                    "gp_prior_eq requires evaluation inputs; supply a dataset "
                    "(see the GP benchmark configuration)"
                )
            return GpPriorEq(inputs)
    except ValueError as exc:
        raise ConfigError(f"invalid family identifier {identifier!r}: {exc}") from exc
    raise ConfigError(
        f"unknown family {identifier!r}; valid families: {', '.join(FAMILY_IDS)}"
    )
