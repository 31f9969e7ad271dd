"""Gauss-Legendre quadrature grids.

Two grid builders cover the integrals used elsewhere in the package:

* :func:`composite_legendre` -- panels of equal width on a finite interval,
  used for integrals against a density in sample space.
* :func:`unit_interval_grid` -- panels graded geometrically toward 0 and 1,
  used for integrals over quantile levels where the integrand is steep near
  the endpoints.

All functions return ``(nodes, weights)`` as float arrays; integrals are
plain weighted sums so callers can reuse a grid for several integrands.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "gauss_legendre",
    "composite_legendre",
    "unit_interval_grid",
    "DEFAULT_TAIL_MASS",
]

# Mass left out of each tail when an infinite support is windowed to a
# finite interval via quantiles.  1e-12 keeps the truncated mass (and the
# truncated part of second-moment integrands) below 1e-9, which is what the
# tightest consumers of these grids need.
DEFAULT_TAIL_MASS = 1e-12


def gauss_legendre(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``n`` nodes on the interval ``[a, b]``.

    Parameters
    ----------
    a, b : float
        Interval endpoints, ``a < b``.
    n : int
        Number of nodes.

    Returns
    -------
    nodes, weights : ndarray
        Arrays of shape ``(n,)`` such that ``integral(f) ~= weights @ f(nodes)``.
    """
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"invalid interval [{a}, {b}]")
    x, w = np.polynomial.legendre.leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_legendre(
    a: float, b: float, n_panels: int = 8, nodes_per_panel: int = 32
) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule: equal-width panels, Gauss-Legendre inside each."""
    edges = np.linspace(a, b, n_panels + 1)
    return _panels(edges, nodes_per_panel)


def unit_interval_grid(
    total_nodes: int = 512, delta: float = DEFAULT_TAIL_MASS
) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature grid on ``(delta, 1 - delta)`` graded toward both endpoints.

    Panel edges shrink geometrically (decade by decade) toward 0 and 1 so
    that integrands of the form ``g(quantile(q))``, which vary rapidly near
    the endpoints for unbounded supports, are resolved accurately.

    Parameters
    ----------
    total_nodes : int
        Total node budget, split evenly across panels.
    delta : float
        Tail mass excluded at each end.  Must lie in ``(0, 0.01)``.
    """
    if not 0.0 < delta < 0.01:
        raise ValueError(f"delta must be in (0, 0.01), got {delta}")
    lower = [delta]
    q = delta
    while q * 10.0 < 0.1:
        q *= 10.0
        lower.append(q)
    lower.append(0.1)
    upper = [1.0 - q for q in reversed(lower)]
    edges = np.array(lower + [0.3, 0.5, 0.7] + upper)
    nodes_per_panel = max(4, int(total_nodes) // (len(edges) - 1))
    return _panels(edges, nodes_per_panel)


def _panels(edges: np.ndarray, nodes_per_panel: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(int(nodes_per_panel))
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)
