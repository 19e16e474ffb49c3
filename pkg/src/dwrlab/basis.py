"""Nodal Lagrange bases on Gauss-Lobatto points of the reference interval [-1, 1]."""
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L


@lru_cache(maxsize=None)
def lobatto_nodes(p):
    if p == 0:
        return np.array([0.0])
    interior = L.legroots(L.legder([0.0] * p + [1.0])) if p > 1 else np.array([])
    return np.concatenate([[-1.0], np.sort(np.real(interior)), [1.0]])


@lru_cache(maxsize=None)
def _coefficients(p):
    # Column i holds the Legendre coefficients of the i-th Lagrange polynomial.
    V = L.legvander(lobatto_nodes(p), p)
    return np.linalg.inv(V)


def shape_values(p, xi):
    """Basis values, shape (len(xi), p + 1)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return L.legvander(xi, p) @ _coefficients(p)


def shape_derivatives(p, xi):
    """Reference derivatives d(phi)/d(xi), shape (len(xi), p + 1)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if p == 0:
        return np.zeros((len(xi), 1))
    C = _coefficients(p)
    dC = np.stack([L.legder(C[:, i]) for i in range(p + 1)], axis=1)
    return L.legvander(xi, p - 1) @ dC


class ReferenceElement:
    """Tabulated basis data for order ``p`` on a fixed Gauss rule."""

    def __init__(self, p, rule):
        self.p = p
        self.nodes = lobatto_nodes(p)
        self.qpoints = rule.points
        self.qweights = rule.weights
        self.phi = shape_values(p, rule.points)
        self.dphi = shape_derivatives(p, rule.points)
        self.phi_left = shape_values(p, -1.0)[0]
        self.phi_right = shape_values(p, 1.0)[0]
        self.dphi_left = shape_derivatives(p, -1.0)[0]
        self.dphi_right = shape_derivatives(p, 1.0)[0]
        # reference mass matrix, exact because the rule is rich enough
        self.mass = (self.phi * self.qweights[:, None]).T @ self.phi
