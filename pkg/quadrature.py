# quadrature.py
"""
Quadrature rules on the reference entities.

Tensor cells get tensor products of Gauss-Legendre rules; simplices get the
collapsed Gauss-Jacobi construction, so every rule is available at any degree.
All reference entities live in the unit box / unit simplex.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from errors import InvalidArgumentError, UnsupportedFeatureError

# ─────────────────────────── constants ────────────────────────────
REFERENCE_MEASURE = {
    "point": 1.0,
    "segment": 1.0,
    "triangle": 0.5,
    "quadrilateral": 1.0,
    "tetrahedron": 1.0 / 6.0,
    "hexahedron": 1.0,
}
ENTITY_DIM = {
    "point": 0, "segment": 1, "triangle": 2,
    "quadrilateral": 2, "tetrahedron": 3, "hexahedron": 3,
}
MAX_DEGREE = 60
# ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class QuadratureRule:
    entity: str
    points: np.ndarray      # (nq, dim) reference coordinates
    weights: np.ndarray     # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule mapped to [0, 1]."""
    t, w = roots_legendre(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _gauss_jacobi(n: int, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point rule on [0, 1] for the weight (1 - s)**alpha."""
    t, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (t + 1.0), w / 2.0 ** (alpha + 1)


def _npoints(degree: int) -> int:
    return max(1, math.ceil((degree + 1) / 2))


@lru_cache(maxsize=None)
def quadrature_rule(entity: str, degree: int) -> QuadratureRule:
    """Rule exact for polynomials of total degree <= `degree` on `entity`."""
    if entity not in REFERENCE_MEASURE:
        raise UnsupportedFeatureError(f"no quadrature for entity {entity!r}")
    if degree < 0:
        raise InvalidArgumentError(f"quadrature degree must be >= 0, got {degree}")
    if degree > MAX_DEGREE:
        raise UnsupportedFeatureError(f"quadrature degree {degree} exceeds {MAX_DEGREE}")

    n = _npoints(degree)
    if entity == "point":
        pts, wts = np.zeros((1, 0)), np.ones(1)
    elif entity in ("segment", "quadrilateral", "hexahedron"):
        x, w = _gauss_legendre(n)
        dim = ENTITY_DIM[entity]
        pts = np.array(list(itertools.product(x, repeat=dim)))[:, ::-1]
        wts = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    elif entity == "triangle":
        a, wa = _gauss_legendre(n)
        b, wb = _gauss_jacobi(n, 1)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
        wts = np.outer(wa, wb).ravel()
    else:  # tetrahedron
        a, wa = _gauss_legendre(n)
        b, wb = _gauss_jacobi(n, 1)
        c, wc = _gauss_jacobi(n, 2)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        pts = np.column_stack([
            (A * (1.0 - B) * (1.0 - C)).ravel(),
            (B * (1.0 - C)).ravel(),
            C.ravel(),
        ])
        wts = np.einsum("i,j,k->ijk", wa, wb, wc).ravel()

    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(entity, pts, wts, degree)
