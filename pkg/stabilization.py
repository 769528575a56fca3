# stabilization.py
"""
Adaptive BR2 penalty: eta_F = epsilon + beta * lambda_F, where lambda_F is
the face-averaged magnitude of the most negative eigenvalue of the
elasticity tensor evaluated with the face deformation gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from errors import InvalidArgumentError, NumericError
from hyperelastic import LameParams, MaterialLaw, elasticity_tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StabilizationParams:
    beta: float = 1.0
    epsilon: float = 0.0
    eta_lbb: float = 1.0
    eta_lambda: float = 1.0

    def __post_init__(self) -> None:
        for name in ("beta", "epsilon"):
            if getattr(self, name) < 0.0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        for name in ("eta_lbb", "eta_lambda"):
            if getattr(self, name) <= 0.0:
                raise InvalidArgumentError(f"{name} must be > 0")


def _flatten(A: np.ndarray) -> np.ndarray:
    d = A.shape[-1]
    M = A.reshape(A.shape[:-4] + (d * d, d * d))
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def tensor_eigenvalues(A: np.ndarray) -> np.ndarray:
    """All d^2 eigenvalues (ascending) of the symmetrized d^2 x d^2 flattening."""
    try:
        return np.linalg.eigvalsh(_flatten(np.real(A)))
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigensolver failed on the elasticity tensor") from exc


def tensor_min_eigenvalue(A: np.ndarray) -> np.ndarray:
    """min over G != 0 of G:A:G / G:G, batched over leading axes."""
    return tensor_eigenvalues(A)[..., 0]


def point_lambda(law: MaterialLaw, params: LameParams, F: np.ndarray,
                 p: np.ndarray | float = 0.0) -> np.ndarray:
    """lambda_TF(X) = max(0, -min eig A(F, p)) at each point."""
    return np.maximum(0.0, -tensor_min_eigenvalue(elasticity_tensor(law, params, F, p)))


def face_lambda(law: MaterialLaw, params: LameParams, F_face: np.ndarray,
                p_face: np.ndarray, weights: np.ndarray, avgw: np.ndarray) -> np.ndarray:
    """
    lambda_F per active face.

    F_face (na, 2, nqf, d, d) and p_face (na, 2, nqf) are the face states on
    both sides; each side's point values are averaged with the quadrature
    weights, then the sides are combined with `avgw` (1/2, 1/2 internal,
    1, 0 on Nitsche faces).
    """
    lam_pts = point_lambda(law, params, F_face, p_face)              # (na, 2, nqf)
    side_mean = np.einsum("fsq,fq->fs", lam_pts, weights) / weights.sum(axis=1)[:, None]
    return np.einsum("fs,fs->f", side_mean, avgw)


def eta_face(params: StabilizationParams, lambda_f: np.ndarray | float) -> np.ndarray:
    return params.epsilon + params.beta * np.asarray(lambda_f, dtype=float)
