# hyperelastic.py
"""
Constitutive laws: strain energy, second/first Piola-Kirchhoff stresses and
the elasticity tensor A_ijkl = dP_ij / dF_kl.

Every function is batched over leading axes of F (..., d, d) and works with
complex F as well, so the forcing synthesis can use complex-step derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import InvalidArgumentError, InvalidStateError, NumericError

# ─────────────────────────── constants ────────────────────────────
LAWS = ("svk", "nhk-c", "nhk-i", "nhk-cav")
REGIMES = ("compressible", "incompressible")
_LOG_LAWS = ("nhk-c", "nhk-cav")          # energies containing ln J
_CAV = 3.0 ** -0.25
# ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class LameParams:
    mu: float
    lam: float = 0.0

    def __post_init__(self) -> None:
        if not self.mu > 0.0:
            raise InvalidArgumentError(f"shear modulus must be positive, got {self.mu}")
        if not math.isfinite(self.lam):
            raise InvalidArgumentError("first Lamé parameter must be finite")


def lame_from_young_poisson(young: float, poisson: float) -> LameParams:
    if young <= 0.0:
        raise InvalidArgumentError(f"Young's modulus must be positive, got {young}")
    if not -1.0 < poisson < 0.5:
        raise InvalidArgumentError(
            f"Poisson ratio must lie in (-1, 0.5), got {poisson}; "
            "use the incompressible regime for nu = 0.5")
    mu = young / (2.0 * (1.0 + poisson))
    lam = poisson * young / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    return LameParams(mu, lam)


@dataclass(frozen=True)
class MaterialLaw:
    tag: str
    regime: str = "compressible"

    def __post_init__(self) -> None:
        if self.tag not in LAWS:
            raise InvalidArgumentError(f"unknown law {self.tag!r}, expected one of {LAWS}")
        if self.regime not in REGIMES:
            raise InvalidArgumentError(f"unknown regime {self.regime!r}")
        if self.tag == "nhk-i" and self.regime != "incompressible":
            raise InvalidArgumentError("NHK-I is an incompressible law")
        if self.tag in _LOG_LAWS and self.regime != "compressible":
            raise InvalidArgumentError(f"{self.tag.upper()} is a compressible law")

    @classmethod
    def parse(cls, name: str) -> "MaterialLaw":
        """'SVK-C', 'SVK-I', 'NHK-C', 'NHK-I', 'NHK-CAV' (case-insensitive)."""
        key = name.strip().lower()
        table = {
            "svk-c": ("svk", "compressible"), "svk-i": ("svk", "incompressible"),
            "nhk-c": ("nhk-c", "compressible"), "nhk-i": ("nhk-i", "incompressible"),
            "nhk-cav": ("nhk-cav", "compressible"),
        }
        if key not in table:
            raise InvalidArgumentError(f"unknown material law {name!r}")
        return cls(*table[key])

    @property
    def incompressible(self) -> bool:
        return self.regime == "incompressible"

    @property
    def name(self) -> str:
        if self.tag == "svk":
            return "SVK-I" if self.incompressible else "SVK-C"
        return self.tag.upper()


class Kinematics:
    """F, J, C, E and inverses at a batch of points."""

    def __init__(self, F: np.ndarray) -> None:
        self.F = np.asarray(F)
        self.dim = self.F.shape[-1]

    @cached_property
    def J(self) -> np.ndarray:
        return np.linalg.det(self.F)

    @cached_property
    def C(self) -> np.ndarray:
        return np.einsum("...ki,...kj->...ij", self.F, self.F)

    @cached_property
    def E(self) -> np.ndarray:
        return 0.5 * (self.C - np.eye(self.dim))

    @cached_property
    def Finv(self) -> np.ndarray:
        try:
            return np.linalg.inv(self.F)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular deformation gradient") from exc

    @property
    def FinvT(self) -> np.ndarray:
        return np.swapaxes(self.Finv, -1, -2)

    @cached_property
    def Cinv(self) -> np.ndarray:
        return np.einsum("...ik,...jk->...ij", self.Finv, self.Finv)

    @cached_property
    def trC(self) -> np.ndarray:
        return np.trace(self.C, axis1=-2, axis2=-1)

    @cached_property
    def lnJ(self) -> np.ndarray:
        return np.log(self.J)


def _kin(kin: Kinematics | np.ndarray) -> Kinematics:
    return kin if isinstance(kin, Kinematics) else Kinematics(kin)


def _require_positive_J(law: MaterialLaw, kin: Kinematics) -> None:
    if law.tag in _LOG_LAWS:
        J = np.real(kin.J)
        if np.any(J <= 0.0):
            raise InvalidStateError(float(np.min(J)))


# ─────────────────────────── energies ─────────────────────────────
def strain_energy(law: MaterialLaw, params: LameParams, kin: Kinematics | np.ndarray) -> np.ndarray:
    kin = _kin(kin)
    _require_positive_J(law, kin)
    mu, lam, d = params.mu, params.lam, kin.dim
    if law.tag == "svk":
        E = kin.E
        trE = np.trace(E, axis1=-2, axis2=-1)
        return mu * np.einsum("...ij,...ij->...", E, E) + 0.5 * lam * trE ** 2
    if law.tag == "nhk-i":
        return 0.5 * mu * (kin.trC - d)
    if law.tag == "nhk-c":
        return 0.5 * mu * (kin.trC - d) - mu * kin.lnJ + 0.5 * lam * kin.lnJ ** 2
    return (2.0 * mu / 3.0 ** 1.25) * kin.trC ** 0.75 - mu * kin.lnJ + 0.5 * lam * kin.lnJ ** 2


def second_piola(law: MaterialLaw, params: LameParams, kin: Kinematics | np.ndarray) -> np.ndarray:
    kin = _kin(kin)
    _require_positive_J(law, kin)
    mu, lam = params.mu, params.lam
    eye = np.broadcast_to(np.eye(kin.dim), kin.F.shape)
    if law.tag == "svk":
        E = kin.E
        trE = np.trace(E, axis1=-2, axis2=-1)[..., None, None]
        return 2.0 * mu * E + lam * trE * eye
    if law.tag == "nhk-i":
        return mu * eye
    lnJ = kin.lnJ[..., None, None]
    if law.tag == "nhk-c":
        return mu * (eye - kin.Cinv) + lam * lnJ * kin.Cinv
    vol = mu * _CAV * kin.trC[..., None, None] ** -0.25
    return vol * eye - mu * kin.Cinv + lam * lnJ * kin.Cinv


def first_piola(law: MaterialLaw, params: LameParams, kin: Kinematics | np.ndarray,
                p: np.ndarray | float = 0.0) -> np.ndarray:
    """P = F S - p J F^-T."""
    kin = _kin(kin)
    P = np.einsum("...ik,...kj->...ij", kin.F, second_piola(law, params, kin))
    if np.any(p != 0.0):
        pJ = (np.asarray(p) * kin.J)[..., None, None]
        P = P - pJ * kin.FinvT
    return P


def cauchy_stress(law: MaterialLaw, params: LameParams, kin: Kinematics | np.ndarray,
                  p: np.ndarray | float = 0.0) -> np.ndarray:
    kin = _kin(kin)
    P = first_piola(law, params, kin, p)
    return np.einsum("...ik,...jk->...ij", P, kin.F) / kin.J[..., None, None]


def von_mises(sigma: np.ndarray) -> np.ndarray:
    d = sigma.shape[-1]
    dev = sigma - np.trace(sigma, axis1=-2, axis2=-1)[..., None, None] * np.eye(d) / d
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev, dev))


def elasticity_tensor(law: MaterialLaw, params: LameParams, kin: Kinematics | np.ndarray,
                      p: np.ndarray | float = 0.0) -> np.ndarray:
    """A_ijkl = dP_ij/dF_kl, shape (..., d, d, d, d)."""
    kin = _kin(kin)
    mu, lam = params.mu, params.lam
    eye = np.eye(kin.dim)
    F = kin.F
    S = second_piola(law, params, kin)
    A = np.einsum("ik,...lj->...ijkl", eye, S)

    if law.tag == "svk":
        FFt = np.einsum("...ik,...jk->...ij", F, F)
        A = A + mu * (np.einsum("...il,...kj->...ijkl", F, F)
                      + np.einsum("...ik,jl->...ijkl", FFt, eye))
        A = A + lam * np.einsum("...ij,...kl->...ijkl", F, F)
    elif law.tag in _LOG_LAWS:
        G = kin.FinvT
        c = (mu - lam * kin.lnJ)[..., None, None, None, None]
        A = A + c * (np.einsum("...il,...kj->...ijkl", G, G)
                     + np.einsum("ik,...lj->...ijkl", eye, kin.Cinv))
        A = A + lam * np.einsum("...ij,...kl->...ijkl", G, G)
        if law.tag == "nhk-cav":
            w = (0.5 * mu * _CAV * kin.trC ** -1.25)[..., None, None, None, None]
            A = A - w * np.einsum("...ij,...kl->...ijkl", F, F)

    if np.any(p != 0.0):
        G = kin.FinvT
        pJ = (np.asarray(p) * kin.J)[..., None, None, None, None]
        A = A - pJ * (np.einsum("...kl,...ij->...ijkl", G, G)
                      - np.einsum("...il,...kj->...ijkl", G, G))
    return A
