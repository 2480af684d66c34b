"""Material parameters and the derived Lame / reformulation constants."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter set violates an admissibility condition."""


def derive_lame(E: float, nu: float) -> tuple[float, float]:
    """Return ``(lam, gamma)`` from Young's modulus and Poisson ratio."""
    if not E > 0:
        raise ParameterError(f"Young's modulus must be positive, got E={E}")
    if not 0 <= nu < 0.5:
        raise ParameterError(f"Poisson ratio must satisfy 0 <= nu < 0.5, got nu={nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    gamma = E / (2.0 * (1.0 + nu))
    return lam, gamma


def bulk_modulus(lam: float, gamma: float) -> float:
    return lam + 2.0 * gamma / 3.0


def derive_chi(b0: float, a0: float, lam: float) -> tuple[float, float, float]:
    """Constants of the (delta, varpi) change of variables.

    With ``d = b0**2 + lam*a0`` the pressure and volumetric strain are
    recovered as ``p = chi1*delta + chi2*varpi + ...`` and
    ``q = chi1*varpi - chi3*delta - ...``.
    """
    d = b0 * b0 + lam * a0
    if d == 0:
        raise ParameterError("b0**2 + lam*a0 vanishes; the change of variables is singular")
    return b0 / d, lam / d, a0 / d


def _as_tensor(K) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.ndim == 0:
        return float(K) * np.eye(2)
    if K.shape != (2, 2):
        raise ParameterError(f"permeability must be a scalar or a 2x2 tensor, got shape {K.shape}")
    return K


@dataclass(frozen=True)
class PhysicalParams:
    """Material data of the consolidation model.

    ``K`` may be given as a scalar and is expanded to ``K * I``. Use
    :meth:`validate` to obtain the derived constants.
    """

    lambda_star: float
    E: float
    nu: float
    b0: float
    a0: float
    K: np.ndarray
    theta_f: float = 1.0
    rho_f_g: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "K", _as_tensor(self.K))
        g = np.asarray(self.rho_f_g, dtype=float).reshape(-1)
        if g.shape != (2,):
            raise ParameterError("rho_f_g must be a 2-vector")
        object.__setattr__(self, "rho_f_g", g)

    def __eq__(self, other):
        if not isinstance(other, PhysicalParams):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))

    __hash__ = None

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def validate(self) -> "CheckedParams":
        return validate(self)


@dataclass(frozen=True)
class DerivedConstants:
    lam: float
    gamma: float
    chi1: float
    chi2: float
    chi3: float


@dataclass(frozen=True)
class CheckedParams:
    """Validated parameters together with everything derived from them."""

    phys: PhysicalParams
    derived: DerivedConstants
    K1: float
    K2: float

    # flat accessors; the solver code reads these constantly
    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        for key in ("phys", "derived"):
            obj = self.__dict__.get(key)
            if obj is not None and hasattr(obj, name):
                return getattr(obj, name)
        raise AttributeError(name)


def validate(p: PhysicalParams) -> CheckedParams:
    """Check admissibility and attach the derived constants."""
    if not p.a0 > 0:
        raise ParameterError(f"storage coefficient must satisfy a0 > 0, got a0={p.a0}")
    if not p.theta_f > 0:
        raise ParameterError(f"fluid viscosity must satisfy theta_f > 0, got {p.theta_f}")
    if not p.lambda_star >= 0:
        raise ParameterError(f"secondary consolidation coefficient must be >= 0, got {p.lambda_star}")
    lam, gamma = derive_lame(p.E, p.nu)
    K = p.K
    if not np.allclose(K, K.T, rtol=0, atol=1e-14 * max(1.0, np.abs(K).max())):
        raise ParameterError("permeability tensor K is not symmetric")
    eig = np.linalg.eigvalsh(K)
    if eig[0] <= 0:
        raise ParameterError(f"permeability tensor K is not positive definite (eigenvalues {eig})")
    chi1, chi2, chi3 = derive_chi(p.b0, p.a0, lam)
    return CheckedParams(p, DerivedConstants(lam, gamma, chi1, chi2, chi3), float(eig[0]), float(eig[-1]))


# Parameter sets of the four numerical tests. theta_f is not listed for the
# unit-square tests; the manufactured sources only involve K/theta_f with
# theta_f = 1.
MANUFACTURED_PARAMS = PhysicalParams(lambda_star=1e-5, E=25.0, nu=0.25, b0=1e-5, a0=0.2, K=1e-3)
# nu = 0.045 is printed rounded; 1/22 reproduces the listed Lame pair (1e3, 1e4).
LOCKING_PARAMS = PhysicalParams(lambda_star=1e-5, E=20909.091, nu=1 / 22, b0=1e-5, a0=2e-10, K=1e-7)
FOOTING_PARAMS = PhysicalParams(lambda_star=1e-2, E=3e4, nu=0.2, b0=1.0, a0=2e-8, K=1e-15, theta_f=1e-3)
