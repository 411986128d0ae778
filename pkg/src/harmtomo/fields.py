"""Physical parameters, smoothness settings, and spectral field containers."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .eigenbasis import EigenBasis, project, synthesize

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModelParams:
    """Scalar model data: relaxation time tau, attenuation beta, reference
    squared slowness sigma0, fundamental angular frequency omega, period T,
    pulse center T0, and modulation amplitude A.

    Admissibility requires sigma0*beta >= tau, so that
    alpha = (sigma0*beta - tau) / (2*beta) is nonnegative.
    """

    tau: float
    beta: float
    sigma0: float
    omega: float
    T: float
    T0: float
    A: float

    def __post_init__(self):
        if self.beta <= 0 or self.sigma0 <= 0 or self.omega <= 0:
            raise ValueError("beta, sigma0, omega must be positive")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.sigma0 * self.beta < self.tau:
            raise ValueError(
                f"stability requirement sigma0*beta >= tau violated "
                f"({self.sigma0 * self.beta:.6g} < {self.tau:.6g})"
            )
        if abs(self.T * self.omega - TWO_PI) > 1e-14 * TWO_PI:
            raise ValueError(f"T*omega = {self.T * self.omega!r} differs from 2*pi")
        if not (0.0 < self.T0 <= self.T):
            raise ValueError("T0 must lie in (0, T]")
        if self.A in (0.0, 1.0):
            raise ValueError("modulation amplitude A must avoid {0, 1}")

    @classmethod
    def create(cls, tau, beta, sigma0, omega, T0, A) -> "ModelParams":
        return cls(tau=tau, beta=beta, sigma0=sigma0, omega=omega,
                   T=TWO_PI / omega, T0=T0, A=A)

    @property
    def alpha(self) -> float:
        return (self.sigma0 * self.beta - self.tau) / (2.0 * self.beta)

    def with_tau(self, tau: float) -> "ModelParams":
        return replace(self, tau=tau)


@dataclass(frozen=True)
class NormSpec:
    """Smoothness setting: spatial order s > 1/2, temporal order
    orti_check in [0, min(s, 1)], and the reduced order s_check = s - orti_check.
    """

    s: float
    orti_check: float

    def __post_init__(self):
        if self.s <= 0.5:
            raise ValueError("need s > 1/2")
        if not (0.0 <= self.orti_check <= min(self.s, 1.0)):
            raise ValueError("need 0 <= orti_check <= min(s, 1)")

    @property
    def s_check(self) -> float:
        return self.s - self.orti_check


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """Complex spectral coefficients of a time-periodic field.

    coeffs[m - 1, j] is the coefficient of harmonic m on basis mode j,
    in the (2/T) * integral(u * exp(-i m omega t)) convention for real
    signals.  Only positive harmonics are stored.
    """

    coeffs: np.ndarray  # (M, J) complex

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2:
            raise ValueError("coeffs must have shape (M, J)")
        if c.shape[0] < 2:
            raise ValueError("need M >= 2; the second harmonic carries the nonlinearity channel")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    @property
    def J(self) -> int:
        return self.coeffs.shape[1]


def as_coeffs(u) -> np.ndarray:
    """Accept a HarmonicField or a bare (.., M, J) coefficient array."""
    if isinstance(u, HarmonicField):
        return u.coeffs
    return np.asarray(u, dtype=complex)


@dataclass(frozen=True, eq=False)
class MaterialField:
    """Real coefficient field known both on the quadrature grid and spectrally."""

    values: np.ndarray  # (nq,)
    coeffs: np.ndarray  # (J,)

    @classmethod
    def from_values(cls, basis: EigenBasis, values) -> "MaterialField":
        values = np.asarray(values, dtype=float)
        return cls(values=values, coeffs=project(basis, values))

    @classmethod
    def from_coeffs(cls, basis: EigenBasis, coeffs) -> "MaterialField":
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(values=synthesize(basis, coeffs), coeffs=coeffs)

    @classmethod
    def constant(cls, basis: EigenBasis, value: float) -> "MaterialField":
        return cls.from_values(basis, np.full(basis.nquad, float(value)))

    def check_slowness_admissible(self, params: ModelParams) -> None:
        """Pointwise sigma(x)*beta >= tau on the grid."""
        if np.min(self.values) * params.beta < params.tau - 1e-14:
            raise ValueError("sigma(x)*beta >= tau fails somewhere on the grid")


def harmonic_field_to_csv(u, path, scenario_hash: str = "") -> None:
    """Rows (m, j, Re, Im) for one spectral field."""
    c = as_coeffs(u)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["m", "j", "re", "im"]
        if scenario_hash:
            header.append("scenario_hash")
        w.writerow(header)
        for m in range(c.shape[0]):
            for j in range(c.shape[1]):
                row = [m + 1, j, format(c[m, j].real, ".17g"), format(c[m, j].imag, ".17g")]
                if scenario_hash:
                    row.append(scenario_hash)
                w.writerow(row)


def harmonic_field_to_json(u, path) -> None:
    c = as_coeffs(u)
    payload = {
        "M": int(c.shape[0]),
        "J": int(c.shape[1]),
        "entries": [
            {"m": m + 1, "j": j, "re": c[m, j].real, "im": c[m, j].imag}
            for m in range(c.shape[0])
            for j in range(c.shape[1])
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
