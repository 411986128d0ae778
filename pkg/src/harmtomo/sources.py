"""Excitation design: delta-like pulses, amplitude modulation, the 2x2 source
matrices with their analytic interpolant, interior-source recursion, and the
separable reference state the inversion is linearized around.

The working pulse is the zero-mean band-limited projection (harmonics 1..M) of
a raised-cosine bump.  With that convention the harmonic coefficients of the
squared signal are exactly the truncated product coefficients, so the
interpolation identity Mtilde(i m omega) = M_m and the determinant identity
det Mtilde(o) = A (A - 1) psi_tilde(o) psisq_tilde(o) hold to roundoff.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .eigenbasis import EigenBasis
from .errors import PulseSupportError, SingularInterpolantError
from .fields import ModelParams
from .forward import harmonic_product_time, product_dc_time, synthesize_time

MTILDE_SINGULAR_TOL = 1e-14
PHI_GUARD = 1e-6


# ---------------------------------------------------------------------------
# Raised-cosine bump and its transform
# ---------------------------------------------------------------------------


def _sym_kernel(z, w: float):
    """integral_{-w}^{w} exp(-z s) ds = 2 sinh(z w) / z, removable at z = 0."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) * w < 1e-6
    zs = z[small] * w
    out[small] = 2.0 * w * (1.0 + zs**2 / 6.0 + zs**4 / 120.0)
    out[~small] = 2.0 * np.sinh(z[~small] * w) / z[~small]
    return out if out.shape else complex(out)


def hann_transform(o, width: float):
    """integral_{-w}^{w} (1 + cos(pi s / w))/2 * exp(-o s) ds for complex o,
    assembled from three shifted symmetric kernels so every removable point
    stays well conditioned."""
    o = np.asarray(o, dtype=complex)
    a = np.pi / width
    val = (0.5 * _sym_kernel(o, width)
           + 0.25 * _sym_kernel(o - 1j * a, width)
           + 0.25 * _sym_kernel(o + 1j * a, width))
    return val


@dataclass(frozen=True, eq=False)
class PulseSpec:
    """Band-limited excitation pulse.

    psi_hat holds the closed-form bump coefficients for harmonics 1..M; the
    time samples are the real synthesis of exactly these harmonics, so the
    stored signal is zero-mean and band-limited by construction.
    """

    psi_hat: np.ndarray   # (M,) complex
    t_grid: np.ndarray    # (nt,)
    psi_t: np.ndarray     # (nt,) real
    T0: float
    width: float
    amplitude: float

    @property
    def M(self) -> int:
        return self.psi_hat.size

    def l2_norm(self, T: float) -> float:
        # rectangle rule on the uniform periodic grid is spectrally accurate
        return float(np.sqrt(np.mean(self.psi_t**2) * T))

    def l4_norm(self, T: float) -> float:
        return float((np.mean(self.psi_t**4) * T) ** 0.25)


def design_delta_pulse(params: ModelParams, M: int, width: float,
                       amplitude: float = 1.0, nt: int | None = None) -> PulseSpec:
    """Raised-cosine bump of half-width `width` centered at T0, band-limited.

    Coefficients are (2/T) amplitude exp(-i m omega T0) H(m omega) with H the
    closed-form bump transform; as width -> 0 the modulus becomes flat in m
    and the phases are those of a delta at T0.  A bump centered at T0 = T
    wraps periodically; the width must keep the support inside one period.
    """
    T, T0 = params.T, params.T0
    if width <= 0:
        raise PulseSupportError("width must be positive")
    if T0 >= T:
        if width >= T / 2:
            raise PulseSupportError(f"width {width:.3g} too large for period {T:.3g}")
    elif width > min(T0, T - T0):
        raise PulseSupportError(
            f"width {width:.3g} pushes the bump support outside (0, {T:.3g}) around T0={T0:.3g}"
        )
    m = np.arange(1, M + 1)
    nu = m * params.omega
    psi_hat = (2.0 / T) * amplitude * np.exp(-1j * nu * T0) * hann_transform(1j * nu, width)
    nt = nt or max(8 * M, 256)
    t = np.linspace(0.0, T, nt, endpoint=False)
    psi_t = synthesize_time(psi_hat, params.omega, t)
    return PulseSpec(psi_hat=psi_hat, t_grid=t, psi_t=psi_t, T0=T0, width=width,
                     amplitude=amplitude)


# ---------------------------------------------------------------------------
# Amplitude modulation and the source matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SourcePair:
    """Two amplitude-modulated excitations psi_1 = psi, psi_2 = A psi with the
    per-harmonic 2x2 matrices M_m = [[psi_m, (psi^2)_m], [A psi_m, A^2 (psi^2)_m]].

    psi_sq_hat carries the exact harmonics 1..2M of the squared signal plus
    its mean psi_sq_dc; both feed the analytic interpolant Mtilde(o).
    """

    psi1: PulseSpec
    psi2: PulseSpec
    A: float
    mm: np.ndarray           # (M, 2, 2) complex
    psi_sq_hat: np.ndarray   # (2M,) complex
    psi_sq_dc: float
    cond: np.ndarray         # (M,) condition numbers of M_m

    @property
    def M(self) -> int:
        return self.psi1.M


def amplitude_modulate(pulse: PulseSpec, A: float) -> SourcePair:
    if A in (0.0, 1.0):
        raise ValueError("A in {0, 1} makes det M_m = A(A-1) psi_m (psi^2)_m vanish")
    psi = pulse.psi_hat
    M = psi.size
    psisq = harmonic_product_time(psi, psi, m_out=2 * M)
    dc = float(product_dc_time(psi, psi).real)
    mm = np.empty((M, 2, 2), dtype=complex)
    mm[:, 0, 0] = psi
    mm[:, 0, 1] = psisq[:M]
    mm[:, 1, 0] = A * psi
    mm[:, 1, 1] = A * A * psisq[:M]
    cond = np.array([np.linalg.cond(mm[k]) for k in range(M)])
    pulse2 = PulseSpec(psi_hat=A * psi, t_grid=pulse.t_grid, psi_t=A * pulse.psi_t,
                       T0=pulse.T0, width=pulse.width, amplitude=A * pulse.amplitude)
    return SourcePair(psi1=pulse, psi2=pulse2, A=A, mm=mm, psi_sq_hat=psisq,
                      psi_sq_dc=dc, cond=cond)


# ---------------------------------------------------------------------------
# Analytic interpolant of periodic signals and the matrix Mtilde(o)
# ---------------------------------------------------------------------------


def _period_kernel(z, T: float):
    """E(z) = integral_0^T exp(-z t) dt = (1 - exp(-z T)) / z, E(0) = T."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) * T < 1e-4
    zs = z[small] * T
    out[small] = T * (1.0 - zs / 2.0 + zs**2 / 6.0 - zs**3 / 24.0 + zs**4 / 120.0)
    out[~small] = (1.0 - np.exp(-z[~small] * T)) / z[~small]
    return out if out.shape else complex(out)


def interp_periodic(hat, dc: float, o: complex, omega: float, T: float):
    """Transform (2/T) integral_0^T g(t) exp(-o t) dt of the real signal with
    positive harmonics `hat` and mean `dc`, analytic in o.

    Away from the harmonic lattice the shared numerator (1 - exp(-o T))
    factors out, which keeps the huge exponentials of strongly damped poles
    in one place; near the lattice the per-term kernel with its removable
    limit is used instead.  hat may carry leading dimensions; the last axis
    indexes harmonics.
    """
    hat = np.asarray(hat, dtype=complex)
    n = hat.shape[-1]
    mw = np.arange(1, n + 1) * omega
    zp = o - 1j * mw
    zm = o + 1j * mw
    near_lattice = min(np.min(np.abs(zp)), np.min(np.abs(zm)), abs(o)) * T < 1e-4
    if near_lattice:
        val = (hat * _period_kernel(zp, T)).sum(axis=-1)
        val = val + (np.conj(hat) * _period_kernel(zm, T)).sum(axis=-1)
        return val / T + (2.0 / T) * dc * _period_kernel(o, T)
    common = 1.0 - np.exp(-o * T)
    val = (hat / zp).sum(axis=-1) + (np.conj(hat) / zm).sum(axis=-1) + 2.0 * dc / o
    return common * val / T


def psi_tilde(sp: SourcePair, o: complex, params: ModelParams):
    return interp_periodic(sp.psi1.psi_hat, 0.0, o, params.omega, params.T)


def psi_sq_tilde(sp: SourcePair, o: complex, params: ModelParams):
    return interp_periodic(sp.psi_sq_hat, sp.psi_sq_dc, o, params.omega, params.T)


def evaluate_mtilde(sp: SourcePair, o: complex, params: ModelParams) -> np.ndarray:
    """Mtilde(o) = [[psi~(o), psi^2~(o)], [A psi~(o), A^2 psi^2~(o)]].

    Interpolates the source matrices: Mtilde(i m omega) = M_m exactly.
    """
    p1 = psi_tilde(sp, o, params)
    p2 = psi_sq_tilde(sp, o, params)
    A = sp.A
    return np.array([[p1, p2], [A * p1, A * A * p2]], dtype=complex)


def invert_mtilde(mt: np.ndarray) -> np.ndarray:
    """Cramer inverse of a 2x2 complex matrix with a determinant guard."""
    det = mt[0, 0] * mt[1, 1] - mt[0, 1] * mt[1, 0]
    scale = np.max(np.abs(mt)) ** 2
    if np.abs(det) <= MTILDE_SINGULAR_TOL * max(scale, 1e-300):
        raise SingularInterpolantError(
            f"Mtilde is numerically singular: |det| = {np.abs(det):.3e}, entry scale {scale:.3e}"
        )
    return np.array([[mt[1, 1], -mt[0, 1]], [-mt[1, 0], mt[0, 0]]], dtype=complex) / det


def mtilde_inverse_at(sp: SourcePair, o: complex, params: ModelParams) -> np.ndarray:
    return invert_mtilde(evaluate_mtilde(sp, o, params))


# ---------------------------------------------------------------------------
# Interior-source recursion and the separable reference state
# ---------------------------------------------------------------------------


def psi_recursion(lam: float, sigma0: float, beta: float, eta0: float,
                  psi1: complex, M: int) -> np.ndarray:
    """Higher-harmonic coefficients generated by quadratic self-interaction.

    In the resonant setting omega = sqrt(lam / sigma0), tau = beta lam / omega^2
    the fundamental coefficient is free and, for m >= 2,

        psi_m = -(m^2 w^2 eta0) / (2 (lam - sigma0 m^2 w^2
                 + i m w (beta lam - tau m^2 w^2))) * sum_{j<m} psi_j psi_{m-j}.
    """
    if psi1 == 0:
        raise ValueError("need a nonzero fundamental coefficient")
    w2 = lam / sigma0
    w = np.sqrt(w2)
    tau = beta * lam / w2
    psi = np.zeros(M, dtype=complex)
    psi[0] = psi1
    for m in range(2, M + 1):
        denom = 2.0 * (lam - sigma0 * m * m * w2
                       + 1j * m * w * (beta * lam - tau * m * m * w2))
        if abs(denom) < 1e-14 * max(lam, 1.0):
            raise ZeroDivisionError(f"vanishing recursion denominator at harmonic m={m}")
        conv = np.sum(psi[: m - 1] * psi[m - 2 :: -1][: m - 1])
        psi[m - 1] = -(m * m * w2 * eta0) / denom * conv
    return psi


@dataclass(frozen=True, eq=False)
class BoundarySource:
    """Neumann-trace boundary drive reproducing the separable reference state:
    the spatial factor is d_nu(phi) on Sigma, the per-harmonic time factor is
    psi_m (1 + i beta m omega) / (i m omega)^2 from twice-integrated forcing."""

    neumann_trace: np.ndarray   # (ns,)
    time_factors: np.ndarray    # (2, M) complex, per source


@dataclass(frozen=True, eq=False)
class ReferenceState:
    """Linearization point: u0_{nu, m} = phi(x) psi_{nu, m} with phi a fixed
    eigenfunction (nonzero a.e.), plus the induced boundary source data."""

    phi_index: int
    phi_grid: np.ndarray        # (nq,)
    phi_min_abs: float
    u0: np.ndarray              # (2, M, J) complex
    source_pair: SourcePair
    eta0: float
    boundary: BoundarySource


def build_reference_state(basis: EigenBasis, phi_index: int, sp: SourcePair,
                          params: ModelParams, eta0: float = 0.0) -> ReferenceState:
    if basis.lambdas[phi_index] <= 0:
        raise ValueError("reference profile must be an eigenfunction with nonzero eigenvalue")
    phi_grid = basis.phi[phi_index]
    phi_min = float(np.min(np.abs(phi_grid)))
    M, J = sp.M, basis.J
    u0 = np.zeros((2, M, J), dtype=complex)
    u0[0, :, phi_index] = sp.psi1.psi_hat
    u0[1, :, phi_index] = sp.psi2.psi_hat
    m = np.arange(1, M + 1)
    om = 1j * m * params.omega
    factor = (1.0 + params.beta * om) / om**2
    tf = np.vstack([sp.psi1.psi_hat * factor, sp.psi2.psi_hat * factor])
    gamma_at_sigma = _boundary_gamma(basis)
    neumann = -gamma_at_sigma * basis.trace_matrix[phi_index]
    return ReferenceState(phi_index=phi_index, phi_grid=phi_grid, phi_min_abs=phi_min,
                          u0=u0, source_pair=sp, eta0=eta0,
                          boundary=BoundarySource(neumann_trace=neumann, time_factors=tf))


def _boundary_gamma(basis: EigenBasis) -> np.ndarray:
    """Robin coefficient at each Sigma sample (d_nu phi = -gamma phi there)."""
    dom = basis.domain
    pts = basis.sigma_nodes
    if dom.kind == "interval":
        L = dom.lengths[0]
        g0, g1 = dom.robin_gamma
        return np.where(np.abs(pts[:, 0]) < np.abs(pts[:, 0] - L), g0, g1)
    (gx0, gx1), (gy0, gy1) = dom.robin_gamma
    Lx, Ly = dom.lengths
    out = np.empty(pts.shape[0])
    for i, (x, y) in enumerate(pts):
        dists = {gx0: abs(x), gx1: abs(x - Lx), gy0: abs(y), gy1: abs(y - Ly)}
        out[i] = min(dists.items(), key=lambda kv: kv[1])[0]
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def source_pair_to_csv(sp: SourcePair, path, scenario_hash: str = "") -> None:
    """Per-harmonic table of pulse coefficients and matrix entries."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["m", "psi_re", "psi_im", "psisq_re", "psisq_im", "det_re", "det_im", "cond"]
        if scenario_hash:
            header.append("scenario_hash")
        w.writerow(header)
        for k in range(sp.M):
            det = np.linalg.det(sp.mm[k])
            row = [k + 1,
                   format(sp.psi1.psi_hat[k].real, ".17g"), format(sp.psi1.psi_hat[k].imag, ".17g"),
                   format(sp.psi_sq_hat[k].real, ".17g"), format(sp.psi_sq_hat[k].imag, ".17g"),
                   format(det.real, ".17g"), format(det.imag, ".17g"),
                   format(sp.cond[k], ".17g")]
            if scenario_hash:
                row.append(scenario_hash)
            w.writerow(row)


def source_pair_to_json(sp: SourcePair, path) -> None:
    payload = {
        "A": sp.A,
        "T0": sp.psi1.T0,
        "width": sp.psi1.width,
        "psi_hat": [[c.real, c.imag] for c in sp.psi1.psi_hat],
        "psi_sq_hat": [[c.real, c.imag] for c in sp.psi_sq_hat],
        "psi_sq_dc": sp.psi_sq_dc,
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
