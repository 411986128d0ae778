"""Frequency-domain multiharmonic model: diagonal symbols, the harmonic
product coupling, the nonlinear fixed-point solve, and trace observations.

A real time-periodic field u(x, t) = Re(sum_m u_m(x) exp(i m omega t)) obeys,
harmonic by harmonic,

    L_m(sigma) u_m + eta * B_m(u, u) = r_m,      m = 1..M,

where L_m acts diagonally on the eigenbasis and B_m is the m-th harmonic
coefficient of the pointwise product of the two real signals.
"""

from __future__ import annotations

import numpy as np

from .eigenbasis import EigenBasis, project, synthesize
from .errors import ConvergenceError, ResonanceError
from .fields import MaterialField, ModelParams, as_coeffs

RESONANCE_TOL = 1e-12


def harmonic_symbol(params: ModelParams, m: int, lam):
    """Diagonal symbol of L_m(sigma0) at eigenvalue lam.

    (i m^3 w^3 tau + m^2 w^2 sigma0 - lam (1 + i beta m w)) / (m^2 w^2).
    Equals (vartheta(o_m) + Theta(o_m) lam) / o_m^2 with o_m = i m w.
    """
    w = params.omega
    mw2 = (m * w) ** 2
    return (1j * m**3 * w**3 * params.tau + mw2 * params.sigma0
            - np.asarray(lam) * (1.0 + 1j * params.beta * m * w)) / mw2


def symbols_matrix(params: ModelParams, lambdas, M: int) -> np.ndarray:
    """(M, J) table of harmonic symbols."""
    lambdas = np.asarray(lambdas, dtype=float)
    return np.array([harmonic_symbol(params, m, lambdas) for m in range(1, M + 1)])


def harmonic_product_time(a_hat, b_hat, m_out: int | None = None) -> np.ndarray:
    """Harmonic coefficients of the product of two real scalar signals.

    For real signals with positive-harmonic coefficients a_hat, b_hat this is

        c_m = 1/2 sum_{l=1}^{m-1} a_l b_{m-l}
            + 1/2 sum_k conj(a_k) b_{k+m} + 1/2 sum_k a_{m+k} conj(b_k),

    the tail sums truncated at the stored length.  The result is exact for
    band-limited inputs when m_out does not exceed len(a) + len(b).
    """
    a = np.asarray(a_hat, dtype=complex)
    b = np.asarray(b_hat, dtype=complex)
    Ma, Mb = a.size, b.size
    m_out = m_out or max(Ma, Mb)
    out = np.zeros(m_out, dtype=complex)
    for m in range(1, m_out + 1):
        s = 0.0 + 0.0j
        for l in range(max(1, m - Mb), min(m - 1, Ma) + 1):
            s += 0.5 * a[l - 1] * b[m - l - 1]
        for k in range(1, min(Ma, Mb - m) + 1):
            s += 0.5 * np.conj(a[k - 1]) * b[k + m - 1]
        for k in range(1, min(Mb, Ma - m) + 1):
            s += 0.5 * a[m + k - 1] * np.conj(b[k - 1])
        out[m - 1] = s
    return out


def product_dc_time(a_hat, b_hat) -> complex:
    """Mean value of the product of two real zero-mean signals: 1/2 sum conj(a) b."""
    a = np.asarray(a_hat, dtype=complex)
    b = np.asarray(b_hat, dtype=complex)
    n = min(a.size, b.size)
    return 0.5 * np.real(np.vdot(a[:n], b[:n])) + 0.0j


def convolve_bm(basis: EigenBasis, u, v, m: int) -> np.ndarray:
    """Spectral coefficients of the m-th harmonic of the pointwise product."""
    return convolve_bm_all(basis, u, v, m_out=m)[m - 1]


def convolve_bm_grid(basis: EigenBasis, u, v, m_out: int | None = None) -> np.ndarray:
    """Quadrature-grid values of every harmonic of the pointwise product.

    Inputs share the basis and truncation; the coupling is symmetric and
    bilinear.  Keeping grid values lets callers multiply by a coefficient
    field before the single final projection.
    """
    uc, vc = as_coeffs(u), as_coeffs(v)
    if uc.shape != vc.shape:
        raise ValueError("fields must share truncation")
    M = uc.shape[0]
    m_out = m_out or M
    ug = synthesize(basis, uc)  # (M, nq)
    vg = ug if (vc is uc or np.array_equal(vc, uc)) else synthesize(basis, vc)
    out_grid = np.zeros((m_out, basis.nquad), dtype=complex)
    for m in range(1, m_out + 1):
        acc = np.zeros(basis.nquad, dtype=complex)
        for l in range(max(1, m - M), min(m - 1, M) + 1):
            acc += 0.5 * ug[l - 1] * vg[m - l - 1]
        for k in range(1, M - m + 1):
            acc += 0.5 * np.conj(ug[k - 1]) * vg[k + m - 1]
            acc += 0.5 * ug[m + k - 1] * np.conj(vg[k - 1])
        out_grid[m - 1] = acc
    return out_grid


def convolve_bm_all(basis: EigenBasis, u, v, m_out: int | None = None) -> np.ndarray:
    """All harmonics of the pointwise product, projected on the basis."""
    return project(basis, convolve_bm_grid(basis, u, v, m_out=m_out))


def solve_linear_harmonics(params: ModelParams, lambdas, rhat) -> np.ndarray:
    """Diagonal solve L_m(sigma0) u_m = r_m; raises on resonant symbols."""
    r = as_coeffs(rhat)
    lambdas = np.asarray(lambdas, dtype=float)
    M = r.shape[0]
    sym = symbols_matrix(params, lambdas, M)
    mag = np.abs(sym)
    if np.min(mag) <= RESONANCE_TOL:
        m_bad, j_bad = np.unravel_index(int(np.argmin(mag)), mag.shape)
        raise ResonanceError(m_bad + 1, int(j_bad), float(mag[m_bad, j_bad]))
    return r / sym


def apply_lm(params: ModelParams, basis: EigenBasis, u, sigma: MaterialField | None = None) -> np.ndarray:
    """L_m(sigma) applied per harmonic; variable sigma acts by grid multiplication."""
    uc = as_coeffs(u)
    M = uc.shape[0]
    out = symbols_matrix(params, basis.lambdas, M) * uc
    if sigma is not None:
        dsig = sigma.values - params.sigma0
        if np.max(np.abs(dsig)) > 0:
            out = out + project(basis, dsig * synthesize(basis, uc))
    return out


def model_residual(params: ModelParams, basis: EigenBasis, sigma: MaterialField,
                   eta: MaterialField, u, rhat) -> np.ndarray:
    """Per-harmonic residual norms of L_m(sigma) u_m + eta B_m(u,u) - r_m.

    Kept separate from the solver sweep: products and projections are
    reassembled from scratch so the check does not share solver state.
    All grid products are projected exactly once.
    """
    uc, r = as_coeffs(u), as_coeffs(rhat)
    lhs = apply_lm(params, basis, uc, sigma)
    eta_b = project(basis, eta.values * convolve_bm_grid(basis, uc, uc))
    res = lhs + eta_b - r
    return np.sqrt(np.sum(np.abs(res) ** 2, axis=1))


def solve_multiharmonic(params: ModelParams, basis: EigenBasis, sigma: MaterialField,
                        eta: MaterialField, rhat, tol: float = 1e-12,
                        max_iter: int = 200, damping: float = 1.0) -> np.ndarray:
    """Damped fixed point u <- L(sigma0)^(-1) (r - (sigma - sigma0) u - eta B(u, u)).

    The nonlinearity must be small enough for contraction; on stagnation with
    the default damping the solve retries once at damping 0.5 before raising.
    """
    r = as_coeffs(rhat)
    M = r.shape[0]
    sym = symbols_matrix(params, basis.lambdas, M)
    mag = np.abs(sym)
    if np.min(mag) <= RESONANCE_TOL:
        m_bad, j_bad = np.unravel_index(int(np.argmin(mag)), mag.shape)
        raise ResonanceError(m_bad + 1, int(j_bad), float(mag[m_bad, j_bad]))

    dsig = sigma.values - params.sigma0
    has_dsig = np.max(np.abs(dsig)) > 0
    u = r / sym
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_iter):
            rhs = r.astype(complex).copy()
            if has_dsig:
                rhs -= project(basis, dsig * synthesize(basis, u))
            rhs -= project(basis, eta.values * convolve_bm_grid(basis, u, u))
            u_new = (1.0 - damping) * u + damping * (rhs / sym)
            step = np.max(np.abs(u_new - u))
            u = u_new
            if not np.isfinite(step):
                break
            if step < 0.1 * tol:
                break
        res = model_residual(params, basis, sigma, eta, u, r)
    if not np.all(np.isfinite(res)) or np.max(res) > tol:
        if damping == 1.0:
            return solve_multiharmonic(params, basis, sigma, eta, rhat,
                                       tol=tol, max_iter=max_iter, damping=0.5)
        raise ConvergenceError(
            f"multiharmonic fixed point stalled: max residual {np.max(res):.3e} > tol {tol:.1e}"
        )
    return u


def observe(basis: EigenBasis, u) -> np.ndarray:
    """Trace samples p_m(x0) = sum_j u_m^j phi_j(x0) for x0 in Sigma."""
    return as_coeffs(u) @ basis.trace_matrix


def synthesize_time(u, omega: float, t) -> np.ndarray:
    """Real time signal Re(sum_m u_m exp(i m omega t)) on a time grid."""
    c = as_coeffs(u)
    t = np.asarray(t, dtype=float)
    m = np.arange(1, c.shape[0] + 1)
    phases = np.exp(1j * omega * np.outer(m, t))  # (M, nt)
    return np.real(np.tensordot(c, phases, axes=([0], [0])))
