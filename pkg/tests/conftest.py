import numpy as np
import pytest

from harmtomo import (ModelParams, NormSpec, amplitude_modulate, build_interval_basis,
                      build_pole_set, build_reference_state, design_delta_pulse)


@pytest.fixture(scope="session")
def basis8():
    return build_interval_basis(np.pi, (1.0, 1.0), 8, sigma_points=(0.0,))


@pytest.fixture(scope="session")
def basis16():
    return build_interval_basis(np.pi, (1.0, 1.0), 16, sigma_points=(0.0,))


@pytest.fixture(scope="session")
def params_std():
    # tau = 0.5, unit slowness and attenuation, half-unit frequency
    return ModelParams.create(tau=0.5, beta=1.0, sigma0=1.0, omega=0.5, T0=np.pi / 2, A=2.0)


@pytest.fixture(scope="session")
def spec_std():
    return NormSpec(s=1.0, orti_check=0.5)


@pytest.fixture(scope="session")
def setup_small(basis8, params_std):
    """Small pipeline bundle: 8 modes, 24 harmonics."""
    M = 24
    pulse = design_delta_pulse(params_std, M, 0.08, amplitude=3.0)
    sp = amplitude_modulate(pulse, params_std.A)
    ref = build_reference_state(basis8, 0, sp, params_std)
    poles = build_pole_set(basis8.lambdas, params_std)
    return dict(basis=basis8, params=params_std, M=M, sp=sp, ref=ref, poles=poles)


@pytest.fixture(scope="session")
def setup_big(basis16, params_std):
    """Acceptance-scale bundle: 16 modes, 64 harmonics."""
    M = 64
    pulse = design_delta_pulse(params_std, M, 0.04, amplitude=6.0)
    sp = amplitude_modulate(pulse, params_std.A)
    ref = build_reference_state(basis16, 0, sp, params_std)
    poles = build_pole_set(basis16.lambdas, params_std)
    return dict(basis=basis16, params=params_std, M=M, sp=sp, ref=ref, poles=poles)


def random_linearized(basis, M, seed, a_scale=1.0, du_scale=1.0, du_band=None, decay=True):
    from harmtomo.reconstruct import LinearizedInput

    rng = np.random.default_rng(seed)
    J = basis.J
    a_sigma = a_scale * rng.standard_normal(J)
    a_eta = a_scale * rng.standard_normal(J)
    du = rng.standard_normal((2, M, J)) + 1j * rng.standard_normal((2, M, J))
    if decay:
        du /= (1.0 + np.arange(1, M + 1))[:, None] * (1.0 + basis.lambdas)[None, :]
    du *= du_scale
    if du_band is not None:
        du[:, du_band:, :] = 0.0
    return LinearizedInput(a_sigma=a_sigma, a_eta=a_eta, du=du)
