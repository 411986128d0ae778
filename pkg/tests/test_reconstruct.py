import numpy as np
import pytest

from harmtomo import (assemble_fields, build_interval_basis, build_pole_set,
                      build_rectangle_basis, recover_coefficients, recover_states,
                      solve_states_from_coeffs, trace_inverse, reconstruct)
from harmtomo.fields import ModelParams
from harmtomo.eigenbasis import project, synthesize
from harmtomo.reconstruct import (LinearizedData, LinearizedInput, fit_residues,
                                  linearized_forward, oracle_residues, result_to_csv)
from conftest import random_linearized

GOLDEN = (1 + 5**0.5) / 2


class TestLinearizedForward:
    def test_zero_input(self, setup_small):
        s = setup_small
        lin = LinearizedInput(a_sigma=np.zeros(s["basis"].J), a_eta=np.zeros(s["basis"].J),
                              du=np.zeros((2, s["M"], s["basis"].J), dtype=complex))
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        assert np.all(data.rhat == 0) and np.all(data.phat == 0)

    def test_pure_state_input_is_diagonal(self, setup_small):
        s = setup_small
        lin = random_linearized(s["basis"], s["M"], 1, a_scale=0.0)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        from harmtomo.forward import symbols_matrix
        sym = symbols_matrix(s["params"], s["basis"].lambdas, s["M"])
        assert np.max(np.abs(data.rhat - sym[None] * lin.du)) <= 1e-14

    def test_superposition(self, setup_small):
        s = setup_small
        l1 = random_linearized(s["basis"], s["M"], 2)
        l2 = random_linearized(s["basis"], s["M"], 3)
        both = LinearizedInput(a_sigma=l1.a_sigma + l2.a_sigma, a_eta=l1.a_eta + l2.a_eta,
                               du=l1.du + l2.du)
        d1 = linearized_forward(s["ref"], s["params"], s["basis"], l1)
        d2 = linearized_forward(s["ref"], s["params"], s["basis"], l2)
        db = linearized_forward(s["ref"], s["params"], s["basis"], both)
        assert np.max(np.abs(db.rhat - d1.rhat - d2.rhat)) <= 1e-12
        assert np.max(np.abs(db.phat - d1.phat - d2.phat)) <= 1e-12

    def test_from_fields_projections(self, setup_small):
        s = setup_small
        basis = s["basis"]
        dsig = np.cos(basis.nodes[:, 0])
        deta = np.sin(basis.nodes[:, 0]) ** 2
        du = np.zeros((2, s["M"], basis.J), dtype=complex)
        lin = LinearizedInput.from_fields(basis, s["ref"].phi_grid, dsig, deta, du)
        assert np.max(np.abs(lin.a_sigma - project(basis, s["ref"].phi_grid * dsig))) == 0


class TestStateFormula:
    def test_zero_coefficients(self, setup_small):
        s = setup_small
        rng = np.random.default_rng(4)
        rhat = rng.standard_normal((2, s["M"], s["basis"].J)) * (1 + 0j)
        b = solve_states_from_coeffs(np.zeros((s["basis"].J, 2)), rhat, s["params"],
                                     s["basis"].lambdas, s["sp"].mm)
        from harmtomo.forward import symbols_matrix
        sym = symbols_matrix(s["params"], s["basis"].lambdas, s["M"])
        assert np.max(np.abs(b - rhat / sym[None])) <= 1e-14

    def test_consistent_rhs_gives_zero(self, setup_small):
        s = setup_small
        rng = np.random.default_rng(5)
        a = rng.standard_normal((s["basis"].J, 2))
        rhat = np.einsum("meq,jq->emj", s["sp"].mm[: s["M"]], a).astype(complex)
        b = solve_states_from_coeffs(a, rhat, s["params"], s["basis"].lambdas, s["sp"].mm)
        assert np.max(np.abs(b)) <= 1e-12


class TestResidues:
    def test_single_active_mode(self, setup_small):
        s = setup_small
        J = s["basis"].J
        lin = LinearizedInput(a_sigma=np.eye(J)[3], a_eta=0.5 * np.eye(J)[3],
                              du=np.zeros((2, s["M"], J), dtype=complex))
        lin.du[:, :, 3] = 0.1
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        res = oracle_residues(lin, data.rhat, s["poles"], s["sp"], s["basis"], s["params"])
        mags = np.max(np.abs(res), axis=(1, 2))
        assert np.argmax(mags) == 3
        others = np.delete(mags, 3)
        assert np.max(others) <= 1e-10 * mags[3]

    def test_oracle_vs_fit_agreement(self, setup_big):
        s = setup_big
        lin = random_linearized(s["basis"], s["M"], 7, decay=False)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        res_o = oracle_residues(lin, data.rhat, s["poles"], s["sp"], s["basis"], s["params"])
        res_f, cond = fit_residues(data.phat, data.rhat, s["poles"], s["sp"], s["basis"], s["params"])
        rel = np.max(np.abs(res_f - res_o)) / np.max(np.abs(res_o))
        assert rel <= 1e-8
        assert np.isfinite(cond)

    def test_residues_lie_in_trace_span(self):
        # rectangle side observation: residues proportional to the trace row
        basis = build_rectangle_basis(np.pi, np.pi / GOLDEN, ((1.0, 1.0), (1.0, 1.0)), 6,
                                      sigma_points="side:y=0")
        params = ModelParams.create(tau=0.5, beta=1.0, sigma0=1.0, omega=0.5,
                                    T0=np.pi, A=2.0)
        from harmtomo import amplitude_modulate, build_reference_state, design_delta_pulse
        M = 24
        pulse = design_delta_pulse(params, M, 0.08, amplitude=3.0)
        sp = amplitude_modulate(pulse, 2.0)
        ref = build_reference_state(basis, 0, sp, params)
        poles = build_pole_set(basis.lambdas, params)
        lin = random_linearized(basis, M, 11)
        data = linearized_forward(ref, params, basis, lin)
        res = oracle_residues(lin, data.rhat, poles, sp, basis, params)
        w = basis.sigma_weights
        for ell in np.flatnonzero(poles.ok):
            t = basis.trace_matrix[ell]
            for q in range(2):
                v = res[ell, q]
                coef = np.sum(w * t * v) / np.sum(w * t * t)
                ortho = v - coef * t
                assert np.linalg.norm(ortho) <= 1e-10 * max(np.linalg.norm(v), 1e-30)


class TestRecovery:
    def test_full_pipeline_identity(self, setup_big):
        s = setup_big
        lin = random_linearized(s["basis"], s["M"], 13, decay=False)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        rec = reconstruct(data, data.rhat, s["ref"], s["poles"], s["basis"], s["params"],
                          mode="oracle", true_input=lin)
        assert np.max(np.abs(rec.a - lin.a)) / np.max(np.abs(lin.a)) <= 1e-9
        assert np.max(np.abs(rec.b - lin.du)) / np.max(np.abs(lin.du)) <= 1e-9

    def test_channel_separation(self, setup_small):
        s = setup_small
        lin = random_linearized(s["basis"], s["M"], 17)
        only_sigma = LinearizedInput(a_sigma=lin.a_sigma, a_eta=np.zeros_like(lin.a_eta), du=lin.du)
        data = linearized_forward(s["ref"], s["params"], s["basis"], only_sigma)
        rec = reconstruct(data, data.rhat, s["ref"], s["poles"], s["basis"], s["params"],
                          mode="oracle", true_input=only_sigma)
        assert np.max(np.abs(rec.a[:, 1])) <= 1e-10
        only_eta = LinearizedInput(a_sigma=np.zeros_like(lin.a_sigma), a_eta=lin.a_eta, du=lin.du)
        data = linearized_forward(s["ref"], s["params"], s["basis"], only_eta)
        rec = reconstruct(data, data.rhat, s["ref"], s["poles"], s["basis"], s["params"],
                          mode="oracle", true_input=only_eta)
        assert np.max(np.abs(rec.a[:, 0])) <= 1e-10

    def test_homogeneous_model_channel(self, setup_small):
        # r = 0 means the coefficient pair comes from the residue term alone
        s = setup_small
        rng = np.random.default_rng(19)
        a = rng.standard_normal((s["basis"].J, 2))
        b = solve_states_from_coeffs(a, np.zeros((2, s["M"], s["basis"].J), dtype=complex),
                                     s["params"], s["basis"].lambdas, s["sp"].mm)
        lin = LinearizedInput(a_sigma=a[:, 0], a_eta=a[:, 1], du=b)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        assert np.max(np.abs(data.rhat)) <= 1e-12
        res = oracle_residues(lin, np.zeros_like(data.rhat), s["poles"], s["sp"],
                              s["basis"], s["params"])
        a_rec, _ = recover_coefficients(res, np.zeros_like(data.rhat), s["sp"], s["poles"],
                                        s["basis"], s["params"])
        assert np.max(np.abs(a_rec - a)) <= 1e-9

    def test_both_inverse_orders_agree(self, setup_small):
        s = setup_small
        lin = random_linearized(s["basis"], s["M"], 23)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        res = oracle_residues(lin, data.rhat, s["poles"], s["sp"], s["basis"], s["params"])
        a_in, _ = recover_coefficients(res, data.rhat, s["sp"], s["poles"], s["basis"],
                                       s["params"], order="inside")
        a_out, _ = recover_coefficients(res, data.rhat, s["sp"], s["poles"], s["basis"],
                                        s["params"], order="outside")
        assert np.max(np.abs(a_in - a_out)) <= 1e-11 * max(1.0, np.max(np.abs(a_in)))

    def test_recover_states_formula_equality(self, setup_small):
        s = setup_small
        lin = random_linearized(s["basis"], s["M"], 29)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        res = oracle_residues(lin, data.rhat, s["poles"], s["sp"], s["basis"], s["params"])
        a_rec, _ = recover_coefficients(res, data.rhat, s["sp"], s["poles"], s["basis"], s["params"])
        b_direct = recover_states(res, data.rhat, s["sp"], s["poles"], s["basis"], s["params"])
        b_factored = solve_states_from_coeffs(a_rec, data.rhat, s["params"],
                                              s["basis"].lambdas, s["sp"].mm)
        scale = np.max(np.abs(b_direct))
        assert np.max(np.abs(b_direct - b_factored)) <= 1e-11 * scale
        assert np.max(np.abs(b_direct - lin.du)) <= 1e-9 * max(1.0, np.max(np.abs(lin.du)))

    def test_zero_data_zero_states(self, setup_small):
        s = setup_small
        zero = np.zeros((2, s["M"], s["basis"].J), dtype=complex)
        res = np.zeros((s["basis"].J, 2, s["basis"].nsigma), dtype=complex)
        b = recover_states(res, zero, s["sp"], s["poles"], s["basis"], s["params"])
        assert np.all(b == 0)

    def test_fit_noise_robustness(self, setup_big):
        s = setup_big
        lin = random_linearized(s["basis"], s["M"], 31, decay=False)
        data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
        rng = np.random.default_rng(99)
        direction = rng.standard_normal(data.phat.shape) + 1j * rng.standard_normal(data.phat.shape)
        direction /= np.linalg.norm(direction)
        errs = []
        for level in (1e-6, 1e-4, 1e-2):
            noisy = data.phat + level * np.linalg.norm(data.phat) * direction
            rec = reconstruct(LinearizedData(rhat=data.rhat, phat=noisy), data.rhat,
                              s["ref"], s["poles"], s["basis"], s["params"], mode="fit")
            errs.append(np.linalg.norm(rec.a - lin.a) / np.linalg.norm(lin.a))
        assert errs[0] < errs[1] < errs[2]
        # error grows continuously, about linearly in the noise level
        assert errs[1] / errs[0] <= 2e2 and errs[2] / errs[1] <= 2e2


class TestTraceInverse:
    def test_scalar_division_single_point(self, setup_small):
        basis = setup_small["basis"]
        v = np.array([0.7])
        c = trace_inverse(v, basis, 2)
        assert c == pytest.approx(0.7 / basis.trace_matrix[2, 0])

    def test_right_inverse_property(self):
        basis = build_rectangle_basis(np.pi, np.pi / GOLDEN, ((1.0, 1.0), (1.0, 1.0)), 5,
                                      sigma_points="side:y=0")
        for ell in range(5):
            c = trace_inverse(basis.trace_matrix[ell], basis, ell)
            assert c == pytest.approx(1.0, rel=1e-12)

    def test_orthogonal_data_maps_to_zero(self):
        basis = build_rectangle_basis(np.pi, np.pi / GOLDEN, ((1.0, 1.0), (1.0, 1.0)), 5,
                                      sigma_points="side:y=0")
        t = basis.trace_matrix[1]
        w = basis.sigma_weights
        v = np.linspace(-1, 1, t.size)
        v = v - t * (np.sum(w * t * v) / np.sum(w * t * t))
        assert abs(trace_inverse(v, basis, 1)) <= 1e-12 * np.linalg.norm(v)


class TestAssemble:
    def test_constant_field_with_constant_profile(self):
        basis = build_interval_basis(np.pi, (0.0, 0.0), 6, sigma_points=(0.0,))
        phi = basis.phi[0]  # constant Neumann mode
        sigma_true = np.full(basis.nquad, 0.8)
        eta_true = np.full(basis.nquad, -0.3)
        a = np.stack([project(basis, phi * sigma_true), project(basis, phi**2 * eta_true)], axis=-1)
        dsig, deta = assemble_fields(basis, a, phi)
        assert np.max(np.abs(dsig - sigma_true)) <= 1e-10
        assert np.max(np.abs(deta - eta_true)) <= 1e-10

    def test_pipeline_then_assemble(self, setup_small):
        s = setup_small
        basis, phi = s["basis"], s["ref"].phi_grid
        rng = np.random.default_rng(37)
        sigma_true = synthesize(basis, rng.standard_normal(basis.J) / (1 + np.arange(basis.J)) ** 2) / phi
        eta_true = synthesize(basis, rng.standard_normal(basis.J) / (1 + np.arange(basis.J)) ** 2) / phi**2
        lin = LinearizedInput.from_fields(basis, phi, sigma_true, eta_true,
                                          np.zeros((2, s["M"], basis.J), dtype=complex))
        data = linearized_forward(s["ref"], s["params"], basis, lin)
        rec = reconstruct(data, data.rhat, s["ref"], s["poles"], basis, s["params"],
                          mode="oracle", true_input=lin)
        dsig, deta = assemble_fields(basis, rec.a, phi)
        rel = np.linalg.norm(dsig - sigma_true) / np.linalg.norm(sigma_true)
        assert rel <= 1e-8
        rel_eta = np.linalg.norm(deta - eta_true) / np.linalg.norm(eta_true)
        assert rel_eta <= 1e-8

    def test_guard_trips_on_interior_zero(self):
        basis = build_interval_basis(np.pi, (0.0, 0.0), 6, sigma_points=(0.0,))
        phi = basis.phi[1]  # cosine mode with an interior zero
        with pytest.raises(ZeroDivisionError):
            assemble_fields(basis, np.zeros((6, 2)), phi, guard=0.1)


def test_extract_residues_dispatch_errors(setup_small):
    from harmtomo import extract_residues
    s = setup_small
    zero = np.zeros((2, s["M"], s["basis"].J), dtype=complex)
    phat = np.zeros((2, s["M"], s["basis"].nsigma), dtype=complex)
    with pytest.raises(ValueError):
        extract_residues(phat, zero, s["poles"], s["sp"], s["basis"], s["params"], mode="oracle")
    with pytest.raises(ValueError):
        extract_residues(phat, zero, s["poles"], s["sp"], s["basis"], s["params"], mode="nope")


def test_result_csv(tmp_path, setup_small):
    s = setup_small
    lin = random_linearized(s["basis"], s["M"], 41)
    data = linearized_forward(s["ref"], s["params"], s["basis"], lin)
    rec = reconstruct(data, data.rhat, s["ref"], s["poles"], s["basis"], s["params"],
                      mode="oracle", true_input=lin)
    path = tmp_path / "rec.csv"
    result_to_csv(rec, lin.a, path, scenario_hash="h")
    lines = path.read_text().splitlines()
    assert len(lines) == s["basis"].J + 1
