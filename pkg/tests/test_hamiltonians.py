import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_iswap.hamiltonians import (ControlLayout, ExchangeParams, LayoutKind, MotionalModel,
                                       control_hamiltonian, delta_j_motion_estimate,
                                       delta_j_motrot_estimate, exchange_hamiltonian,
                                       first_order_hamiltonian, holstein_hamiltonian,
                                       motion_modulated_exchange, polaron_hamiltonian,
                                       polaron_residual, polaron_transform,
                                       single_excitation_projector, swap_operator)
from robust_iswap.operators import annihilation

GLOBAL = ControlLayout(LayoutKind.GLOBAL)
LOCAL = ControlLayout(LayoutKind.FULL_LOCAL)
DETUNED = ControlLayout(LayoutKind.DETUNED, delta=2.0)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
I2 = np.eye(2)


def herm_err(h):
    return np.max(np.abs(h - h.conj().T))


class TestExchange:
    def test_matrix(self):
        expected = np.zeros((4, 4))
        expected[1, 2] = expected[2, 1] = 1.0
        np.testing.assert_array_equal(exchange_hamiltonian(1.0), expected)
        np.testing.assert_array_equal(exchange_hamiltonian(ExchangeParams(1.0)), expected)

    def test_zero(self):
        np.testing.assert_array_equal(exchange_hamiltonian(0.0), np.zeros((4, 4)))

    def test_bell_eigenbasis(self):
        h = exchange_hamiltonian(1.3)
        psi_p = np.array([0, 1, 1, 0]) / np.sqrt(2)
        psi_m = np.array([0, 1, -1, 0]) / np.sqrt(2)
        np.testing.assert_allclose(h @ psi_p, 1.3 * psi_p, atol=1e-15)
        np.testing.assert_allclose(h @ psi_m, -1.3 * psi_m, atol=1e-15)
        np.testing.assert_allclose(h[[0, 3]], 0)


class TestFirstOrder:
    def test_equals_exchange(self):
        np.testing.assert_array_equal(first_order_hamiltonian(), exchange_hamiltonian(1.0))

    def test_traceless(self):
        assert np.trace(first_order_hamiltonian()) == 0

    def test_swap_times_projector(self):
        p1 = single_excitation_projector()
        np.testing.assert_array_equal(swap_operator() @ p1, first_order_hamiltonian())
        np.testing.assert_allclose(np.diag(p1).real, [0, 1, 1, 0])
        assert np.all(np.linalg.eigvalsh(p1) >= 0)


class TestControl:
    def test_global_x(self):
        np.testing.assert_allclose(control_hamiltonian(GLOBAL, [1.0, 0.0]),
                                   np.kron(SX, I2) + np.kron(I2, SX), atol=1e-15)

    def test_global_zero(self):
        np.testing.assert_array_equal(control_hamiltonian(GLOBAL, [0.0, 1.3]), np.zeros((4, 4)))

    def test_detuning_only(self):
        np.testing.assert_allclose(control_hamiltonian(DETUNED, [0.0, 0.0]),
                                   2.0 * np.diag([1, -1, 1, -1]), atol=1e-15)

    def test_channel_count(self):
        with pytest.raises(ValueError):
            control_hamiltonian(LOCAL, [1.0, 0.0])

    def test_layout_validation(self):
        with pytest.raises(ValueError):
            ControlLayout(LayoutKind.GLOBAL, delta=1.0)
        with pytest.raises(ValueError):
            ControlLayout(LayoutKind.FULL_LOCAL, omega_max=0.0)
        assert LOCAL.channels == ("omega1", "phi1", "omega2", "phi2")
        assert GLOBAL.channels == DETUNED.channels == ("omega", "phi")

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20), st.floats(-10, 10), st.floats(-20, 20), st.floats(-10, 10))
    def test_hermitian(self, a1, p1, a2, p2):
        assert herm_err(control_hamiltonian(LOCAL, [a1, p1, a2, p2])) < 1e-12
        assert herm_err(control_hamiltonian(DETUNED, [a1, p1])) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20), st.floats(-10, 10))
    def test_global_commutes_with_swap(self, amp, phase):
        h = control_hamiltonian(GLOBAL, [amp, phase])
        s = swap_operator()
        assert np.max(np.abs(h @ s - s @ h)) < 1e-12


class TestMotion:
    def test_decoupled(self):
        m = MotionalModel(length_ratio=0.0, n_max=4, omega_over_j=5.0)
        a = annihilation(4)
        n_tot = np.kron(a.conj().T @ a, np.eye(4)) + np.kron(np.eye(4), a.conj().T @ a) + np.eye(16)
        expected = np.kron(exchange_hamiltonian(1.0), np.eye(16)) + 5.0 * np.kron(np.eye(4), n_tot)
        np.testing.assert_array_equal(motion_modulated_exchange(1.0, m), expected)

    def test_ground_matrix_element(self):
        m = MotionalModel(n_max=5)
        h = motion_modulated_exchange(1.0, m)
        n2 = 25
        # <01; 0,0| H |10; 0,0>, qubit index 1 -> |01>, 2 -> |10>
        elem = h[1 * n2, 2 * n2]
        assert elem.real == pytest.approx(0.989362880886426593, abs=1e-14)
        assert m.length_ratio == pytest.approx(0.0421052631578947368, rel=1e-15)

    def test_hermitian(self):
        assert herm_err(motion_modulated_exchange(1.0, MotionalModel())) < 1e-12

    def test_holstein(self):
        m0 = MotionalModel(n_max=4, zeta=0.0, omega_over_j=7.0)
        m = MotionalModel(n_max=4, zeta=0.1, omega_over_j=7.0)
        coupling0 = holstein_hamiltonian(m0) - holstein_hamiltonian(m0).diagonal() * np.eye(64)
        # without zeta only the exchange term is off-diagonal
        np.testing.assert_array_equal(
            coupling0, np.kron(exchange_hamiltonian(1.0), np.eye(16)))
        h = holstein_hamiltonian(m)
        assert herm_err(h) < 1e-12
        # molecule 1 excited (qubit |10>, index 2), motion |0,0> -> |1,0>
        n2 = 16
        assert h[2 * n2 + 4, 2 * n2 + 0] == pytest.approx(-0.1 * 7.0 / 2, abs=1e-15)

    def test_polaron_identity_at_zero(self):
        np.testing.assert_array_equal(polaron_transform(MotionalModel(n_max=3, zeta=0.0)),
                                      np.eye(36))

    def test_polaron_shift(self):
        n_max, zeta = 30, 0.1
        u = polaron_transform(MotionalModel(n_max=n_max, zeta=zeta))
        a1 = np.kron(annihilation(n_max), np.eye(n_max))
        excited1 = np.kron(np.diag([0.0, 0, 1, 1]), np.eye(n_max ** 2))  # molecule 1 in |1>
        lhs = u @ np.kron(np.eye(4), a1) @ u.conj().T
        rhs = np.kron(np.eye(4), a1) + 0.5 * zeta * excited1
        n = np.arange(n_max)
        low = np.tile(((n[:, None] < 10) & (n[None, :] < 10)).ravel(), 4)
        assert np.max(np.abs((lhs - rhs)[np.ix_(low, low)])) < 1e-8

    def test_polaron_hamiltonian_hermitian(self):
        assert herm_err(polaron_hamiltonian(MotionalModel(n_max=5, zeta=0.1))) < 1e-12

    def test_polaron_residual_order(self):
        kw = dict(omega_over_j=7.0, n_max=12, delta_split=3.0)
        r1 = polaron_residual(MotionalModel(zeta=0.1, **kw))
        r2 = polaron_residual(MotionalModel(zeta=0.05, **kw))
        assert np.log2(r1 / r2) >= 2.7

    def test_polaron_opposite_sign_is_lower_order(self):
        kw = dict(omega_over_j=7.0, n_max=12, delta_split=3.0)
        r1 = polaron_residual(MotionalModel(zeta=0.1, **kw), cos_sign=1.0)
        r2 = polaron_residual(MotionalModel(zeta=0.05, **kw), cos_sign=1.0)
        assert np.log2(r1 / r2) < 2.2


class TestEstimates:
    def test_motion_value(self):
        m = MotionalModel(length_ratio=80e-9 / 1.9e-6, beta_ratio=0.42)
        assert delta_j_motion_estimate(m) == pytest.approx(7.3e-2, rel=0.02)

    def test_motion_zero_temperature(self):
        m = MotionalModel(length_ratio=0.03, beta_ratio=1e3)
        assert delta_j_motion_estimate(m) == pytest.approx(6 * np.sqrt(2) * 0.03 ** 2, rel=1e-14)

    def test_coth(self):
        assert 1 / np.tanh(0.21) == pytest.approx(4.83169982246983879, rel=1e-14)

    def test_motrot_value(self):
        assert delta_j_motrot_estimate(MotionalModel(zeta=0.062)) == pytest.approx(6.6e-3, rel=0.02)

    def test_motrot_zero(self):
        assert delta_j_motrot_estimate(MotionalModel(zeta=0.0)) == 0.0

    def test_ratio(self):
        m = MotionalModel(zeta=0.062)
        assert delta_j_motion_estimate(m) / delta_j_motrot_estimate(m) == pytest.approx(11, rel=0.05)
