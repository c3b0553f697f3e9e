import numpy as np
import pytest
import scipy.linalg

from tnmetro import ansatz
from tnmetro.channels import SIGMA_X, SIGMA_Y, SIGMA_Z


def test_param_length_validation():
    with pytest.raises(ValueError):
        ansatz.AnsatzParams(2, 3, np.zeros(5))
    p = ansatz.AnsatzParams.zeros(2, 3)
    assert p.phi.shape == (18,)


def test_zero_params_single_qubit_is_identity():
    u = ansatz.ansatz_unitary(ansatz.AnsatzParams.zeros(1, 1))
    assert np.allclose(u, np.eye(2))


def test_zero_params_two_qubits_is_cnot():
    u = ansatz.ansatz_unitary(ansatz.AnsatzParams.zeros(2, 1))
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert np.allclose(u, cnot)


def test_single_qubit_matches_matrix_exponentials():
    a, b, c = 0.3, -1.1, 2.2
    u = ansatz.ansatz_unitary(ansatz.AnsatzParams(1, 1, [a, b, c]))
    expect = (
        scipy.linalg.expm(-0.5j * c * SIGMA_Z)
        @ scipy.linalg.expm(-0.5j * b * SIGMA_Y)
        @ scipy.linalg.expm(-0.5j * a * SIGMA_Z)
    )
    assert np.allclose(u, expect, atol=1e-12)


@pytest.mark.parametrize("n,layers", [(1, 2), (2, 3)])
def test_unitarity_random_params(n, layers):
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = ansatz.AnsatzParams(n, layers, rng.uniform(-np.pi, np.pi, 3 * n * layers))
        u = ansatz.ansatz_unitary(p)
        assert np.linalg.norm(u.conj().T @ u - np.eye(2**n)) < 1e-12


def test_choi_of_unitary_properties():
    rng = np.random.default_rng(1)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    u, _ = np.linalg.qr(g)
    choi = ansatz.choi_of_unitary(u)
    assert choi.is_channel()
    assert np.trace(choi.mat).real == pytest.approx(4.0)
    # rank 1: purity Tr(C^2) = d^2
    assert np.trace(choi.mat @ choi.mat).real == pytest.approx(16.0)
    # action on a state equals conjugation
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = rho @ rho.conj().T
    out = np.einsum("oipj,ij->op", choi.mat.reshape(4, 4, 4, 4), rho)
    assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-12)


def test_choi_of_unitary_rejects_non_unitary():
    with pytest.raises(ValueError):
        ansatz.choi_of_unitary(np.ones((2, 2)))


def test_grad_constant_and_linear():
    p = ansatz.AnsatzParams.zeros(1, 1)
    assert np.allclose(ansatz.grad_objective(p, lambda q: 3.0), 0)
    v = np.array([1.0, -2.0, 0.5])
    g = ansatz.grad_objective(p, lambda q: float(q.phi @ v))
    assert np.allclose(g, v, atol=1e-9)


def test_grad_matches_analytic_commutator():
    """d/dphi Tr[sigma_x U rho U^dag] for U = Rz(phi) via the commutator."""
    rho = np.array([[0.6, 0.2 - 0.1j], [0.2 + 0.1j, 0.4]])
    phi0 = 0.7

    def obj(p):
        u = ansatz.ansatz_unitary(p)
        return float(np.trace(SIGMA_X @ u @ rho @ u.conj().T).real)

    p = ansatz.AnsatzParams(1, 1, [phi0, 0.0, 0.0])
    g = ansatz.grad_objective(p, obj)
    u = ansatz.ansatz_unitary(p)
    out = u @ rho @ u.conj().T
    analytic = np.trace(SIGMA_X @ ((-0.5j) * (SIGMA_Z @ out - out @ SIGMA_Z))).real
    assert g[0] == pytest.approx(analytic, abs=1e-7)


def test_adagrad_steps():
    opt = ansatz.Adagrad(learning_rate=0.1)
    phi = np.array([1.0, 1.0])
    g = np.array([1.0, 0.0])
    phi1 = opt.step(phi, g)
    # first step is ~lr in the gradient coordinate, zero elsewhere
    assert phi1[0] == pytest.approx(1.0 - 0.1, abs=1e-6)
    assert phi1[1] == pytest.approx(1.0)
    phi2 = opt.step(phi1, g)
    # accumulated curvature shrinks the step
    assert abs(phi2[0] - phi1[0]) < abs(phi1[0] - phi[0])
