"""Variational unitary control: layered ZYZ + CNOT-chain circuit ansatz."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import ChoiOperator

Matrix = np.ndarray

FD_STEP = 1e-5


@dataclass
class AnsatzParams:
    n_qubits: int
    n_layers: int
    phi: np.ndarray  # flat, length 3 * n_qubits * n_layers, radians

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if self.phi.size != 3 * self.n_qubits * self.n_layers:
            raise ValueError(
                f"phi length {self.phi.size} != 3 * {self.n_qubits} * {self.n_layers}"
            )

    @classmethod
    def zeros(cls, n_qubits: int, n_layers: int) -> "AnsatzParams":
        return cls(n_qubits, n_layers, np.zeros(3 * n_qubits * n_layers))

    def copy(self) -> "AnsatzParams":
        return AnsatzParams(self.n_qubits, self.n_layers, self.phi.copy())


def _rz(t: float) -> Matrix:
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _ry(t: float) -> Matrix:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _u3(a: float, b: float, c: float) -> Matrix:
    # ZYZ decomposition, applied right to left: Rz(c) Ry(b) Rz(a)
    return _rz(c) @ _ry(b) @ _rz(a)


def _cnot_chain(n: int) -> Matrix:
    """CNOTs on neighboring qubit pairs, control on the lower index."""
    dim = 2**n
    u = np.eye(dim, dtype=complex)
    for q in range(n - 1):
        g = np.eye(dim, dtype=complex)
        for basis in range(dim):
            bits = [(basis >> (n - 1 - k)) & 1 for k in range(n)]
            if bits[q] == 1:
                flipped = list(bits)
                flipped[q + 1] ^= 1
                tgt = sum(bit << (n - 1 - k) for k, bit in enumerate(flipped))
                g[:, basis] = 0
                g[tgt, basis] = 1
        u = g @ u
    return u


def ansatz_unitary(params: AnsatzParams) -> Matrix:
    """U = V_l ... V_1; each layer is per-qubit ZYZ rotations followed by
    the CNOT chain on neighbors."""
    n = params.n_qubits
    phi = params.phi.reshape(params.n_layers, n, 3)
    chain = _cnot_chain(n)
    u = np.eye(2**n, dtype=complex)
    for layer in range(params.n_layers):
        rot = np.array([[1.0 + 0j]])
        for q in range(n):
            a, b, c = phi[layer, q]
            rot = np.kron(rot, _u3(a, b, c))
        u = chain @ rot @ u
    return u


def choi_of_unitary(U: Matrix, tol: float = 1e-10) -> ChoiOperator:
    """Rank-1 Choi operator (U x I)|I><I|(U x I)^dag, trace d."""
    U = np.asarray(U, complex)
    d = U.shape[0]
    if np.linalg.norm(U.conj().T @ U - np.eye(d)) > tol:
        raise ValueError("input is not unitary")
    v = U.reshape(-1)  # component (o, i) = U[o, i]
    return ChoiOperator(np.outer(v, v.conj()), d, d)


def ansatz_choi(params: AnsatzParams) -> ChoiOperator:
    return choi_of_unitary(ansatz_unitary(params))


def grad_objective(params: AnsatzParams, objective, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar objective over the flat phi."""
    phi = params.phi
    grad = np.zeros_like(phi)
    for k in range(phi.size):
        up = phi.copy()
        dn = phi.copy()
        up[k] += step
        dn[k] -= step
        grad[k] = (
            objective(AnsatzParams(params.n_qubits, params.n_layers, up))
            - objective(AnsatzParams(params.n_qubits, params.n_layers, dn))
        ) / (2 * step)
    return grad


@dataclass
class Adagrad:
    """Adagrad accumulator for one parameter vector."""

    learning_rate: float = 0.1
    eps: float = 1e-8
    accum: np.ndarray | None = None

    def step(self, phi: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.accum is None:
            self.accum = np.zeros_like(grad)
        self.accum = self.accum + grad**2
        return phi - self.learning_rate * grad / (np.sqrt(self.accum) + self.eps)
