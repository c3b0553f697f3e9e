"""Symmetric logarithmic derivative and quantum Fisher information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Matrix = np.ndarray

DEFAULT_SUPPORT_CUTOFF = 1e-12


class QfiError(ValueError):
    pass


@dataclass(frozen=True)
class SldResult:
    L: Matrix
    qfi: float
    support_cutoff_used: float


def sld(rho: Matrix, rhodot: Matrix, cutoff: float = DEFAULT_SUPPORT_CUTOFF) -> SldResult:
    """Solve 2 rhodot = rho L + L rho on the support of rho.

    L_{jk} = 2 <j|rhodot|k> / (lam_j + lam_k) over eigenpairs of rho with
    lam_j + lam_k above the cutoff; terms below the cutoff are dropped.
    """
    rho = np.asarray(rho, complex)
    rhodot = np.asarray(rhodot, complex)
    if np.linalg.norm(rho - rho.conj().T) > 1e-8 * max(1.0, np.linalg.norm(rho)):
        raise QfiError("rho is not Hermitian")
    if np.linalg.norm(rhodot - rhodot.conj().T) > 1e-8 * max(
        1.0, np.linalg.norm(rhodot)
    ):
        raise QfiError("rhodot is not Hermitian")
    lam, vecs = np.linalg.eigh(rho)
    if lam.min() < -1e-8:
        raise QfiError(f"rho has negative eigenvalue {lam.min():g}")
    # rhodot in the eigenbasis of rho
    rd = vecs.conj().T @ rhodot @ vecs
    denom = lam[:, None] + lam[None, :]
    coeff = np.where(denom > cutoff, 2.0 * rd / np.where(denom > cutoff, denom, 1.0), 0.0)
    L = vecs @ coeff @ vecs.conj().T
    L = 0.5 * (L + L.conj().T)
    qfi = float(np.real(np.trace(rho @ L @ L)))
    return SldResult(L=L, qfi=max(qfi, 0.0), support_cutoff_used=cutoff)


def qfi_from_state(rho: Matrix, rhodot: Matrix, cutoff: float = DEFAULT_SUPPORT_CUTOFF) -> float:
    return sld(rho, rhodot, cutoff).qfi


def qfi_single_channel_opt(channel, theta: float, ancilla_dim: int = 1, seed: int = 0,
                           max_iters: int = 500, rel_tol: float = 1e-10):
    """Single-query QFI maximized over pure inputs on system x ancilla.

    Alternates the input-state eigen-update with the SLD update at N = 1.
    Returns (qfi, optimal input state).
    """
    d = channel.d
    a = int(ancilla_dim)
    D = d * a
    if D > 4:
        raise QfiError("single-channel optimizer targets d * ancilla_dim <= 4")
    E = channel.choi_at(theta).mat
    Edot = channel.dchoi_at(theta)
    e4 = E.reshape(d, d, d, d)
    de4 = Edot.reshape(d, d, d, d)

    rng = np.random.default_rng(seed)
    psi = rng.normal(size=D) + 1j * rng.normal(size=D)
    psi /= np.linalg.norm(psi)
    rho0 = np.outer(psi, psi.conj())

    def outputs(rho):
        t = rho.reshape(d, a, d, a)
        out = np.einsum("oipj,iajb->oapb", e4, t).reshape(D, D)
        dout = np.einsum("oipj,iajb->oapb", de4, t).reshape(D, D)
        return out, dout

    prev = -np.inf
    for _ in range(max_iters):
        out, dout = outputs(rho0)
        res = sld(out, dout)
        L = res.L
        # environment of 2 f1 - f2 for the input state, transposed
        g1 = np.einsum("oipj,oapb->iajb", de4, (2.0 * L).T.reshape(d, a, d, a))
        g2 = np.einsum("oipj,oapb->iajb", e4, (L @ L).T.reshape(d, a, d, a))
        G = (g1 - g2).reshape(D, D).T
        G = 0.5 * (G + G.conj().T)
        _, v = np.linalg.eigh(G)
        psi = v[:, -1]
        rho0 = np.outer(psi, psi.conj())
        if abs(res.qfi - prev) <= rel_tol * max(1.0, abs(res.qfi)):
            break
        prev = res.qfi
    out, dout = outputs(rho0)
    return sld(out, dout).qfi, rho0
