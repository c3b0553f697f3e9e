"""Parametrized noisy qubit channels in Kraus form and their Choi operators.

Conventions used throughout the package:

* Choi operators are indexed (output, input): the Choi matrix of a channel
  with input dimension ``d_in`` and output dimension ``d_out`` is a
  ``d_out*d_in`` square matrix whose row index is the pair (out, in) in
  row-major order.
* The maximally entangled reference vector is unnormalized,
  ``|I> = sum_j |j>|j>`` (norm^2 = d_in).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Matrix = np.ndarray

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class ChannelError(ValueError):
    """Raised for malformed Kraus sets or out-of-range channel parameters."""


@dataclass(frozen=True)
class ChoiOperator:
    """Positive operator on (output x input) with subsystem dimensions."""

    mat: Matrix
    d_out: int
    d_in: int

    def __post_init__(self):
        mat = np.asarray(self.mat, dtype=complex)
        if mat.shape != (self.d_out * self.d_in, self.d_out * self.d_in):
            raise ChannelError(
                f"Choi matrix shape {mat.shape} inconsistent with "
                f"d_out={self.d_out}, d_in={self.d_in}"
            )
        object.__setattr__(self, "mat", mat)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(self.mat - self.mat.conj().T) <= tol)

    def trace_out(self) -> Matrix:
        """Partial trace over the output subsystem (TP check: equals I_in)."""
        t = self.mat.reshape(self.d_out, self.d_in, self.d_out, self.d_in)
        return np.einsum("aiaj->ij", t)

    def is_channel(self, tol_psd: float = 1e-10, tol_tp: float = 1e-9) -> bool:
        if not self.is_hermitian(1e-12):
            return False
        if np.linalg.eigvalsh(self.mat).min() < -tol_psd:
            return False
        return bool(
            np.linalg.norm(self.trace_out() - np.eye(self.d_in)) <= tol_tp
        )


@dataclass
class ParamChannel:
    """A theta-parametrized channel given by Kraus operators and analytic
    theta-derivatives of the Kraus operators."""

    d: int
    kraus_at: Callable[[float], list[Matrix]]
    dkraus_at: Callable[[float], list[Matrix]]
    name: str = ""

    def choi_at(self, theta: float) -> ChoiOperator:
        return choi_from_kraus(self.kraus_at(theta))

    def dchoi_at(self, theta: float) -> Matrix:
        return choi_derivative(self.kraus_at(theta), self.dkraus_at(theta))


def _check_kraus_dims(kraus: Sequence[Matrix]) -> int:
    if len(kraus) == 0:
        raise ChannelError("empty Kraus set")
    d = np.asarray(kraus[0]).shape[0]
    for k in kraus:
        k = np.asarray(k)
        if k.shape != (d, d):
            raise ChannelError(f"Kraus operator shape {k.shape} != ({d}, {d})")
    return d


def choi_from_kraus(kraus: Sequence[Matrix]) -> ChoiOperator:
    """Choi operator sum_i (K_i x I)|I><I|(K_i x I)^dag, (out, in) ordered."""
    d = _check_kraus_dims(kraus)
    mat = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        v = np.asarray(k, dtype=complex).reshape(-1)  # component (o, i) = K[o, i]
        mat += np.outer(v, v.conj())
    return ChoiOperator(mat, d, d)


def choi_derivative(kraus: Sequence[Matrix], dkraus: Sequence[Matrix]) -> Matrix:
    """Analytic theta-derivative of the Choi operator from (K_i, dK_i/dtheta)."""
    d = _check_kraus_dims(kraus)
    if len(dkraus) != len(kraus) or _check_kraus_dims(dkraus) != d:
        raise ChannelError("Kraus and derivative lists must match in shape")
    mat = np.zeros((d * d, d * d), dtype=complex)
    for k, dk in zip(kraus, dkraus):
        v = np.asarray(k, dtype=complex).reshape(-1)
        dv = np.asarray(dk, dtype=complex).reshape(-1)
        mat += np.outer(dv, v.conj()) + np.outer(v, dv.conj())
    return mat


def signal_unitary(theta: float) -> Matrix:
    """Phase signal U_Z(theta) = exp(-i theta sigma_z / 2)."""
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def _check_p(p: float):
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"noise strength p={p} outside [0, 1]")


def preset_bit_flip(p: float) -> ParamChannel:
    """Bit flip noise followed by the phase signal: K_i = U_Z(theta) K_i^BF."""
    _check_p(p)
    base = [np.sqrt(1 - p) * I2, np.sqrt(p) * SIGMA_X]

    def kraus_at(theta):
        u = signal_unitary(theta)
        return [u @ k for k in base]

    def dkraus_at(theta):
        du = (-0.5j * SIGMA_Z) @ signal_unitary(theta)
        return [du @ k for k in base]

    return ParamChannel(2, kraus_at, dkraus_at, name="bit_flip")


def preset_amplitude_damping(p: float) -> ParamChannel:
    """Amplitude damping noise followed by the phase signal."""
    _check_p(p)
    k1 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    k2 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    base = [k1, k2]

    def kraus_at(theta):
        u = signal_unitary(theta)
        return [u @ k for k in base]

    def dkraus_at(theta):
        du = (-0.5j * SIGMA_Z) @ signal_unitary(theta)
        return [du @ k for k in base]

    return ParamChannel(2, kraus_at, dkraus_at, name="amplitude_damping")


def preset_dephasing_direction(p: float) -> ParamChannel:
    """Dephasing with parametrized axis; theta enters only the noise Kraus.

    K_1 = sqrt(1-p) I, K_2 = sqrt(p) (cos(theta) sigma_z + sin(theta) sigma_x);
    there is no signal unitary.
    """
    _check_p(p)

    def kraus_at(theta):
        return [
            np.sqrt(1 - p) * I2,
            np.sqrt(p) * (np.cos(theta) * SIGMA_Z + np.sin(theta) * SIGMA_X),
        ]

    def dkraus_at(theta):
        return [
            np.zeros((2, 2), dtype=complex),
            np.sqrt(p) * (-np.sin(theta) * SIGMA_Z + np.cos(theta) * SIGMA_X),
        ]

    return ParamChannel(2, kraus_at, dkraus_at, name="dephasing_direction")


PRESETS: dict[str, Callable[[float], ParamChannel]] = {
    "bit_flip": preset_bit_flip,
    "amplitude_damping": preset_amplitude_damping,
    "dephasing_direction": preset_dephasing_direction,
}


def get_preset(name: str, p: float) -> ParamChannel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ChannelError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None
    return factory(p)


def mix_with_depolarizing(channel: ParamChannel, eps: float) -> ParamChannel:
    """Convex mixture with the completely depolarizing channel.

    The Choi operator of the result is (1-eps) E_theta + eps I/d and its
    derivative is scaled by (1-eps).  Realized at the Kraus level by
    appending the rescaled depolarizing Kraus set {sqrt(eps/d) |m><n|}.
    """
    if not 0.0 <= eps <= 1.0:
        raise ChannelError(f"mixing weight eps={eps} outside [0, 1]")
    d = channel.d
    extra = []
    for m in range(d):
        for n in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[m, n] = np.sqrt(eps / d)
            extra.append(e)
    zero = [np.zeros((d, d), dtype=complex)] * len(extra)

    def kraus_at(theta):
        return [np.sqrt(1 - eps) * k for k in channel.kraus_at(theta)] + extra

    def dkraus_at(theta):
        return [np.sqrt(1 - eps) * k for k in channel.dkraus_at(theta)] + zero

    return ParamChannel(d, kraus_at, dkraus_at, name=f"{channel.name}+dep({eps})")
