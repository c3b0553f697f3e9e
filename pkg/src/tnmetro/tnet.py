"""MPO contraction engine for the sequential-strategy objective.

Tensor index conventions (all ket indices before bra indices):

* channel site ``E4[o, i, p, j]``: Choi matrix reshaped to
  (out_ket, in_ket, out_bra, in_bra), each of dimension d.
* control site ``C8[o, c, i, a, p, e, j, b]``: Choi on (system x ancilla)
  reshaped to (out_s, out_a, in_s, in_a) ket indices then the same bra
  indices.  Ancilla wires of the channel are never materialized: the
  control's ancilla indices connect directly across each channel site.
* derivative-MPO sites carry an extra bond index (dimension 2) ordered
  from the later site toward the earlier site.
* boundary sites: the input state ``rho[i, a, j, b]`` and the transposed
  cap built from X (or X^2).

A full contraction walks the chain in circuit time order, keeping a single
"transfer" tensor with 4 open legs (5 for the derivative network), so one
pass costs O(N d^4).  ``MpoChain`` caches left/right partial contractions
so a sweep of all single-site environments also costs O(N d^4) total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Matrix = np.ndarray

IMAG_TOL = 1e-8

# Module-level tally of pairwise tensor contractions, for cost accounting.
_OP_COUNT = 0


def reset_op_count():
    global _OP_COUNT
    _OP_COUNT = 0


def op_count() -> int:
    return _OP_COUNT


def _einsum(subscripts: str, *operands) -> np.ndarray:
    global _OP_COUNT
    _OP_COUNT += 1
    return np.einsum(subscripts, *operands)


class ContractionError(RuntimeError):
    """Signals a wiring bug, e.g. a non-real scalar contraction."""


def _real_scalar(z: complex) -> float:
    if abs(z.imag) > IMAG_TOL:
        raise ContractionError(
            f"contraction expected to be real has imaginary part {z.imag:g}"
        )
    return float(z.real)


@dataclass(frozen=True)
class SiteTensor:
    """A tagged tensor of the chain; ``kind`` is one of
    'rho', 'channel', 'control', 'deriv_first', 'deriv_bulk', 'deriv_last'."""

    kind: str
    array: np.ndarray


def build_derivative_mpo(E: Matrix, Edot: Matrix, N: int) -> list[SiteTensor]:
    """Bond-dimension-2 MPO whose contraction over the bond indices equals
    sum_i E^(i-1) (x) Edot (x) E^(N-i), returned in time order (site 1 first).
    """
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    d = int(round(np.sqrt(E.shape[0])))
    e4 = np.asarray(E, complex).reshape(d, d, d, d)
    de4 = np.asarray(Edot, complex).reshape(d, d, d, d)
    if N == 1:
        return [SiteTensor("deriv_first", de4[None])]
    first = np.stack([de4, e4])  # (gamma_1, o, i, p, j)
    last = np.stack([e4, de4])  # (gamma_{N-1}, o, i, p, j)
    bulk = np.zeros((2, 2, d, d, d, d), dtype=complex)
    bulk[0, 0] = e4
    bulk[0, 1] = de4
    bulk[1, 1] = e4
    sites = [SiteTensor("deriv_first", first)]
    sites += [SiteTensor("deriv_bulk", bulk)] * (N - 2)
    sites.append(SiteTensor("deriv_last", last))
    return sites


# ---------------------------------------------------------------------------
# Single contraction steps.  Transfer tensors are T[i, a, j, b] for the plain
# network and S[g, i, a, j, b] for the derivative network (g = bond).

def _fwd_channel(e4, t):
    return _einsum("oipj,iajb->oapb", e4, t)


def _fwd_control(c8, t):
    return _einsum("ociapejb,iajb->ocpe", c8, t)


def _fwd_channel_b(m, s):
    # m: (g_out, g_in, o, i, p, j) bulk site
    return _einsum("ghoipj,hiajb->goapb", m, s)


def _fwd_control_b(c8, s):
    return _einsum("ociapejb,giajb->gocpe", c8, s)


def _rev_channel(e4, r):
    return _einsum("oipj,oapb->iajb", e4, r)


def _rev_control(c8, r):
    return _einsum("ociapejb,ocpe->iajb", c8, r)


def _rev_channel_b(m, r):
    return _einsum("ghoipj,goapb->hiajb", m, r)


def _rev_control_b(c8, r):
    return _einsum("ociapejb,gocpe->giajb", c8, r)


def _fwd_first(m1, rho):
    # m1: (g, o, i, p, j) boundary site of the derivative MPO
    return _einsum("goipj,iajb->goapb", m1, rho)


def _fwd_last(mn, s):
    return _einsum("goipj,giajb->oapb", mn, s)


def _rev_last(mn, cap):
    return _einsum("goipj,oapb->giajb", mn, cap)


def _rev_first(m1, r):
    return _einsum("goipj,goapb->iajb", m1, r)


def _cap_tensor(x: Matrix, d: int, a: int) -> np.ndarray:
    """Boundary tensor of a Hermitian cap operator: the transposed matrix
    reshaped so that contracting it against the state tensor gives Tr(rho X)."""
    return np.asarray(x, complex).reshape(d, a, d, a).transpose(2, 3, 0, 1)


def _as_tensor(op: Matrix, d: int, a: int, n_sub: int) -> np.ndarray:
    dims = (d, a) * (2 * n_sub)
    return np.asarray(op, complex).reshape(dims)


class MpoChain:
    """Tensor chain {rho0, channel/derivative sites, controls, cap} with
    cached left/right environments.

    The chain is single-writer: ``set_control`` / ``set_rho0`` / ``set_x``
    invalidate exactly the cached partial contractions that depend on the
    replaced tensor, so a left-to-right sweep touching every site costs
    O(N d^4) in total.
    """

    def __init__(self, E, Edot, controls, rho0, X, ancilla_dim=1):
        self.d = int(round(np.sqrt(E.shape[0])))
        self.a = int(ancilla_dim)
        self.D = self.d * self.a
        self.N = len(controls) + 1
        d = self.d
        self.e4 = np.asarray(E, complex).reshape(d, d, d, d)
        self.de4 = np.asarray(Edot, complex).reshape(d, d, d, d)
        if rho0.shape != (self.D, self.D):
            raise ValueError(
                f"rho0 shape {rho0.shape} != ({self.D}, {self.D})"
            )
        self.rho = _as_tensor(rho0, d, self.a, 1)
        self.controls = [_as_tensor(c, d, self.a, 2) for c in controls]
        self.X = np.asarray(X, complex)
        mpo = build_derivative_mpo(E, Edot, self.N)
        self.m_first = mpo[0].array
        self.m_bulk = mpo[1].array if self.N > 2 else None
        self.m_last = mpo[-1].array if self.N > 1 else None

        # left*[k] (k = 1..N-1): transfer at the input of control k.
        # right*[k]: transfer at the output of control k.
        self._left2: list = [None] * self.N
        self._left1: list = [None] * self.N
        self._right2: list = [None] * self.N
        self._right1: list = [None] * self.N
        self._left_valid = 0  # left*[k] valid for 1 <= k <= _left_valid
        self._right_valid = self.N  # right*[k] valid for k >= _right_valid
        self._rho_theta = None
        self._rho_dot = None

    # -- site replacement -------------------------------------------------

    def set_control(self, i: int, choi: Matrix):
        """Replace control i (1-based, 1..N-1)."""
        if not 1 <= i <= self.N - 1:
            raise ValueError(f"control index {i} outside 1..{self.N - 1}")
        self.controls[i - 1] = _as_tensor(choi, self.d, self.a, 2)
        self._left_valid = min(self._left_valid, i)
        self._right_valid = max(self._right_valid, i)
        self._rho_theta = self._rho_dot = None

    def set_rho0(self, rho0: Matrix):
        self.rho = _as_tensor(rho0, self.d, self.a, 1)
        self._left_valid = 0
        self._rho_theta = self._rho_dot = None

    def set_x(self, X: Matrix):
        self.X = np.asarray(X, complex)
        self._right_valid = self.N

    # -- cached ladders ----------------------------------------------------

    def _ensure_left(self, k: int):
        """Extend left environments so left*[1..k] are valid."""
        while self._left_valid < k:
            j = self._left_valid + 1
            if j == 1:
                l2 = _fwd_channel(self.e4, self.rho)
                l1 = _fwd_first(self.m_first, self.rho)
            else:
                c = self.controls[j - 2]
                m = self.m_bulk
                l2 = _fwd_channel(self.e4, _fwd_control(c, self._left2[j - 1]))
                l1 = _fwd_channel_b(m, _fwd_control_b(c, self._left1[j - 1]))
            self._left2[j] = l2
            self._left1[j] = l1
            self._left_valid = j

    def _ensure_right(self, k: int):
        """Extend right environments so right*[k..N-1] are valid."""
        d, a = self.d, self.a
        while self._right_valid > k:
            j = self._right_valid - 1
            if j == self.N - 1:
                x2 = self.X @ self.X
                r2 = _rev_channel(self.e4, _cap_tensor(x2, d, a))
                r1 = _rev_last(self.m_last, _cap_tensor(self.X, d, a))
            else:
                c = self.controls[j]  # control j+1
                r2 = _rev_channel(self.e4, _rev_control(c, self._right2[j + 1]))
                r1 = _rev_channel_b(self.m_bulk, _rev_control_b(c, self._right1[j + 1]))
            self._right2[j] = r2
            self._right1[j] = r1
            self._right_valid = j

    def _outputs(self):
        if self._rho_theta is None:
            D = self.D
            if self.N == 1:
                t2 = _fwd_channel(self.e4, self.rho)
                t1 = _fwd_channel(self.de4, self.rho)
            else:
                self._ensure_left(self.N - 1)
                c = self.controls[-1]
                t2 = _fwd_channel(self.e4, _fwd_control(c, self._left2[self.N - 1]))
                s1 = _fwd_control_b(c, self._left1[self.N - 1])
                t1 = _fwd_last(self.m_last, s1)
            self._rho_theta = t2.reshape(D, D)
            self._rho_dot = t1.reshape(D, D)
        return self._rho_theta, self._rho_dot

    # -- public evaluation -------------------------------------------------

    def output_state(self) -> Matrix:
        return self._outputs()[0]

    def output_derivative(self) -> Matrix:
        return self._outputs()[1]

    def f2(self) -> float:
        rho_theta = self.output_state()
        x2 = self.X @ self.X
        return _real_scalar(np.trace(rho_theta @ x2))

    def f1(self) -> float:
        rho_dot = self.output_derivative()
        return _real_scalar(np.trace(rho_dot @ self.X))

    def objective(self) -> float:
        """Current value of 2 f1 - f2."""
        return 2.0 * self.f1() - self.f2()

    # -- environments -------------------------------------------------------

    def environment(self, which: str, site) -> Matrix:
        """Contraction of the full network excluding one site, reshaped so
        that Tr[T env^T] over the excluded tensor T restores the full value.

        ``which`` is 'f1' or 'f2'; ``site`` is 'rho', 'X', or ('C', i) with
        1-based control index i.
        """
        if which not in ("f1", "f2"):
            raise ValueError(f"unknown network {which!r}")
        D = self.D
        if site == "X":
            rho_theta, rho_dot = self._outputs()
            return (rho_theta if which == "f2" else rho_dot).T
        if site == "rho":
            if self.N == 1:
                e4 = self.e4 if which == "f2" else self.de4
                cap = _cap_tensor(
                    self.X @ self.X if which == "f2" else self.X, self.d, self.a
                )
                env = _rev_channel(e4, cap)
            else:
                self._ensure_right(1)
                c = self.controls[0]
                if which == "f2":
                    env = _rev_channel(self.e4, _rev_control(c, self._right2[1]))
                else:
                    env = _rev_first(self.m_first, _rev_control_b(c, self._right1[1]))
            return env.reshape(D, D)
        kind, i = site
        if kind != "C" or not 1 <= i <= self.N - 1:
            raise ValueError(f"invalid site {site!r}")
        self._ensure_left(i)
        self._ensure_right(i)
        if which == "f2":
            env = _einsum(
                "ocpe,iajb->ociapejb", self._right2[i], self._left2[i]
            )
        else:
            env = _einsum(
                "gocpe,giajb->ociapejb", self._right1[i], self._left1[i]
            )
        return env.reshape(D * D, D * D)

    def objective_environment(self, site) -> Matrix:
        """Environment of 2 f1 - f2 for one site (still to be transposed by
        the caller before use as a linear objective coefficient)."""
        return 2.0 * self.environment("f1", site) - self.environment("f2", site)


def contract_f2(chain: MpoChain, X_squared: Matrix) -> float:
    """f2 = Tr[(E^N * controls (x) rho0) X^2] for an explicitly supplied cap."""
    rho_theta = chain.output_state()
    return _real_scalar(np.trace(rho_theta @ X_squared))


def contract_f1(chain: MpoChain, X: Matrix) -> float:
    rho_dot = chain.output_derivative()
    return _real_scalar(np.trace(rho_dot @ X))


def output_state(chain: MpoChain) -> Matrix:
    return chain.output_state()


def output_derivative(chain: MpoChain) -> Matrix:
    return chain.output_derivative()


def environment(chain: MpoChain, which: str, exclude_site) -> Matrix:
    return chain.environment(which, exclude_site)


# ---------------------------------------------------------------------------
# Identical-control fast path: matrix powers of the reshaped transfer blocks.


def _transfer_f2(e4, c8, D):
    t = _einsum("oxpy,xciayejb->ocpeiajb", e4, c8)
    return t.reshape(D * D, D * D)


def _transfer_f1(m_bulk, c8, D):
    t = _einsum("ghoxpy,xciayejb->gocpehiajb", m_bulk, c8)
    return t.reshape(2 * D * D, 2 * D * D)


def identical_output(E, Edot, C, rho0, N, ancilla_dim=1):
    """Output state and derivative with all N-1 controls equal to C,
    evaluated through matrix powers of the composed transfer matrix."""
    d = int(round(np.sqrt(E.shape[0])))
    a = ancilla_dim
    D = d * a
    e4 = np.asarray(E, complex).reshape(d, d, d, d)
    de4 = np.asarray(Edot, complex).reshape(d, d, d, d)
    rho = _as_tensor(rho0, d, a, 1)
    if N == 1:
        return (
            _fwd_channel(e4, rho).reshape(D, D),
            _fwd_channel(de4, rho).reshape(D, D),
        )
    c8 = _as_tensor(C, d, a, 2)
    mpo = build_derivative_mpo(E, Edot, N)
    m_first, m_last = mpo[0].array, mpo[-1].array

    t2 = _transfer_f2(e4, c8, D)
    p2 = np.linalg.matrix_power(t2, N - 1)
    v0 = _fwd_channel(e4, rho).reshape(-1)
    rho_theta = (p2 @ v0).reshape(D, D)

    w0 = _fwd_first(m_first, rho).reshape(-1)
    if N == 2:
        w = w0
    else:
        t1 = _transfer_f1(mpo[1].array, c8, D)
        w = np.linalg.matrix_power(t1, N - 2) @ w0
    w = w.reshape(2, d, a, d, a)
    v = _fwd_control_b(c8, w)
    rho_dot = _fwd_last(m_last, v).reshape(D, D)
    return rho_theta, rho_dot


def identical_f1_f2(E, Edot, C, rho0, X, N, ancilla_dim=1):
    """(f1, f2) with a single shared control, via the matrix-power path."""
    rho_theta, rho_dot = identical_output(E, Edot, C, rho0, N, ancilla_dim)
    f2 = _real_scalar(np.trace(rho_theta @ X @ X))
    f1 = _real_scalar(np.trace(rho_dot @ X))
    return f1, f2
