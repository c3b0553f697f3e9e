"""Choi-operator algebra on labeled subsystems.

Dense brute-force composition of full sequential strategies lives here and
serves as the correctness oracle for the tensor-network engine.  Operators
carry an ordered list of subsystem labels; the matrix row (column) index is
the row-major combination of the per-label row (column) indices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Matrix = np.ndarray


class LabelError(ValueError):
    """Raised on unknown labels or shared-label dimension mismatches."""


@dataclass(frozen=True)
class LabeledOperator:
    mat: Matrix
    labels: tuple[tuple[object, int], ...]  # (label, dimension), ordered

    def __post_init__(self):
        labels = tuple((l, int(d)) for l, d in self.labels)
        dim = int(np.prod([d for _, d in labels])) if labels else 1
        mat = np.asarray(self.mat, dtype=complex)
        if mat.shape != (dim, dim):
            raise LabelError(
                f"matrix shape {mat.shape} inconsistent with labels {labels}"
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mat", mat)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.labels)

    def tensor(self) -> np.ndarray:
        """Reshape to (row indices..., column indices...), one per label."""
        return self.mat.reshape(self.dims + self.dims)

    def _axis(self, label) -> int:
        for k, (l, _) in enumerate(self.labels):
            if l == label:
                return k
        raise LabelError(f"unknown label {label!r}")


def link_product(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Link product A*B = Tr_{A&B}[(I x A^T_{A&B})(B x I)].

    Shared labels are contracted; output labels are A's unique labels
    followed by B's unique labels.
    """
    shared = [l for l, _ in a.labels if any(l == m for m, _ in b.labels)]
    for l in shared:
        if a.labels[a._axis(l)][1] != b.labels[b._axis(l)][1]:
            raise LabelError(f"shared label {l!r} has mismatched dimensions")

    na, nb = len(a.labels), len(b.labels)
    a_row = list(range(na))
    a_col = list(range(na, 2 * na))
    b_row = list(range(2 * na, 2 * na + nb))
    b_col = list(range(2 * na + nb, 2 * na + 2 * nb))
    # The partial transpose inside the trace cancels against the matrix
    # product, so shared labels contract row-with-row and column-with-column
    # (ket with ket, bra with bra in the Choi-tensor picture).
    for l in shared:
        ia, ib = a._axis(l), b._axis(l)
        a_row[ia] = b_row[ib]
        a_col[ia] = b_col[ib]
    out_labels = [lab for lab in a.labels if lab[0] not in shared]
    out_labels += [lab for lab in b.labels if lab[0] not in shared]
    out_row = [a_row[k] for k, lab in enumerate(a.labels) if lab[0] not in shared]
    out_row += [b_row[k] for k, lab in enumerate(b.labels) if lab[0] not in shared]
    out_col = [a_col[k] for k, lab in enumerate(a.labels) if lab[0] not in shared]
    out_col += [b_col[k] for k, lab in enumerate(b.labels) if lab[0] not in shared]

    res = np.einsum(
        a.tensor(), a_row + a_col, b.tensor(), b_row + b_col, out_row + out_col
    )
    dim = int(np.prod([d for _, d in out_labels])) if out_labels else 1
    return LabeledOperator(res.reshape(dim, dim), tuple(out_labels))


def partial_trace(a: LabeledOperator, labels_to_trace) -> LabeledOperator:
    axes = [a._axis(l) for l in labels_to_trace]
    na = len(a.labels)
    row = list(range(na))
    col = list(range(na, 2 * na))
    for ax in axes:
        col[ax] = row[ax]
    keep = [k for k in range(na) if k not in axes]
    out_labels = tuple(a.labels[k] for k in keep)
    res = np.einsum(a.tensor(), row + col, [row[k] for k in keep] + [col[k] for k in keep])
    dim = int(np.prod([d for _, d in out_labels])) if out_labels else 1
    return LabeledOperator(res.reshape(dim, dim), out_labels)


def partial_transpose(a: LabeledOperator, label) -> LabeledOperator:
    ax = a._axis(label)
    na = len(a.labels)
    t = a.tensor()
    t = np.swapaxes(t, ax, na + ax)
    return LabeledOperator(t.reshape(a.mat.shape), a.labels)


def choi_identity(d: int) -> Matrix:
    """Choi operator |I><I| of the identity channel on dimension d."""
    v = np.eye(d, dtype=complex).reshape(-1)
    return np.outer(v, v)


def _channel_with_ancilla(choi: Matrix, d: int, a: int) -> Matrix:
    """Choi of E (x) I_A with index order (out_s, out_a, in_s, in_a)."""
    if a == 1:
        return choi
    big = np.kron(choi, choi_identity(a))  # ((out_s,in_s),(out_a,in_a))
    t = big.reshape(d, d, a, a, d, d, a, a)  # (os,is,oa,ia | os',is',oa',ia')
    t = t.transpose(0, 2, 1, 3, 4, 6, 5, 7)
    D = d * a
    return t.reshape(D * D, D * D)


class DenseModeError(ValueError):
    """Raised when the dense oracle is asked for a chain it cannot afford."""


def dense_strategy_output(
    E: Matrix,
    Edot: Matrix,
    controls: list[Matrix],
    rho0: Matrix,
    N: int,
    ancilla_dim: int = 1,
) -> tuple[Matrix, Matrix]:
    """Exact output state and derivative of the N-query sequential strategy.

    Composes the chain by sequential link products over explicit wire
    labels; the channel acts as E (x) I on (system x ancilla).  Intended as
    a small-N oracle only.
    """
    if N > 6:
        raise DenseModeError(f"dense oracle limited to N <= 6, got N={N}")
    if len(controls) != N - 1:
        raise DenseModeError(
            f"expected {N - 1} controls for N={N}, got {len(controls)}"
        )
    d2 = E.shape[0]
    d = int(round(np.sqrt(d2)))
    a = ancilla_dim
    D = d * a
    e_full = _channel_with_ancilla(E, d, a)
    edot_full = _channel_with_ancilla(Edot, d, a)

    def compose(dot_at: int | None) -> Matrix:
        # Wire labels: ("w", t) for t = 0..2N-1 numbering time slices of the
        # combined system+ancilla space.
        state = LabeledOperator(np.asarray(rho0, complex), ((("w", 0), D),))
        t = 0
        for i in range(1, N + 1):
            mat = edot_full if dot_at == i else e_full
            ch = LabeledOperator(mat, ((("w", t + 1), D), (("w", t), D)))
            state = link_product(state, ch)
            t += 1
            if i < N:
                ctrl = LabeledOperator(
                    np.asarray(controls[i - 1], complex),
                    ((("w", t + 1), D), (("w", t), D)),
                )
                state = link_product(state, ctrl)
                t += 1
        return state.mat

    rho_theta = compose(None)
    rho_dot = np.zeros_like(rho_theta)
    for i in range(1, N + 1):
        rho_dot += compose(i)
    return rho_theta, rho_dot
