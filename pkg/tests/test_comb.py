import numpy as np
import pytest

from tnmetro import comb, channels
from tnmetro.comb import LabeledOperator, link_product


def random_choi(d_out, d_in, rng, n_kraus=3):
    mat = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    ks = [rng.normal(size=(d_out, d_in)) + 1j * rng.normal(size=(d_out, d_in))
          for _ in range(n_kraus)]
    # normalize to trace preserving
    s = sum(k.conj().T @ k for k in ks)
    w, v = np.linalg.eigh(s)
    s_inv_half = (v / np.sqrt(w)) @ v.conj().T
    ks = [k @ s_inv_half for k in ks]
    for k in ks:
        vvec = k.reshape(-1)
        mat += np.outer(vvec, vvec.conj())
    return mat, ks


def test_labeled_operator_validation():
    with pytest.raises(comb.LabelError):
        LabeledOperator(np.eye(3), (("a", 2),))
    op = LabeledOperator(np.eye(6), (("a", 2), ("b", 3)))
    assert op.dims == (2, 3)
    with pytest.raises(comb.LabelError):
        op._axis("c")


def test_link_product_is_channel_action():
    """Linking a state with a channel Choi gives the channel output."""
    rng = np.random.default_rng(0)
    E, ks = random_choi(2, 2, rng)
    rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = rho @ rho.conj().T
    state = LabeledOperator(rho, (("in", 2),))
    chan = LabeledOperator(E, (("out", 2), ("in", 2)))
    out = link_product(state, chan)
    expect = sum(k @ rho @ k.conj().T for k in ks)
    assert out.labels == (("out", 2),)
    assert np.allclose(out.mat, expect, atol=1e-12)
    # order independence (labels permute but the operator is the same here)
    out2 = link_product(chan, state)
    assert np.allclose(out2.mat, expect, atol=1e-12)


def test_link_product_composition_is_associative():
    rng = np.random.default_rng(1)
    E1, k1 = random_choi(2, 2, rng)
    E2, k2 = random_choi(2, 2, rng)
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    a = LabeledOperator(rho, (("w0", 2),))
    b = LabeledOperator(E1, (("w1", 2), ("w0", 2)))
    c = LabeledOperator(E2, (("w2", 2), ("w1", 2)))
    left = link_product(link_product(a, b), c)
    right = link_product(a, link_product(b, c))
    expect = rho
    for ks in (k1, k2):
        expect = sum(k @ expect @ k.conj().T for k in ks)
    assert np.allclose(left.mat, expect, atol=1e-12)
    assert np.allclose(right.mat, expect, atol=1e-12)


def test_link_product_dimension_mismatch():
    a = LabeledOperator(np.eye(2), (("s", 2),))
    b = LabeledOperator(np.eye(3), (("s", 3),))
    with pytest.raises(comb.LabelError):
        link_product(a, b)


def test_partial_trace_and_transpose():
    rng = np.random.default_rng(2)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    op = LabeledOperator(m, (("a", 2), ("b", 3)))
    tr_b = comb.partial_trace(op, ["b"])
    expect = np.einsum("ikjk->ij", m.reshape(2, 3, 2, 3))
    assert np.allclose(tr_b.mat, expect)
    # double partial transpose is the identity
    pt = comb.partial_transpose(comb.partial_transpose(op, "a"), "a")
    assert np.allclose(pt.mat, m)


def test_choi_identity_acts_trivially():
    state = LabeledOperator(np.diag([0.25, 0.75]).astype(complex), (("x", 2),))
    ident = LabeledOperator(comb.choi_identity(2), (("y", 2), ("x", 2)))
    out = link_product(state, ident)
    assert np.allclose(out.mat, state.mat)


def test_dense_strategy_output_n1_matches_kraus():
    ch = channels.get_preset("amplitude_damping", 0.2)
    rho0 = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)
    rs, rd = comb.dense_strategy_output(
        ch.choi_at(1.0).mat, ch.dchoi_at(1.0), [], rho0, 1
    )
    expect = sum(k @ rho0 @ k.conj().T for k in ch.kraus_at(1.0))
    assert np.allclose(rs, expect, atol=1e-12)
    h = 1e-6
    fd = (
        sum(k @ rho0 @ k.conj().T for k in ch.kraus_at(1.0 + h))
        - sum(k @ rho0 @ k.conj().T for k in ch.kraus_at(1.0 - h))
    ) / (2 * h)
    assert np.max(np.abs(rd - fd)) < 1e-8


def test_dense_strategy_output_guards():
    ch = channels.get_preset("bit_flip", 0.1)
    E = ch.choi_at(1.0).mat
    with pytest.raises(comb.DenseModeError):
        comb.dense_strategy_output(E, E, [E] * 9, np.eye(2) / 2, 10)
    with pytest.raises(comb.DenseModeError):
        comb.dense_strategy_output(E, E, [E], np.eye(2) / 2, 3)


def test_channel_with_ancilla_leaves_ancilla_alone():
    rng = np.random.default_rng(4)
    E, ks = random_choi(2, 2, rng)
    big = comb._channel_with_ancilla(E, 2, 2)
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = rho @ rho.conj().T
    out = np.einsum("oipj,ij->op", big.reshape(4, 4, 4, 4), rho)
    expect = sum(np.kron(k, np.eye(2)) @ rho @ np.kron(k, np.eye(2)).conj().T
                 for k in ks)
    assert np.allclose(out, expect, atol=1e-12)
