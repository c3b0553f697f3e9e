import numpy as np
import pytest

from tnmetro import channels


PRESET_NAMES = ["bit_flip", "amplitude_damping", "dephasing_direction"]


def apply_kraus(kraus, rho):
    return sum(k @ rho @ k.conj().T for k in kraus)


@pytest.mark.parametrize("name", PRESET_NAMES)
@pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 1.0])
@pytest.mark.parametrize("theta", [0.0, 1.0, -2.3])
def test_preset_choi_is_channel(name, p, theta):
    ch = channels.get_preset(name, p)
    choi = ch.choi_at(theta)
    assert choi.is_channel()


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_choi_matches_kraus_action(name):
    """E(rho) = Tr_in[Choi (I (x) rho^T)] must equal the Kraus action."""
    ch = channels.get_preset(name, 0.1)
    rng = np.random.default_rng(3)
    rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = rho @ rho.conj().T
    rho /= np.trace(rho)
    choi = ch.choi_at(0.7).mat
    via_choi = np.einsum(
        "oipj,ij->op", choi.reshape(2, 2, 2, 2), rho
    )
    assert np.allclose(via_choi, apply_kraus(ch.kraus_at(0.7), rho), atol=1e-12)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_choi_derivative_finite_difference(name):
    ch = channels.get_preset(name, 0.1)
    h = 1e-6
    fd = (ch.choi_at(1.0 + h).mat - ch.choi_at(1.0 - h).mat) / (2 * h)
    assert np.max(np.abs(fd - ch.dchoi_at(1.0))) < 1e-8


def test_choi_derivative_traceless_output():
    # d/dtheta of a TP family keeps Tr_out = I, so the derivative is
    # traceless on the output subsystem.
    ch = channels.get_preset("amplitude_damping", 0.3)
    dchoi = ch.dchoi_at(0.4).reshape(2, 2, 2, 2)
    assert np.allclose(np.einsum("aiaj->ij", dchoi), 0, atol=1e-12)


def test_signal_unitary():
    u = channels.signal_unitary(1.3)
    assert np.allclose(u @ u.conj().T, np.eye(2))
    assert np.allclose(u, np.diag([np.exp(-0.65j), np.exp(0.65j)]))
    # composition law
    assert np.allclose(
        channels.signal_unitary(0.4) @ channels.signal_unitary(0.5),
        channels.signal_unitary(0.9),
    )


def test_dephasing_direction_has_no_signal():
    ch = channels.get_preset("dephasing_direction", 0.0)
    # at p=0 the channel is the identity for every theta
    assert np.allclose(ch.choi_at(0.3).mat, ch.choi_at(1.7).mat)
    assert np.allclose(ch.dchoi_at(0.9), 0)


def test_bad_inputs():
    with pytest.raises(channels.ChannelError):
        channels.get_preset("nope", 0.1)
    with pytest.raises(channels.ChannelError):
        channels.preset_bit_flip(1.5)
    with pytest.raises(channels.ChannelError):
        channels.choi_from_kraus([])
    with pytest.raises(channels.ChannelError):
        channels.choi_from_kraus([np.eye(2), np.eye(3)])


def test_mix_with_depolarizing_choi_identity():
    ch = channels.get_preset("bit_flip", 0.1)
    eps = 0.25
    mixed = channels.mix_with_depolarizing(ch, eps)
    expect = (1 - eps) * ch.choi_at(1.0).mat + eps * np.eye(4) / 2
    assert np.allclose(mixed.choi_at(1.0).mat, expect, atol=1e-12)
    assert np.allclose(mixed.dchoi_at(1.0), (1 - eps) * ch.dchoi_at(1.0), atol=1e-12)
    assert mixed.choi_at(1.0).is_channel()


def test_mix_with_depolarizing_bad_eps():
    ch = channels.get_preset("bit_flip", 0.1)
    with pytest.raises(channels.ChannelError):
        channels.mix_with_depolarizing(ch, -0.1)
