import random

import pytest
from hypothesis import given, settings, strategies as st

from enkvote import numtheory as nt
from enkvote.crypto import Password, ep_unwrap
from enkvote.enk import EnkMessage, EnkSession, Phase, Role, run_exchange
from enkvote.errors import DomainError, FormatError, StateError


def test_q23_chain_by_hand(g23):
    # independent oracle: plain pow on each step
    m, a, b = 5, 3, 7
    a_inv, b_inv = pow(a, -1, 22), pow(b, -1, 22)
    chain = [pow(m, a, 23)]
    chain.append(pow(chain[-1], b, 23))
    chain.append(pow(chain[-1], a_inv, 23))
    chain.append(pow(chain[-1], b_inv, 23))
    assert chain == [10, 14, 17, 5]

    pw = Password.from_int(0xA5, 8)
    rng = random.Random(0)
    alice = EnkSession(Role.INITIATOR, g23, pw, nt.BlindingExponent(a, a_inv))
    bob = EnkSession(Role.RESPONDER, g23, pw, nt.BlindingExponent(b, b_inv))
    m1 = alice.start(m, rng)
    m2 = bob.blind(m1, rng)
    m3 = alice.unblind(m2, rng)
    seen = [ep_unwrap(pw, msg.ct, g23) for msg in (m1, m2, m3)]
    assert seen == chain[:3]
    assert bob.finish(m3) == 5
    assert alice.phase is Phase.SENT_THIRD and bob.phase is Phase.COMPLETE


def test_thousand_round_trips_at_64_bits(g64):
    rng = random.Random("rt64")
    pw = Password.generate(rng)
    for _ in range(1000):
        m = 2 + nt.randbelow(rng, g64.q - 3)
        assert run_exchange(g64, m, pw, rng=rng, qr=False) == m


def test_ten_round_trips_at_2048_bits(g2048):
    rng = random.Random("rt2048")
    pw = Password.generate(rng)
    for _ in range(10):
        m = pow(2 + nt.randbelow(rng, g2048.q - 3), 2, g2048.q)
        assert run_exchange(g2048, m, pw, rng=rng) == m


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 2**63), st.integers(0, 2**32))
def test_exponentiation_commutes(m, seed):
    params = nt.generate_group(64, rng=random.Random("commute"))
    m = 2 + m % (params.q - 3)
    rng = random.Random(seed)
    a = nt.sample_blinding_exponent(params, rng)
    b = nt.sample_blinding_exponent(params, rng)
    ab = nt.mod_exp(nt.mod_exp(m, a.e, params), b.e, params)
    ba = nt.mod_exp(nt.mod_exp(m, b.e, params), a.e, params)
    assert ab == ba
    assert nt.mod_exp(nt.mod_exp(ab, a.e_inv, params), b.e_inv, params) == m


def test_qr_mode_round_trip(g768):
    rng = random.Random(1)
    pw = Password.generate(rng)
    m = pow(12345, 2, g768.q)
    transcript = []
    assert run_exchange(g768, m, pw, rng=rng, transcript=transcript) == m
    assert [t.seq for t in transcript] == [1, 2, 3]
    assert all(nt.is_quadratic_residue(ep_unwrap(pw, t.ct, g768, qr=True), g768) for t in transcript)


def test_qr_mode_refuses_non_residue(g768):
    session = EnkSession.new(Role.INITIATOR, g768, Password.from_int(1, 8), random.Random(2))
    nonres = next(x for x in range(2, 100) if nt.legendre(x, g768) == -1)
    with pytest.raises(DomainError):
        session.start(nonres)
    assert session.phase is Phase.ABORTED


@pytest.mark.parametrize("m", [0, 1, 22, 23, -1])
def test_degenerate_payloads_refused(g23, m):
    session = EnkSession.new(Role.INITIATOR, g23, Password.from_int(1, 8), random.Random(3), qr=False)
    with pytest.raises(DomainError):
        session.start(m)


def test_wrong_password_recovers_garbage(g64):
    rng = random.Random(4)
    m = 1234567
    out = run_exchange(g64, m, Password.generate(rng), Password.generate(rng), rng=rng, qr=False)
    assert out != m


def test_out_of_order_steps_abort(g64):
    rng = random.Random(5)
    pw = Password.generate(rng)
    alice = EnkSession.new(Role.INITIATOR, g64, pw, rng, qr=False)
    bob = EnkSession.new(Role.RESPONDER, g64, pw, rng, qr=False)
    with pytest.raises(StateError):
        bob.finish(None)
    assert bob.phase is Phase.ABORTED
    alice.start(99, rng)
    with pytest.raises(StateError):
        alice.start(99, rng)
    assert alice.phase is Phase.ABORTED


def test_wrong_sequence_number_aborts(g64):
    rng = random.Random(6)
    pw = Password.generate(rng)
    alice = EnkSession.new(Role.INITIATOR, g64, pw, rng, qr=False)
    bob = EnkSession.new(Role.RESPONDER, g64, pw, rng, qr=False)
    m1 = alice.start(99, rng)
    with pytest.raises(StateError):
        bob.blind(EnkMessage(3, m1.ct), rng)
    assert bob.phase is Phase.ABORTED


def test_message_wire_round_trip(g64):
    rng = random.Random(7)
    alice = EnkSession.new(Role.INITIATOR, g64, Password.generate(rng), rng, qr=False)
    m1 = alice.start(99, rng)
    assert EnkMessage.from_bytes(m1.to_bytes(), g64) == m1
    with pytest.raises(FormatError):
        EnkMessage.from_bytes(b"", g64)
    with pytest.raises(FormatError):
        EnkMessage.from_bytes(m1.to_bytes()[:-1], g64)


def test_session_repr_hides_secrets(g64):
    session = EnkSession.new(Role.RESPONDER, g64, Password.from_int(7, 8), random.Random(8))
    text = repr(session)
    assert "responder" in text and str(session.exponent.e) not in text
