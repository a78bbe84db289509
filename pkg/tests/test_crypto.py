import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from enkvote import crypto as cr
from enkvote import numtheory as nt
from enkvote.errors import (
    AuthFailError,
    DecodeError,
    DomainError,
    FormatError,
    NonceReuseError,
    PayloadTooLargeError,
)

P1305 = (1 << 130) - 5


def poly_oracle(r, message):
    """Sum of c_i * r^(n-i+1), written without Horner's rule."""
    blocks = [message[i : i + 16] for i in range(0, len(message), 16)]
    n = len(blocks)
    total = 0
    for i, block in enumerate(blocks, 1):
        c = int.from_bytes(block, "big") + (1 << (8 * len(block)))
        total += c * pow(r, n - i + 1, P1305)
    return total % P1305


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**128 - 1), st.binary(max_size=100))
def test_poly_hash_matches_power_sum(r, message):
    assert cr.poly_hash(r, message) == poly_oracle(r, message)


def test_poly_hash_separates_trailing_zero_octets():
    assert cr.poly_hash(12345, b"ab") != cr.poly_hash(12345, b"ab\x00")


def test_mac_round_trip_and_message_binding():
    rng = random.Random(1)
    key = cr.SymmetricKey.generate("va", rng)
    ledger = cr.NonceLedger()
    tag = cr.mac_tag(key, b"ballot", b"\x00" * 12, ledger=ledger)
    assert cr.mac_verify(key, b"ballot", tag)
    assert not cr.mac_verify(key, b"ballou", tag)
    other = cr.SymmetricKey.generate("va", rng)
    assert not cr.mac_verify(other, b"ballot", tag)


def test_mac_zero_forgeries_in_hundred_thousand_attempts():
    rng = random.Random("forgery")
    key = cr.SymmetricKey.generate("vc", rng)
    genuine = cr.mac_tag(key, b"B||S", bytes(12), ledger=cr.NonceLedger())
    forged = 0
    for i in range(100_000):
        if i % 2:
            # random tag for the genuine (message, nonce)
            tag = cr.MacTag(genuine.nonce, rng.randbytes(16))
            forged += cr.mac_verify(key, b"B||S", tag)
        else:
            # random message under a random nonce and tag
            tag = cr.MacTag(rng.randbytes(12), rng.randbytes(16))
            forged += cr.mac_verify(key, rng.randbytes(24), tag)
    assert forged == 0


def test_mac_nonce_reuse_raises():
    key = cr.SymmetricKey.generate("va", random.Random(2))
    ledger = cr.NonceLedger()
    cr.mac_tag(key, b"one", b"\x01" * 12, ledger=ledger)
    with pytest.raises(NonceReuseError):
        cr.mac_tag(key, b"two", b"\x01" * 12, ledger=ledger)


def test_mac_rejects_short_nonce_and_bad_wire_width():
    key = cr.SymmetricKey.generate("va", random.Random(3))
    with pytest.raises(DomainError):
        cr.mac_tag(key, b"m", b"\x00" * 11, ledger=cr.NonceLedger())
    with pytest.raises(FormatError):
        cr.MacTag.from_bytes(b"\x00" * 27)


def test_one_time_pad_schedule_mode():
    rng = random.Random(4)
    key = cr.SymmetricKey.generate("va", rng)
    sched = cr.OneTimePadSchedule.generate(3, rng)
    assert sched.capacity == 3
    ledger = cr.NonceLedger()
    tags = [cr.mac_tag(key, b"m%d" % i, sched.nonce_for(i), ledger=ledger, schedule=sched) for i in range(3)]
    assert all(cr.mac_verify(key, b"m%d" % i, t, schedule=sched) for i, t in enumerate(tags))
    assert not cr.mac_verify(key, b"m0", tags[1], schedule=sched)
    with pytest.raises(DomainError):
        cr.mac_tag(key, b"m", sched.nonce_for(3), ledger=ledger, schedule=sched)


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=512))
def test_sym_round_trip(plaintext):
    key = cr.SymmetricKey(bytes(range(32)), "ac")
    blob = cr.sym_encrypt(key, plaintext, ledger=cr.NonceLedger())
    assert len(blob) == len(plaintext) + cr.SYM_OVERHEAD
    assert cr.sym_decrypt(key, blob) == plaintext


def test_sym_every_single_bit_flip_is_detected():
    key = cr.SymmetricKey.generate("va", random.Random(5))
    blob = cr.sym_encrypt(key, os.urandom(16), ledger=cr.NonceLedger())
    for bit in range(8 * len(blob)):
        flipped = bytearray(blob)
        flipped[bit // 8] ^= 0x80 >> (bit % 8)
        with pytest.raises(AuthFailError):
            cr.sym_decrypt(key, bytes(flipped))


def test_sym_nonce_reuse_is_deterministic():
    key = cr.SymmetricKey.generate("va", random.Random(6))
    for _ in range(3):
        ledger = cr.NonceLedger()
        cr.sym_encrypt(key, b"id", random.Random("n"), ledger=ledger)
        with pytest.raises(NonceReuseError):
            cr.sym_encrypt(key, b"id2", random.Random("n"), ledger=ledger)


def test_sym_limits():
    key = cr.SymmetricKey.generate("va", random.Random(7))
    with pytest.raises(DomainError):
        cr.sym_encrypt(key, bytes(cr.SYM_MAX_PLAINTEXT + 1), ledger=cr.NonceLedger())
    with pytest.raises(FormatError):
        cr.sym_decrypt(key, bytes(27))
    with pytest.raises(DomainError):
        cr.SymmetricKey(bytes(16), "va")
    with pytest.raises(DomainError):
        cr.SymmetricKey(bytes(32), "xx")


def test_password_validation_and_text():
    pw = cr.Password.from_int(5, 3)
    assert pw.value == b"\x05" and pw.as_int() == 5
    assert cr.Password.from_text(pw.to_text()) == pw
    with pytest.raises(DomainError):
        cr.Password(b"\x08", 3)
    with pytest.raises(DomainError):
        cr.Password(b"\x00\x00", 3)
    assert "redacted" in repr(cr.Password.generate(random.Random(0)))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2), st.booleans(), st.integers(0, 2**32))
def test_ep_wrap_round_trip(g, qr, seed):
    params = nt.GroupParams.well_known("modp768")
    element = 2 + g % (params.q - 3)
    if qr:
        element = element * element % params.q
        if not 2 <= element <= params.q - 2:
            return
    rng = random.Random(seed)
    pw = cr.Password.generate(rng)
    ct = cr.ep_wrap(pw, element, params, rng, qr=qr)
    assert len(ct.body) == cr.body_width(params)
    assert cr.ep_unwrap(pw, cr.GroupCiphertext.from_bytes(ct.to_bytes(), params), params, qr=qr) == element


def test_ep_wrap_preconditions(g23):
    pw = cr.Password.from_int(1, 8)
    with pytest.raises(DomainError):
        cr.ep_wrap(pw, 1, g23)
    with pytest.raises(DomainError):
        cr.ep_wrap(pw, 22, g23)
    assert cr.ep_unwrap(pw, cr.ep_wrap(pw, 1, g23, strict=False), g23) == 1
    with pytest.raises(DomainError):
        cr.ep_wrap(pw, 5, g23, qr=True)  # 5 is a non-residue mod 23
    with pytest.raises(FormatError):
        cr.GroupCiphertext.from_bytes(bytes(5), g23)


def test_wrap_layer_round_trip_and_wrong_password():
    rng = random.Random(8)
    pw, other = cr.Password.generate(rng), cr.Password.generate(rng)
    blob = cr.wrap_layer(pw, b"inner layer", rng)
    assert cr.unwrap_layer(pw, blob) == b"inner layer"
    assert cr.unwrap_layer(other, blob) != b"inner layer"
    with pytest.raises(FormatError):
        cr.unwrap_layer(pw, b"short")


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_payload_round_trip(data):
    params = nt.GroupParams.well_known("modp768")
    bits = data.draw(st.binary(max_size=cr.payload_capacity(params)))
    element = cr.encode_payload(bits, params)
    assert nt.is_quadratic_residue(element, params)
    assert cr.decode_payload(element, params) == bits


def test_payload_capacity_and_overflow(g768, g2048):
    assert cr.payload_capacity(g768) == 94
    assert cr.payload_capacity(g2048) == 254
    with pytest.raises(PayloadTooLargeError):
        cr.encode_payload(bytes(95), g768)


def test_payload_plain_prime_round_trip():
    params = nt.generate_group(256, nt.Profile.PLAIN_PRIME, random.Random(9))
    for n in range(cr.payload_capacity(params) + 1):
        bits = bytes(range(n))
        assert cr.decode_payload(cr.encode_payload(bits, params), params) == bits


def test_decode_payload_rejects_non_residue_and_junk(g768):
    nonres = next(x for x in range(2, 100) if nt.legendre(x, g768) == -1)
    with pytest.raises(DecodeError):
        cr.decode_payload(nonres, g768)
    with pytest.raises(DecodeError):
        cr.decode_payload(0, g768)
    with pytest.raises(DecodeError):
        cr.decode_payload(4, g768)  # sqrt 2: no guard byte
