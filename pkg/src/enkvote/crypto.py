"""Symbol families the election messages are built from.

* ``E_P``  -- password wrap of a group element (``ep_wrap`` / ``ep_unwrap``) and
  of an opaque octet layer (``wrap_layer`` / ``unwrap_layer``). Deliberately
  unauthenticated: unwrapping under any password yields a plausible value, so
  a guessed password can only be tested by doing the discrete-log work.
* ``E*``   -- authenticated symmetric encryption for ID fields (AES-256-GCM).
* ``h_K``  -- Carter-Wegman MAC: polynomial hash mod 2**130 - 5 plus a
  per-nonce pad.

Plus the octet-string <-> group-element embedding used for ballot payloads.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import threading
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import numtheory as nt
from .errors import (
    AuthFailError,
    DecodeError,
    DomainError,
    FormatError,
    NonceReuseError,
    PayloadTooLargeError,
)

DEFAULT_PASSWORD_BITS = 88
KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
MAC_WIRE_BYTES = NONCE_BYTES + TAG_BYTES
SYM_OVERHEAD = NONCE_BYTES + TAG_BYTES
SYM_MAX_PLAINTEXT = 1 << 16
KEY_ROLES = ("va", "ac", "vc")

_POLY_PRIME = (1 << 130) - 5
_MASK128 = (1 << 128) - 1


# --- key material -----------------------------------------------------------


@dataclass(frozen=True, repr=False)
class Password:
    """Raw pre-shared password of ``bits`` bits, stored big-endian."""

    value: bytes
    bits: int = DEFAULT_PASSWORD_BITS

    def __post_init__(self):
        if self.bits < 1:
            raise DomainError("password needs at least one bit")
        if len(self.value) != (self.bits + 7) // 8:
            raise DomainError("password octets do not match its bit length")
        if int.from_bytes(self.value, "big") >> self.bits:
            raise DomainError("password has bits set above its length")

    def __repr__(self):
        return f"Password(<{self.bits} bits redacted>)"

    @classmethod
    def generate(cls, rng=None, bits=DEFAULT_PASSWORD_BITS):
        rng = rng or nt.default_rng()
        return cls.from_int(nt.randbelow(rng, 1 << bits), bits)

    @classmethod
    def from_int(cls, value, bits=DEFAULT_PASSWORD_BITS):
        return cls(value.to_bytes((bits + 7) // 8, "big"), bits)

    def as_int(self):
        return int.from_bytes(self.value, "big")

    def to_text(self):
        return f"{self.bits}:{self.value.hex()}"

    @classmethod
    def from_text(cls, text):
        bits, _, hexval = text.partition(":")
        return cls(bytes.fromhex(hexval), int(bits))


@dataclass(frozen=True, repr=False)
class SymmetricKey:
    key: bytes
    role: str

    def __post_init__(self):
        if len(self.key) != KEY_BYTES:
            raise DomainError("symmetric keys are exactly 256 bits")
        if self.role not in KEY_ROLES:
            raise DomainError(f"unknown key role {self.role!r}")

    def __repr__(self):
        return f"SymmetricKey(role={self.role!r}, <redacted>)"

    @classmethod
    def generate(cls, role, rng=None):
        return cls(nt.randbytes(rng or nt.default_rng(), KEY_BYTES), role)


class NonceLedger:
    """Remembers every (key, nonce) pair handed out; a repeat is fatal.

    Not internally locked: callers serialize access (one ledger per party,
    and servers funnel all party calls through one lock).
    """

    def __init__(self):
        self._seen = set()

    def claim(self, key, nonce, purpose="mac"):
        entry = (purpose, hashlib.sha256(key).digest(), bytes(nonce))
        if entry in self._seen:
            raise NonceReuseError(f"{purpose} nonce reused under this key")
        self._seen.add(entry)

    def reset(self):
        self._seen.clear()

    def __len__(self):
        return len(self._seen)


_default_ledger = NonceLedger()
_default_ledger_lock = threading.Lock()


def default_ledger():
    return _default_ledger


def _claim(ledger, key, nonce, purpose):
    if ledger is None:
        with _default_ledger_lock:
            _default_ledger.claim(key, nonce, purpose)
    else:
        ledger.claim(key, nonce, purpose)


# --- E_P: password wrap -----------------------------------------------------


@dataclass(frozen=True)
class GroupCiphertext:
    pad_nonce: bytes
    body: bytes

    def to_bytes(self):
        return self.pad_nonce + self.body

    @classmethod
    def from_bytes(cls, data, params):
        width = body_width(params)
        if len(data) != NONCE_BYTES + width:
            raise FormatError(f"group ciphertext must be {NONCE_BYTES + width} octets, got {len(data)}")
        return cls(bytes(data[:NONCE_BYTES]), bytes(data[NONCE_BYTES:]))


def body_width(params):
    return math.ceil((params.bit_length + 64) / 8)


def _keystream(password, nonce, n, domain):
    xof = hashlib.shake_256()
    xof.update(domain)
    xof.update(password.bits.to_bytes(2, "big"))
    xof.update(password.value)
    xof.update(nonce)
    return xof.digest(n)


def _xor(a, b):
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def _span(params, qr):
    return params.subgroup_order if qr else params.q_minus_1


def _compress(element, params, qr):
    # Units 1..q-1 index as [0, q-1). A QR element x and q - x are never
    # both residues (q = 3 mod 4), so min(x, q - x) - 1 indexes the
    # subgroup by [0, r). Every code decodes to a group element.
    if not qr:
        return element - 1
    return min(element, params.q - element) - 1


def _decompress(code, params, qr):
    v = code + 1
    if not qr:
        return v
    return v if nt.legendre(v, params) == 1 else params.q - v


def ep_wrap(password, element, params, rng=None, *, qr=False, strict=True):
    """Wrap a group element under ``password``.

    The element (or, in ``qr`` mode, its index in the residue subgroup) is
    lifted to ``c + k*span`` for uniform ``k`` filling the fixed body width,
    then XOR-masked with a keystream keyed by (password, fresh nonce).
    ``strict`` enforces the public precondition ``2 <= element <= q - 2``;
    protocol internals relax it to ``1 <= element <= q - 1``.
    """
    rng = rng or nt.default_rng()
    q = params.q
    lo, hi = (2, q - 2) if strict else (1, q - 1)
    if not lo <= element <= hi:
        raise DomainError(f"element outside [{lo}, {hi}]")
    if qr:
        if not params.is_safe:
            raise DomainError("residue-subgroup wrapping needs a safe prime")
        if nt.legendre(element, params) != 1:
            raise DomainError("element is not a quadratic residue")
    span = _span(params, qr)
    code = _compress(element, params, qr)
    width = body_width(params)
    kmax = ((1 << (8 * width)) - 1 - code) // span
    lifted = code + nt.randbelow(rng, kmax + 1) * span
    nonce = nt.randbytes(rng, NONCE_BYTES)
    stream = _keystream(password, nonce, width, b"enk/element")
    return GroupCiphertext(nonce, _xor(lifted.to_bytes(width, "big"), stream))


def ep_unwrap(password, ct, params, *, qr=False):
    """Inverse of :func:`ep_wrap`. Never signals a wrong password."""
    width = body_width(params)
    if len(ct.body) != width or len(ct.pad_nonce) != NONCE_BYTES:
        raise FormatError("ciphertext width does not match the group")
    stream = _keystream(password, ct.pad_nonce, width, b"enk/element")
    lifted = int.from_bytes(_xor(ct.body, stream), "big")
    return _decompress(lifted % _span(params, qr), params, qr)


def wrap_layer(password, data, rng=None):
    """Outer ``E_P`` layer over opaque octets: nonce || data XOR keystream."""
    rng = rng or nt.default_rng()
    nonce = nt.randbytes(rng, NONCE_BYTES)
    return nonce + _xor(data, _keystream(password, nonce, len(data), b"enk/layer"))


def unwrap_layer(password, blob):
    if len(blob) < NONCE_BYTES:
        raise FormatError("layer shorter than its nonce")
    nonce, body = blob[:NONCE_BYTES], blob[NONCE_BYTES:]
    return _xor(body, _keystream(password, nonce, len(body), b"enk/layer"))


# --- E*: authenticated symmetric encryption ---------------------------------


def sym_encrypt(key, plaintext, rng=None, *, ledger=None):
    """AES-256-GCM; output is nonce || ciphertext || tag."""
    if len(plaintext) > SYM_MAX_PLAINTEXT:
        raise DomainError("plaintext longer than 2**16 octets")
    nonce = nt.randbytes(rng or nt.default_rng(), NONCE_BYTES)
    _claim(ledger, key.key, nonce, "sym")
    return nonce + AESGCM(key.key).encrypt(nonce, bytes(plaintext), None)


def sym_decrypt(key, blob):
    if len(blob) < SYM_OVERHEAD:
        raise FormatError("ciphertext shorter than nonce and tag")
    nonce, body = blob[:NONCE_BYTES], blob[NONCE_BYTES:]
    try:
        return AESGCM(key.key).decrypt(nonce, body, None)
    except InvalidTag:
        raise AuthFailError("symmetric ciphertext failed authentication") from None


# --- h_K: Carter-Wegman MAC -------------------------------------------------


@dataclass(frozen=True)
class MacTag:
    nonce: bytes
    tag: bytes

    def __post_init__(self):
        if len(self.nonce) != NONCE_BYTES or len(self.tag) != TAG_BYTES:
            raise FormatError("MAC tag is a 96-bit nonce and a 128-bit tag")

    def to_bytes(self):
        return self.nonce + self.tag

    @classmethod
    def from_bytes(cls, data):
        if len(data) != MAC_WIRE_BYTES:
            raise FormatError(f"MAC wire form is {MAC_WIRE_BYTES} octets")
        return cls(bytes(data[:NONCE_BYTES]), bytes(data[NONCE_BYTES:]))


class OneTimePadSchedule:
    """Pre-distributed key material for the information-theoretic MAC mode.

    The first 16 octets are the hash subkey; pad ``i`` occupies the next
    16-octet slot and is selected by the nonce read as a big-endian index.
    Each pad may authenticate one message only.
    """

    def __init__(self, material):
        if len(material) < 2 * TAG_BYTES or len(material) % TAG_BYTES:
            raise DomainError("pad material must be a whole number of 16-octet blocks")
        self.material = bytes(material)

    @classmethod
    def generate(cls, n_pads, rng=None):
        return cls(nt.randbytes(rng or nt.default_rng(), TAG_BYTES * (n_pads + 1)))

    @property
    def capacity(self):
        return len(self.material) // TAG_BYTES - 1

    def hash_key(self):
        return int.from_bytes(self.material[:TAG_BYTES], "big")

    def pad(self, nonce):
        index = int.from_bytes(nonce, "big")
        if index >= self.capacity:
            raise DomainError("one-time pad schedule exhausted")
        start = TAG_BYTES * (index + 1)
        return int.from_bytes(self.material[start : start + TAG_BYTES], "big")

    @staticmethod
    def nonce_for(index):
        return index.to_bytes(NONCE_BYTES, "big")


def poly_hash(r, message):
    """Evaluate the message polynomial at ``r`` modulo 2**130 - 5.

    Each 16-octet block (the last may be short) gets a 1 appended above its
    top octet so that trailing zeros and block lengths are distinguished.
    """
    h = 0
    for i in range(0, len(message), 16):
        block = message[i : i + 16]
        c = int.from_bytes(block, "big") | (1 << (8 * len(block)))
        h = ((h + c) * r) % _POLY_PRIME
    return h


def _prf(key, label, data=b""):
    return int.from_bytes(hmac.new(key, label + data, hashlib.sha256).digest()[:TAG_BYTES], "big")


def _raw_tag(key, message, nonce, schedule):
    if schedule is not None:
        r, pad = schedule.hash_key(), schedule.pad(nonce)
    else:
        r, pad = _prf(key.key, b"cw/subkey"), _prf(key.key, b"cw/pad", nonce)
    return ((poly_hash(r, message) + pad) & _MASK128).to_bytes(TAG_BYTES, "big")


def mac_tag(key, message, nonce, *, ledger=None, schedule=None):
    if len(nonce) != NONCE_BYTES:
        raise DomainError("MAC nonce must be 96 bits")
    _claim(ledger, key.key, nonce, "mac")
    return MacTag(bytes(nonce), _raw_tag(key, bytes(message), nonce, schedule))


def mac_verify(key, message, tag, *, schedule=None):
    expected = _raw_tag(key, bytes(message), tag.nonce, schedule)
    return hmac.compare_digest(expected, tag.tag)


# --- payload <-> group element ----------------------------------------------


def payload_capacity(params):
    """Largest payload, in octets, that :func:`encode_payload` accepts."""
    return max(0, (params.bit_length - 16) // 8)


def encode_payload(bits, params):
    """Embed octets as ``0x01 || bits || len`` (squared into the QR subgroup
    under the safe-prime profile)."""
    n = len(bits)
    if 8 * n > params.bit_length - 16:
        raise PayloadTooLargeError(f"{n} octets exceed capacity {payload_capacity(params)}")
    x = int.from_bytes(b"\x01" + bytes(bits) + bytes([n & 0xFF]), "big")
    if params.is_safe:
        return nt.mod_exp(x, 2, params)
    return x


def decode_payload(element, params):
    if not 0 < element < params.q:
        raise DecodeError("not a group element")
    if params.is_safe:
        s = nt.mod_exp(element, (params.subgroup_order + 1) // 2, params)
        if s * s % params.q != element:
            raise DecodeError("element is not a quadratic residue")
        x = min(s, params.q - s)
    else:
        x = element
    nbits = x.bit_length()
    if nbits < 9 or (nbits - 9) % 8:
        raise DecodeError("guard byte absent")
    raw = x.to_bytes((nbits + 7) // 8, "big")
    n = len(raw) - 2
    if raw[0] != 0x01 or raw[-1] != n & 0xFF:
        raise DecodeError("guard byte or length suffix mismatch")
    return raw[1:-1]
