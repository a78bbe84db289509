"""Encrypted no-key (three-pass) exchange as two session state machines.

Initiator ``A`` holds payload ``M`` and exponent ``a``; responder ``B``
holds ``b``. With every pass wrapped under the shared password ``P``::

    A -> B   seq 1   E_P(M^a)
    B -> A   seq 2   E_P(M^ab)
    A -> B   seq 3   E_P(M^b)        B recovers M = (M^b)^(b^-1)

Sessions bind exactly one payload. Any call out of order aborts the session.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from . import numtheory as nt
from .crypto import GroupCiphertext, ep_unwrap, ep_wrap
from .errors import DomainError, FormatError, StateError


class Role(str, enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Phase(str, enum.Enum):
    CREATED = "created"
    SENT_FIRST = "sent_first"
    SENT_SECOND = "sent_second"
    SENT_THIRD = "sent_third"
    COMPLETE = "complete"
    ABORTED = "aborted"


@dataclass(frozen=True)
class EnkMessage:
    seq: int
    ct: GroupCiphertext

    def to_bytes(self):
        return bytes([self.seq]) + self.ct.to_bytes()

    @classmethod
    def from_bytes(cls, data, params):
        if not data:
            raise FormatError("empty ENK message")
        return cls(data[0], GroupCiphertext.from_bytes(data[1:], params))


@dataclass(repr=False)
class EnkSession:
    role: Role
    params: nt.GroupParams
    password: object
    exponent: nt.BlindingExponent
    qr: bool = False
    phase: Phase = Phase.CREATED
    payload: int | None = None
    anomalies: int = 0

    def __repr__(self):
        return f"EnkSession(role={self.role.value}, phase={self.phase.value})"

    @classmethod
    def new(cls, role, params, password, rng=None, *, qr=None, exponent=None):
        """Fresh session with its own blinding exponent.

        ``qr`` defaults to True for safe-prime groups: every pass then carries
        a residue-subgroup element and wraps it in subgroup-index form.
        """
        if qr is None:
            qr = params.is_safe
        exponent = exponent or nt.sample_blinding_exponent(params, rng)
        return cls(Role(role), params, password, exponent, qr)

    # -- helpers --

    def _require(self, role, phase):
        if self.role is not role or self.phase is not phase:
            current = self.phase
            self.phase = Phase.ABORTED
            raise StateError(f"{self.role.value} in phase {current.value} cannot perform this step")

    def _receive(self, msg, seq):
        # sequence is checked before any arithmetic
        if msg is None or msg.seq != seq:
            self.phase = Phase.ABORTED
            got = None if msg is None else msg.seq
            raise StateError(f"expected seq {seq}, got {got}")
        try:
            value = ep_unwrap(self.password, msg.ct, self.params, qr=self.qr)
        except FormatError:
            self.phase = Phase.ABORTED
            raise
        if value == 0:
            self.phase = Phase.ABORTED
            raise DomainError("unwrapped value 0 is not a group element")
        if value == 1:
            self.anomalies += 1
        return value

    def _emit(self, seq, value, rng):
        ct = ep_wrap(self.password, value, self.params, rng, qr=self.qr, strict=False)
        return EnkMessage(seq, ct)

    # -- protocol steps --

    def start(self, message, rng=None):
        """Initiator, pass 1: send ``E_P(M^a)``."""
        self._require(Role.INITIATOR, Phase.CREATED)
        q = self.params.q
        if message in (0, 1, q - 1) or not 0 <= message < q:
            self.phase = Phase.ABORTED
            raise DomainError("degenerate payload: 0, 1, q-1 and out-of-range values are refused")
        if self.qr and nt.legendre(message, self.params) != 1:
            self.phase = Phase.ABORTED
            raise DomainError("payload must lie in the quadratic-residue subgroup")
        self.payload = message
        out = self._emit(1, nt.mod_exp(message, self.exponent.e, self.params), rng)
        self.phase = Phase.SENT_FIRST
        return out

    def blind(self, msg1, rng=None):
        """Responder, pass 2: unwrap ``M^a``, raise to ``b``, rewrap."""
        self._require(Role.RESPONDER, Phase.CREATED)
        value = self._receive(msg1, 1)
        out = self._emit(2, nt.mod_exp(value, self.exponent.e, self.params), rng)
        self.phase = Phase.SENT_SECOND
        return out

    def unblind(self, msg2, rng=None):
        """Initiator, pass 3: strip ``a`` from ``M^ab`` leaving ``M^b``."""
        self._require(Role.INITIATOR, Phase.SENT_FIRST)
        value = self._receive(msg2, 2)
        out = self._emit(3, nt.mod_exp(value, self.exponent.e_inv, self.params), rng)
        self.phase = Phase.SENT_THIRD
        return out

    def finish(self, msg3):
        """Responder: strip ``b`` from ``M^b`` and return ``M``."""
        self._require(Role.RESPONDER, Phase.SENT_SECOND)
        value = self._receive(msg3, 3)
        self.payload = nt.mod_exp(value, self.exponent.e_inv, self.params)
        self.phase = Phase.COMPLETE
        return self.payload


def enk_start(session, message, rng=None):
    return session.start(message, rng)


def enk_blind(session, msg1, rng=None):
    return session.blind(msg1, rng)


def enk_unblind(session, msg2, rng=None):
    return session.unblind(msg2, rng)


def enk_finish(session, msg3):
    return session.finish(msg3)


def run_exchange(params, message, initiator_password, responder_password=None, rng=None,
                 *, qr=None, transcript=None):
    """Run all three passes in-process and return what the responder recovers.

    ``transcript``, when a list, receives the three wire messages in order.
    """
    responder_password = responder_password or initiator_password
    alice = EnkSession.new(Role.INITIATOR, params, initiator_password, rng, qr=qr)
    bob = EnkSession.new(Role.RESPONDER, params, responder_password, rng, qr=qr)
    m1 = alice.start(message, rng)
    m2 = bob.blind(m1, rng)
    m3 = alice.unblind(m2, rng)
    if transcript is not None:
        transcript.extend([m1, m2, m3])
    return bob.finish(m3)
