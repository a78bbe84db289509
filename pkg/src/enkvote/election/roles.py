"""Voter, Administrator and Counter as message-in / message-out objects.

No role knows about transports: each method takes a wire body and returns
the body of the reply. The harness moves bodies around, in-process or over
sockets, which keeps every transport bit-identical.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .. import numtheory as nt
from ..crypto import (
    NONCE_BYTES,
    NonceLedger,
    Password,
    decode_payload,
    encode_payload,
    mac_tag,
    mac_verify,
    sym_decrypt,
    sym_encrypt,
    unwrap_layer,
    wrap_layer,
)
from ..enk import EnkMessage, EnkSession, Role
from ..errors import (
    AuthFailError,
    ChoiceOutOfRangeError,
    DecodeError,
    DomainError,
    FormatError,
    StateError,
)
from .records import (
    ID_BYTES,
    VERIF_BYTES,
    AuthTable,
    BallotPackage,
    BoardStatus,
    BulletinBoard,
    PublishedBoard,
    Substitution,
    SubstitutionTable,
)

_LEN = struct.Struct("!H")


@dataclass(frozen=True)
class RelayBody:
    """``(E*_K[ID], E_P[...])`` as carried by every voting message."""

    id_ct: bytes
    payload: bytes

    def to_bytes(self):
        return _LEN.pack(len(self.id_ct)) + self.id_ct + self.payload

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _LEN.size:
            raise FormatError("relay body too short")
        (n,) = _LEN.unpack_from(data)
        if len(data) < _LEN.size + n:
            raise FormatError("relay body truncated")
        return cls(bytes(data[2 : 2 + n]), bytes(data[2 + n :]))


def _fresh_token(rng, taken):
    while True:
        token = nt.randbytes(rng, ID_BYTES)
        if token not in taken:
            return token


# --- voter -------------------------------------------------------------------


class VerifyStatus(str, enum.Enum):
    COUNTED = "counted"
    MISSING = "missing"
    ALTERED = "altered"


def verify_package(package, board):
    row = board.find(package.verif)
    if row is None:
        return VerifyStatus.MISSING
    if row.ballot != package.ballot or row.tag_va != package.tag_va:
        return VerifyStatus.ALTERED
    return VerifyStatus.COUNTED


class Voter:
    def __init__(self, credential, candidates, params, rng=None, *, ledger=None):
        self.credential = credential
        self.candidates = candidates
        self.params = params
        self.rng = rng or nt.default_rng()
        self.ledger = ledger if ledger is not None else NonceLedger()
        self.package = None
        self.session = None
        self.announcement = None

    @property
    def index(self):
        return self.credential.index

    def build_ballot(self, choice):
        if not 1 <= choice <= self.candidates.m:
            raise ChoiceOutOfRangeError(f"choice {choice} outside 1..{self.candidates.m}")
        cred = self.credential
        ballot = self.candidates.code_for(choice)
        verif = nt.randbytes(self.rng, VERIF_BYTES)
        tag_va = mac_tag(cred.k_va, ballot + verif, nt.randbytes(self.rng, NONCE_BYTES), ledger=self.ledger)
        x = ballot + verif + tag_va.to_bytes()
        tag_vc = mac_tag(cred.k_vc, x, nt.randbytes(self.rng, NONCE_BYTES), ledger=self.ledger)
        self.package = BallotPackage(ballot, verif, tag_va, tag_vc)
        return self.package

    def submit(self, package=None):
        """Phase II message: ``(E*_Kva[ID], E_Pav[E_Pvc[Y^a]])``."""
        package = package or self.package
        if package is None:
            raise StateError("no ballot built")
        self.package = package
        cred = self.credential
        element = encode_payload(package.y, self.params)
        self.session = EnkSession.new(Role.INITIATOR, self.params, cred.p_vc, self.rng, qr=self.params.is_safe)
        inner = self.session.start(element, self.rng)
        outer = wrap_layer(cred.p_av, inner.to_bytes(), self.rng)
        id_ct = sym_encrypt(cred.k_va, cred.id, self.rng, ledger=self.ledger)
        return RelayBody(id_ct, outer).to_bytes()

    def on_relay(self, body):
        """Strip the voter's exponent: ``Y^ab`` in, ``Y^b`` out."""
        if self.session is None:
            raise StateError("no exchange in progress")
        cred = self.credential
        msg = RelayBody.from_bytes(body)
        if sym_decrypt(cred.k_va, msg.id_ct) != cred.id:
            raise StateError("relay addressed to another identity")
        inner = EnkMessage.from_bytes(unwrap_layer(cred.p_av, msg.payload), self.params)
        reply = self.session.unblind(inner, self.rng)
        id_ct = sym_encrypt(cred.k_va, cred.id, self.rng, ledger=self.ledger)
        return RelayBody(id_ct, wrap_layer(cred.p_av, reply.to_bytes(), self.rng)).to_bytes()

    def on_announce(self, ids):
        self.announcement = tuple(ids)
        return self.credential.id in self.announcement

    def rekey(self, new_id, new_p_av):
        self.credential.id = new_id
        self.credential.p_av = new_p_av
        self.session = None

    def verify(self, board):
        if self.package is None:
            raise StateError("no ballot to look for")
        return verify_package(self.package, board)


# --- administrator -----------------------------------------------------------


@dataclass(frozen=True)
class AuthResult:
    accepted: bool
    entry: int | None = None
    reason: str | None = None


@dataclass(frozen=True)
class AuthClosure:
    """Announced list of authenticated IDs plus roster IDs that never showed."""

    authenticated: tuple
    missing: tuple


class _Hop(str, enum.Enum):
    AWAIT_COUNTER = "await_counter"
    AWAIT_VOTER = "await_voter"
    DONE = "done"


class Administrator:
    """``shuffle_rng`` drives substitution, fresh tokens and revote passwords.

    Keeping it apart from the nonce stream makes the published board
    independent of how relay hops happened to interleave.
    """

    def __init__(self, credential, params, rng=None, *, ledger=None, shuffle_rng=None):
        self.credential = credential
        self.params = params
        self.rng = rng or nt.default_rng()
        self.shuffle_rng = shuffle_rng or self.rng
        self.ledger = ledger if ledger is not None else NonceLedger()
        self.auth_table = AuthTable()
        self.substitution = None
        self.round = 1
        self._round_ids = set(credential.roster)
        self._issued = set(credential.roster)
        self._retired = set()
        self._held = {}
        self._hops = {}
        self._auth_open = True

    # Phase II

    def authenticate(self, body):
        if not self._auth_open:
            return AuthResult(False, reason="closed")
        try:
            msg = RelayBody.from_bytes(body)
            voter_id = sym_decrypt(self.credential.k_va, msg.id_ct)
        except (FormatError, AuthFailError):
            return AuthResult(False, reason="tampered")
        # an identity already in the table is refused, never re-delivered
        if voter_id in self.auth_table:
            return AuthResult(False, reason="duplicate")
        if voter_id not in self._round_ids:
            return AuthResult(False, reason="ineligible")
        index, _ = self.credential.roster[voter_id]
        entry = self.auth_table.add(voter_id, index)
        self._held[voter_id] = msg.payload
        return AuthResult(True, entry=entry.entry)

    def close_authentication(self):
        self._auth_open = False
        done = [e.id for e in self.auth_table if e.id in self._round_ids]
        missing = sorted(
            (i for i in self._round_ids if i not in self.auth_table),
            key=lambda i: self.credential.roster[i][0],
        )
        return AuthClosure(tuple(done), tuple(missing))

    # Phase III

    def substitute(self, permutation=None):
        """Assign each authenticated voter a delivery slot and a fresh token.

        Voters are ordered by roster index before permuting so the outcome
        does not depend on arrival order. ``permutation[k]`` is the 1-based
        slot of the k-th voter in that order.
        """
        if self._auth_open:
            raise StateError("authentication is still open")
        voters = sorted(
            (e for e in self.auth_table if e.id in self._round_ids and e.id in self._held),
            key=lambda e: e.voter,
        )
        n = len(voters)
        if permutation is None:
            slots = list(range(1, n + 1))
            for i in range(n - 1, 0, -1):
                k = nt.randbelow(self.shuffle_rng, i + 1)
                slots[i], slots[k] = slots[k], slots[i]
        else:
            slots = list(permutation)
            if sorted(slots) != list(range(1, n + 1)):
                raise DomainError("permutation must cover slots 1..n")
        rows = []
        for entry, slot in zip(voters, slots):
            token = _fresh_token(self.shuffle_rng, self._issued)
            self._issued.add(token)
            rows.append(Substitution(entry.id, slot, token))
        self.substitution = SubstitutionTable(rows)
        self._hops = {}
        return self.substitution

    def announce_to_counter(self):
        if self.substitution is None:
            raise StateError("substitution not performed")
        ids = b"".join(r.replaced for r in self.substitution)
        return sym_encrypt(self.credential.k_ac, ids, self.rng, ledger=self.ledger)

    def _p_av(self, voter_id):
        return self.credential.roster[voter_id][1]

    def begin_round(self, entry):
        """Hop 1, A -> C: ``(E*_Kac[ID_j], E_Pac[E_Pvc[Y^a]])``."""
        row = self.substitution.rows[entry - 1]
        inner = unwrap_layer(self._p_av(row.original), self._held[row.original])
        self._hops[row.replaced] = _Hop.AWAIT_COUNTER
        id_ct = sym_encrypt(self.credential.k_ac, row.replaced, self.rng, ledger=self.ledger)
        return RelayBody(id_ct, wrap_layer(self.credential.p_ac, inner, self.rng)).to_bytes()

    def on_counter_reply(self, body):
        """Hop 2 in, hop 3 out: re-key ``Y^ab`` from ``P_ac`` to ``P_av_i``.

        Returns ``(voter index, body for the voter)``.
        """
        msg = RelayBody.from_bytes(body)
        replaced = sym_decrypt(self.credential.k_ac, msg.id_ct)
        row = self.substitution.by_replaced(replaced) if self.substitution else None
        if row is None or self._hops.get(replaced) is not _Hop.AWAIT_COUNTER:
            raise StateError("unexpected counter reply")
        inner = unwrap_layer(self.credential.p_ac, msg.payload)
        self._hops[replaced] = _Hop.AWAIT_VOTER
        index = self.credential.roster[row.original][0]
        id_ct = sym_encrypt(self.credential.k_va, row.original, self.rng, ledger=self.ledger)
        out = RelayBody(id_ct, wrap_layer(self._p_av(row.original), inner, self.rng))
        return index, out.to_bytes()

    def on_voter_reply(self, body):
        """Hop 4 in, hop 5 out: re-key ``Y^b`` from ``P_av_i`` back to ``P_ac``."""
        msg = RelayBody.from_bytes(body)
        voter_id = sym_decrypt(self.credential.k_va, msg.id_ct)
        try:
            row = self.substitution.by_original(voter_id)
        except (KeyError, AttributeError):
            raise StateError("reply from a voter with no delivery slot") from None
        if self._hops.get(row.replaced) is not _Hop.AWAIT_VOTER:
            raise StateError("unexpected voter reply")
        inner = unwrap_layer(self._p_av(voter_id), msg.payload)
        self._hops[row.replaced] = _Hop.DONE
        id_ct = sym_encrypt(self.credential.k_ac, row.replaced, self.rng, ledger=self.ledger)
        return RelayBody(id_ct, wrap_layer(self.credential.p_ac, inner, self.rng)).to_bytes()

    # Phase IV

    def audit(self, board):
        """Rows whose ``h_Kva(B || S)`` does not verify."""
        rows = board.rows if isinstance(board, (BulletinBoard, PublishedBoard)) else board
        return [r for r in rows if not mac_verify(self.credential.k_va, r.ballot + r.verif, r.tag_va)]

    def revote(self, failed_ids, password_bits=None):
        """Issue fresh ``(ID'_j, P'_av_i)`` to voters whose ballots failed.

        Returns ``{voter index: (new id, new password)}`` for out-of-band
        delivery and reopens authentication for just those voters.
        """
        if not failed_ids:
            raise StateError("no failed voters to revote")
        if self.substitution is None:
            raise StateError("no delivery round to revote from")
        issued = {}
        new_round = set()
        for replaced in failed_ids:
            row = self.substitution.by_replaced(replaced)
            if row is None:
                raise StateError(f"unknown replaced id {replaced.hex()}")
            index, old_pw = self.credential.roster.pop(row.original)
            self._retired.add(row.original)
            bits = password_bits or old_pw.bits
            new_id = _fresh_token(self.shuffle_rng, self._issued)
            self._issued.add(new_id)
            new_pw = Password.generate(self.shuffle_rng, bits)
            self.credential.roster[new_id] = (index, new_pw)
            issued[index] = (new_id, new_pw)
            new_round.add(new_id)
        self.round += 1
        self._round_ids = new_round
        self._held = {}
        self._auth_open = True
        return dict(sorted(issued.items()))


# --- counter -----------------------------------------------------------------


@dataclass(frozen=True)
class Validation:
    valid: bool
    reason: str | None = None
    ballot: bytes | None = None
    verif: bytes | None = None


class _Round(str, enum.Enum):
    EXPECTED = "expected"
    IN_PROGRESS = "in_progress"
    VALID = "valid"
    FAILED = "failed"


@dataclass
class _RoundState:
    status: _Round = _Round.EXPECTED
    session: EnkSession | None = None
    reason: str | None = None


@dataclass(frozen=True)
class Publication:
    board: BulletinBoard
    tally: dict
    failed_ids: tuple = field(default=())


class Counter:
    def __init__(self, credential, candidates, params, rng=None, *, ledger=None):
        self.credential = credential
        self.candidates = candidates
        self.params = params
        self.rng = rng or nt.default_rng()
        self.ledger = ledger if ledger is not None else NonceLedger()
        self.board = BulletinBoard(candidates)
        self._rounds = {}
        self._order = []

    def on_announce(self, body):
        ids = sym_decrypt(self.credential.k_ac, body)
        if len(ids) % ID_BYTES:
            raise FormatError("announcement is not a list of IDs")
        if self.board.status is BoardStatus.CLOSED:
            self.board.reopen()
        self._rounds = {}
        self._order = [ids[i : i + ID_BYTES] for i in range(0, len(ids), ID_BYTES)]
        for replaced in self._order:
            self._rounds[replaced] = _RoundState()
        return len(self._order)

    def _fail(self, replaced, reason):
        state = self._rounds.get(replaced)
        if state is not None and state.status in (_Round.EXPECTED, _Round.IN_PROGRESS):
            state.status = _Round.FAILED
            state.reason = reason

    def fail(self, replaced, reason):
        self._fail(replaced, reason)

    def on_relay(self, body):
        """Hop 1 in, hop 2 out: apply ``b`` under the inner ``P_vc`` layer."""
        msg = RelayBody.from_bytes(body)
        replaced = sym_decrypt(self.credential.k_ac, msg.id_ct)
        state = self._rounds.get(replaced)
        if state is None:
            raise StateError("unknown replaced id")
        if state.status is not _Round.EXPECTED:
            raise StateError("replaced id already delivered")
        state.status = _Round.IN_PROGRESS
        try:
            inner = EnkMessage.from_bytes(unwrap_layer(self.credential.p_ac, msg.payload), self.params)
            state.session = EnkSession.new(
                Role.RESPONDER, self.params, self.credential.p_vc, self.rng, qr=self.params.is_safe
            )
            reply = state.session.blind(inner, self.rng)
        except (FormatError, StateError, DomainError) as exc:
            self._fail(replaced, f"hop1: {exc}")
            raise
        id_ct = sym_encrypt(self.credential.k_ac, replaced, self.rng, ledger=self.ledger)
        return RelayBody(id_ct, wrap_layer(self.credential.p_ac, reply.to_bytes(), self.rng)).to_bytes()

    def on_final(self, body):
        """Hop 5 in: strip ``b``, decode ``Y`` and validate it."""
        msg = RelayBody.from_bytes(body)
        replaced = sym_decrypt(self.credential.k_ac, msg.id_ct)
        state = self._rounds.get(replaced)
        if state is None or state.status is not _Round.IN_PROGRESS:
            raise StateError("final hop for a round that is not in progress")
        try:
            inner = EnkMessage.from_bytes(unwrap_layer(self.credential.p_ac, msg.payload), self.params)
            y = decode_payload(state.session.finish(inner), self.params)
        except (FormatError, StateError, DomainError, DecodeError) as exc:
            self._fail(replaced, f"final: {exc}")
            return Validation(False, reason="undecodable")
        return self.validate(replaced, y)

    def validate(self, replaced, y):
        """Check ``h_Kvc``, then uniqueness of ``S``, then ``B`` in the set."""
        result = self._check(y)
        state = self._rounds.get(replaced)
        if state is not None:
            if result.valid:
                state.status = _Round.VALID
            else:
                self._fail(replaced, result.reason)
        return result

    def _check(self, y):
        if self.board.status is not BoardStatus.OPEN:
            return Validation(False, reason="board_closed")
        try:
            package = BallotPackage.from_y(y, self.candidates.code_bytes)
        except FormatError:
            return Validation(False, reason="malformed")
        if not mac_verify(self.credential.k_vc, package.x, package.tag_vc):
            return Validation(False, reason="mac_mismatch")
        if self.board.has_verif(package.verif):
            return Validation(False, reason="duplicate_verification_string")
        if package.ballot not in self.candidates:
            return Validation(False, reason="ballot_not_in_set")
        self.board.append(package.ballot, package.verif, package.tag_va)
        return Validation(True, ballot=package.ballot, verif=package.verif)

    def expire_pending(self, reason="timeout"):
        expired = []
        for replaced in self._order:
            state = self._rounds[replaced]
            if state.status in (_Round.EXPECTED, _Round.IN_PROGRESS):
                self._fail(replaced, reason)
                expired.append(replaced)
        return expired

    def round_status(self, replaced):
        state = self._rounds.get(replaced)
        return None if state is None else (state.status.value, state.reason)

    @property
    def outstanding(self):
        return [r for r in self._order if self._rounds[r].status in (_Round.EXPECTED, _Round.IN_PROGRESS)]

    def publish(self):
        if self.outstanding:
            raise StateError(f"{len(self.outstanding)} relay rounds unresolved")
        failed = tuple(r for r in self._order if self._rounds[r].status is _Round.FAILED)
        self.board.close(failed)
        return Publication(self.board, self.board.tally(), failed)
