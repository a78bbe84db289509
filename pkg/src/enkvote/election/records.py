"""Data carried between the voter, administrator and counter roles.

Candidate set, per-party credentials, the ballot package ``Y_i``, the
administrator's authentication and substitution tables, and the counter's
bulletin board.
"""

from __future__ import annotations

import enum
from collections import Counter as _Multiset
from dataclasses import dataclass, field

from .. import numtheory as nt
from ..crypto import MAC_WIRE_BYTES, MacTag, Password, SymmetricKey
from ..errors import ConfigError, FormatError, StateError

ID_BYTES = 16
VERIF_BYTES = 16
DEFAULT_CODE_BITS = 64
COLLISION_EXPONENT = 40


@dataclass(frozen=True)
class CandidateSet:
    labels: tuple
    codes: tuple
    s_bits: int = DEFAULT_CODE_BITS

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ConfigError("an election needs at least two candidates")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("duplicate candidate labels")
        for label in self.labels:
            if not label or any(ch in label for ch in "=,\n\r") or label != label.strip():
                raise ConfigError(f"candidate label {label!r} is not exportable")
        if self.s_bits % 8:
            raise ConfigError("candidate code width must be whole octets")
        # a random s-bit string hits the set with probability m / 2**s
        if len(self.labels) >= 1 << (self.s_bits - COLLISION_EXPONENT):
            raise ConfigError("code width too small for a negligible collision rate")
        if len(self.codes) != len(self.labels) or len(set(self.codes)) != len(self.codes):
            raise ConfigError("candidate codes must be distinct, one per label")
        if any(len(c) != self.s_bits // 8 for c in self.codes):
            raise ConfigError("candidate code has the wrong width")

    @classmethod
    def generate(cls, labels, rng=None, s_bits=DEFAULT_CODE_BITS):
        rng = rng or nt.default_rng()
        codes = []
        while len(codes) < len(labels):
            code = nt.randbytes(rng, s_bits // 8)
            if code not in codes:
                codes.append(code)
        return cls(tuple(labels), tuple(codes), s_bits)

    @property
    def m(self):
        return len(self.labels)

    @property
    def code_bytes(self):
        return self.s_bits // 8

    def code_for(self, choice):
        """Code of candidate ``choice`` (1-based, as on the ballot)."""
        return self.codes[choice - 1]

    def label_for(self, code):
        return self.labels[self.codes.index(code)]

    def __contains__(self, code):
        return code in self.codes


@dataclass(repr=False)
class VoterCredential:
    index: int
    id: bytes
    p_av: Password
    k_va: SymmetricKey
    k_vc: SymmetricKey
    p_vc: Password

    def __repr__(self):
        return f"VoterCredential(index={self.index}, id={self.id.hex()})"


@dataclass(repr=False)
class AdminCredential:
    k_va: SymmetricKey
    k_ac: SymmetricKey
    p_ac: Password
    roster: dict  # voter id -> (voter index, P_av_i)

    def __repr__(self):
        return f"AdminCredential(voters={len(self.roster)})"


@dataclass(repr=False)
class CounterCredential:
    k_ac: SymmetricKey
    p_ac: Password
    k_vc: SymmetricKey
    p_vc: Password

    def __repr__(self):
        return "CounterCredential(<redacted>)"


@dataclass(frozen=True)
class BallotPackage:
    """``X = B || S || h_Kva(B || S)`` and ``Y = X || h_Kvc(X)``."""

    ballot: bytes
    verif: bytes
    tag_va: MacTag
    tag_vc: MacTag

    @property
    def ballot_and_verif(self):
        return self.ballot + self.verif

    @property
    def x(self):
        return self.ballot + self.verif + self.tag_va.to_bytes()

    @property
    def y(self):
        return self.x + self.tag_vc.to_bytes()

    @classmethod
    def from_y(cls, y, code_bytes):
        if len(y) != package_length(code_bytes):
            raise FormatError("ballot package has the wrong length")
        b = y[:code_bytes]
        s = y[code_bytes : code_bytes + VERIF_BYTES]
        off = code_bytes + VERIF_BYTES
        tag_va = MacTag.from_bytes(y[off : off + MAC_WIRE_BYTES])
        tag_vc = MacTag.from_bytes(y[off + MAC_WIRE_BYTES :])
        return cls(b, s, tag_va, tag_vc)


def package_length(code_bytes):
    return code_bytes + VERIF_BYTES + 2 * MAC_WIRE_BYTES


@dataclass(frozen=True)
class AuthEntry:
    entry: int
    id: bytes
    voter: int


class AuthTable:
    """Voters that passed authentication, numbered from 1 in arrival order."""

    def __init__(self):
        self._entries = []
        self._by_id = {}

    def add(self, voter_id, voter):
        if voter_id in self._by_id:
            raise StateError("identity already authenticated")
        entry = AuthEntry(len(self._entries) + 1, voter_id, voter)
        self._entries.append(entry)
        self._by_id[voter_id] = entry
        return entry

    def __contains__(self, voter_id):
        return voter_id in self._by_id

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def get(self, voter_id):
        return self._by_id.get(voter_id)


@dataclass(frozen=True)
class Substitution:
    original: bytes
    entry: int
    replaced: bytes


class SubstitutionTable:
    """Private bijection ``ID_i -> (j, ID_j)``, held only by the administrator."""

    def __init__(self, rows):
        self.rows = tuple(sorted(rows, key=lambda r: r.entry))
        self._by_original = {r.original: r for r in self.rows}
        self._by_replaced = {r.replaced: r for r in self.rows}
        if len(self._by_original) != len(self.rows) or len(self._by_replaced) != len(self.rows):
            raise StateError("substitution must be a bijection")
        if [r.entry for r in self.rows] != list(range(1, len(self.rows) + 1)):
            raise StateError("delivery entries must run 1..n")

    def by_original(self, voter_id):
        return self._by_original[voter_id]

    def by_replaced(self, replaced_id):
        return self._by_replaced.get(replaced_id)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class BoardRow:
    entry: int
    ballot: bytes
    verif: bytes
    tag_va: MacTag

    def to_line(self):
        return f"{self.entry},{self.ballot.hex()},{self.verif.hex()},{self.tag_va.to_bytes().hex()}"

    @classmethod
    def from_line(cls, line):
        try:
            entry, b, s, tag = line.split(",")
            return cls(int(entry), bytes.fromhex(b), bytes.fromhex(s), MacTag.from_bytes(bytes.fromhex(tag)))
        except ValueError as exc:
            raise FormatError(f"bad board row {line!r}: {exc}") from None


class BoardStatus(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


@dataclass
class BulletinBoard:
    """The counter's append-only record of valid ballots.

    Rows, tallies and exports stay sealed while the board is open so no
    intermediate result can leak before publication.
    """

    candidates: CandidateSet
    _rows: list = field(default_factory=list)
    status: BoardStatus = BoardStatus.OPEN
    failed_ids: list = field(default_factory=list)

    def append(self, ballot, verif, tag_va):
        if self.status is not BoardStatus.OPEN:
            raise StateError("board is closed")
        if self.has_verif(verif):
            raise StateError("verification string already on the board")
        row = BoardRow(len(self._rows) + 1, ballot, verif, tag_va)
        self._rows.append(row)
        return row

    def has_verif(self, verif):
        return any(r.verif == verif for r in self._rows)

    def close(self, failed_ids=()):
        self.status = BoardStatus.CLOSED
        self.failed_ids = list(failed_ids)

    def reopen(self):
        # revote rounds append below the rows already published
        self.status = BoardStatus.OPEN
        self.failed_ids = []

    def _sealed(self):
        if self.status is BoardStatus.OPEN:
            raise StateError("board is open; results are sealed until publication")

    @property
    def rows(self):
        self._sealed()
        return tuple(self._rows)

    def __len__(self):
        self._sealed()
        return len(self._rows)

    def tally(self):
        self._sealed()
        counts = _Multiset(r.ballot for r in self._rows)
        return {label: counts.get(code, 0) for label, code in zip(self.candidates.labels, self.candidates.codes)}

    def find(self, verif):
        self._sealed()
        for row in self._rows:
            if row.verif == verif:
                return row
        return None

    def export(self):
        """Bit-exact text export: rows, then TALLY lines, then FAILED lines."""
        self._sealed()
        lines = [r.to_line() for r in self._rows]
        lines += [f"TALLY {label}={n}" for label, n in self.tally().items()]
        lines += [f"FAILED {i.hex()}" for i in self.failed_ids]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PublishedBoard:
    """Parsed export usable without the candidate set (audit, verify)."""

    rows: tuple
    tally: dict
    failed_ids: tuple

    @classmethod
    def parse(cls, text):
        rows, tally, failed = [], {}, []
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("TALLY "):
                label, _, n = line[len("TALLY "):].rpartition("=")
                tally[label] = int(n)
            elif line.startswith("FAILED "):
                failed.append(bytes.fromhex(line[len("FAILED "):]))
            else:
                rows.append(BoardRow.from_line(line))
        return cls(tuple(rows), tally, tuple(failed))

    def find(self, verif):
        for row in self.rows:
            if row.verif == verif:
                return row
        return None
