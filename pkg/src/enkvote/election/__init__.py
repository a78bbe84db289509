"""Four-phase voting: setup, authentication, anonymous relay, counting."""

from __future__ import annotations

import copy
import random
from dataclasses import dataclass

from .. import numtheory as nt
from ..crypto import DEFAULT_PASSWORD_BITS, NonceLedger, Password, SymmetricKey
from ..errors import AuthFailError, ConfigError, DomainError, FormatError, StateError
from .records import (
    DEFAULT_CODE_BITS,
    ID_BYTES,
    VERIF_BYTES,
    AdminCredential,
    AuthEntry,
    AuthTable,
    BallotPackage,
    BoardRow,
    BoardStatus,
    BulletinBoard,
    CandidateSet,
    CounterCredential,
    PublishedBoard,
    Substitution,
    SubstitutionTable,
    VoterCredential,
    package_length,
)
from .roles import (
    Administrator,
    AuthClosure,
    AuthResult,
    Counter,
    Publication,
    RelayBody,
    Validation,
    Voter,
    VerifyStatus,
    verify_package,
)

__all__ = [
    "DEFAULT_CODE_BITS", "ID_BYTES", "VERIF_BYTES",
    "AdminCredential", "Administrator", "AuthClosure", "AuthEntry", "AuthResult", "AuthTable",
    "BallotPackage", "BoardRow", "BoardStatus", "BulletinBoard", "CandidateSet", "Counter",
    "CounterCredential", "ElectionSetup", "ElectionState", "Publication", "PublishedBoard",
    "RelayBody", "Substitution", "SubstitutionTable", "Validation", "Voter", "VoterCredential",
    "VerifyStatus", "admin_audit", "admin_authenticate", "admin_substitute", "counter_publish",
    "counter_validate", "package_length", "party_rng", "relay_round", "revote_round",
    "setup_election", "voter_build_ballot", "voter_submit", "voter_verify",
]

HOPS = ("relay_ac", "relay_ca", "relay_av", "relay_va", "relay_ac_final")


@dataclass(repr=False)
class ElectionSetup:
    """Everything Phase I distributes: the candidate set and one credential per party."""

    params: nt.GroupParams
    candidates: CandidateSet
    voters: list
    admin: AdminCredential
    counter: CounterCredential
    password_bits: int = DEFAULT_PASSWORD_BITS

    def __repr__(self):
        return f"ElectionSetup(n={len(self.voters)}, m={self.candidates.m}, q_bits={self.params.bit_length})"


def setup_election(labels, n_voters, params, rng=None, *, password_bits=DEFAULT_PASSWORD_BITS,
                   s_bits=DEFAULT_CODE_BITS, codes=None):
    if n_voters < 1:
        raise ConfigError("an election needs at least one voter")
    rng = rng or nt.default_rng()
    if codes is None:
        candidates = CandidateSet.generate(labels, rng, s_bits)
    else:
        candidates = CandidateSet(tuple(labels), tuple(codes), s_bits)
    k_va = SymmetricKey.generate("va", rng)
    k_vc = SymmetricKey.generate("vc", rng)
    k_ac = SymmetricKey.generate("ac", rng)
    p_vc = Password.generate(rng, password_bits)
    p_ac = Password.generate(rng, password_bits)

    ids, passwords = set(), set()
    voters = []
    for index in range(1, n_voters + 1):
        while (voter_id := nt.randbytes(rng, ID_BYTES)) in ids:
            pass
        while (p_av := Password.generate(rng, password_bits)).value in passwords:
            pass
        ids.add(voter_id)
        passwords.add(p_av.value)
        voters.append(VoterCredential(index, voter_id, p_av, k_va, k_vc, p_vc))
    roster = {v.id: (v.index, v.p_av) for v in voters}
    admin = AdminCredential(k_va, k_ac, p_ac, roster)
    counter = CounterCredential(k_ac, p_ac, k_vc, p_vc)
    return ElectionSetup(params, candidates, voters, admin, counter, password_bits)


def party_rng(seed, party):
    """Independent deterministic stream per party, or the OS source when unseeded."""
    if seed is None:
        return nt.default_rng()
    return random.Random(f"{seed}:{party}")


@dataclass
class ElectionState:
    """Live role objects for one election. Each party owns copies of its credentials."""

    setup: ElectionSetup
    voters: dict
    admin: Administrator
    counter: Counter

    @classmethod
    def from_setup(cls, setup, seed=None):
        setup = copy.deepcopy(setup)
        voters = {
            cred.index: Voter(cred, setup.candidates, setup.params, party_rng(seed, f"voter{cred.index}"),
                              ledger=NonceLedger())
            for cred in setup.voters
        }
        admin = Administrator(setup.admin, setup.params, party_rng(seed, "admin"), ledger=NonceLedger(),
                              shuffle_rng=party_rng(seed, "admin-shuffle"))
        counter = Counter(setup.counter, setup.candidates, setup.params, party_rng(seed, "counter"),
                          ledger=NonceLedger())
        return cls(setup, voters, admin, counter)


# --- operation-level entry points ---------------------------------------------


def voter_build_ballot(voter, choice):
    return voter.build_ballot(choice)


def voter_submit(voter, package=None):
    return voter.submit(package)


def admin_authenticate(admin, body):
    return admin.authenticate(body)


def admin_substitute(admin, permutation=None):
    return admin.substitute(permutation)


def counter_validate(counter, replaced_id, y):
    return counter.validate(replaced_id, y)


def counter_publish(counter):
    return counter.publish()


def voter_verify(package, board):
    return verify_package(package, board)


def admin_audit(admin, board):
    return admin.audit(board)


def revote_round(admin, failed_ids, password_bits=None):
    return admin.revote(failed_ids, password_bits)


_HOP_ERRORS = (FormatError, AuthFailError, StateError, DomainError)


def relay_round(admin, counter, voters, entry, *, tamper=None):
    """Run the five relay messages for delivery slot ``entry`` in-process.

    ``voters`` maps voter index to ``Voter`` (a single ``Voter`` is accepted).
    ``tamper(hop, body)`` may rewrite any hop in flight. A failing hop marks
    the round failed at the counter and yields an invalid ``Validation``.
    """
    if isinstance(voters, Voter):
        voters = {voters.index: voters}
    replaced = admin.substitution.rows[entry - 1].replaced
    tamper = tamper or (lambda hop, body: body)
    try:
        body = tamper("relay_ac", admin.begin_round(entry))
        body = tamper("relay_ca", counter.on_relay(body))
        index, body = admin.on_counter_reply(body)
        body = tamper("relay_av", body)
        body = tamper("relay_va", voters[index].on_relay(body))
        body = tamper("relay_ac_final", admin.on_voter_reply(body))
        return counter.on_final(body)
    except _HOP_ERRORS as exc:
        reason = f"{type(exc).__name__}: {exc}"
        counter.fail(replaced, reason)
        return Validation(False, reason=reason)
