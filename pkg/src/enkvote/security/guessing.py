"""Desk-scale password guessing against recorded ENK transcripts.

For a candidate password the attacker unwraps the three passes of a session
to ``X1 = M^a``, ``X2 = M^ab`` and ``X3 = M^b``, solves ``X3^a' = X2`` and
``X1^b' = X2`` with a discrete-log oracle, and accepts when
``X1^(1/a') == X3^(1/b')``.

That check on a single session is weak: whenever unit solutions exist the two
reconstructions agree identically, so a wrong password survives whenever the
three unwrapped values happen to share a multiplicative order (about 1/4 of
the time in a safe-prime group). The attacker therefore records several
sessions run under the same password and accepts only a candidate that
passes all of them.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass
from functools import lru_cache

from .. import numtheory as nt
from ..crypto import Password, ep_unwrap
from ..enk import run_exchange
from ..errors import DomainError, OracleTooLargeError

ORACLE_LIMIT = 1 << 32
MAX_SPACE_BITS = 16
DEFAULT_SESSIONS = 16
DEMO_GROUP_START = 1 << 20


class DiscreteLogOracle:
    """Exhaustive discrete logs in a small group.

    One brute-force pass over ``g^0 .. g^(q-2)`` fills a lookup table, after
    which every log is a single index.
    """

    def __init__(self, params):
        if params.q >= ORACLE_LIMIT:
            raise OracleTooLargeError(f"q has {params.bit_length} bits; the oracle stops at 32")
        self.params = params
        self.order = params.q_minus_1
        self.generator = self._generator()
        table = array("L", bytes(array("L").itemsize * params.q))
        x = 1
        for k in range(self.order):
            table[x] = k
            x = x * self.generator % params.q
        self._log = table

    def _generator(self):
        q, n = self.params.q, self.order
        factors = _prime_factors(n)
        for g in range(2, q):
            if all(pow(g, n // f, q) != 1 for f in factors):
                return g
        raise DomainError("no generator found")

    def log(self, x):
        if not 0 < x < self.params.q:
            return None
        return self._log[x]

    def solve(self, base, target):
        """Smallest exponent ``e`` coprime to ``q-1`` with ``base^e = target``."""
        lb, lt = self.log(base), self.log(target)
        if lb is None or lt is None:
            return None
        n = self.order
        d = math.gcd(lb, n)
        if lt % d:
            return None
        step = n // d
        e0 = (lt // d) * pow(lb // d, -1, step) % step if step > 1 else 0
        for k in range(d):
            e = e0 + k * step
            if math.gcd(e, n) == 1:
                return e
        return None


def _prime_factors(n):
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


@lru_cache(maxsize=4)
def oracle_for(params):
    return DiscreteLogOracle(params)


def demo_group(start=DEMO_GROUP_START):
    return nt.GroupParams(nt.next_safe_prime(start), nt.Profile.SAFE_PRIME)


@dataclass(frozen=True)
class Transcript:
    """Wire messages of ``len(sessions)`` ENK exchanges under one password."""

    params: nt.GroupParams
    sessions: tuple
    qr: bool = False


def record_transcript(params, password, sessions=DEFAULT_SESSIONS, rng=None, *, qr=False):
    rng = rng or nt.default_rng()
    recorded = []
    for _ in range(sessions):
        message = 2 + nt.randbelow(rng, params.q - 3)
        passes = []
        run_exchange(params, message, password, rng=rng, qr=qr, transcript=passes)
        recorded.append(tuple(m.ct for m in passes))
    return Transcript(params, tuple(recorded), qr)


def session_consistent(candidate, session, params, oracle, *, qr=False):
    """The three-step check on one recorded session."""
    x1, x2, x3 = (ep_unwrap(candidate, ct, params, qr=qr) for ct in session)
    a = oracle.solve(x3, x2)
    b = oracle.solve(x1, x2)
    if a is None or b is None:
        return False
    n = params.q_minus_1
    m_from_a = pow(x1, pow(a, -1, n), params.q)
    m_from_b = pow(x3, pow(b, -1, n), params.q)
    return m_from_a == m_from_b


def consistent(candidate, transcript, oracle):
    return all(
        session_consistent(candidate, s, transcript.params, oracle, qr=transcript.qr) for s in transcript.sessions
    )


@dataclass(frozen=True)
class GuessResult:
    password: Password | None
    guesses: int
    false_accepts: int = 0


def attack_password_guess(transcript, password_space_bits, dl_oracle=None, rng=None, *, exhaustive=False):
    """Try candidates in random order until one passes every session.

    With ``exhaustive`` the sweep continues over the whole space and counts
    every wrong candidate that would have been accepted.
    """
    if not 1 <= password_space_bits <= MAX_SPACE_BITS:
        raise DomainError(f"password space must be 1..{MAX_SPACE_BITS} bits")
    if transcript.params.q >= ORACLE_LIMIT:
        raise OracleTooLargeError("transcript group is too large for a brute-force oracle")
    oracle = dl_oracle or oracle_for(transcript.params)
    rng = rng or nt.default_rng()
    order = list(range(1 << password_space_bits))
    for i in range(len(order) - 1, 0, -1):
        k = nt.randbelow(rng, i + 1)
        order[i], order[k] = order[k], order[i]
    found, found_at, false_accepts = None, len(order), 0
    for guesses, value in enumerate(order, 1):
        candidate = Password.from_int(value, password_space_bits)
        if not consistent(candidate, transcript, oracle):
            continue
        if found is None:
            found, found_at = candidate, guesses
            if not exhaustive:
                break
        else:
            false_accepts += 1
    return GuessResult(found, found_at, false_accepts)
