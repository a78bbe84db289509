"""Modular arithmetic over Z_q^* for the no-key exponentiation cipher.

Everything the three-pass algebra needs lives here: the group description
(``GroupParams``), modular exponentiation, inversion modulo ``q - 1``,
blinding-exponent sampling and prime generation.
"""

from __future__ import annotations

import enum
import math
import secrets
from dataclasses import dataclass, field

import gmpy2

from .errors import DomainError, EntropyError, NotInvertibleError, SearchTimeoutError

MR_ROUNDS = 40
MIN_GROUP_BITS = 64
MIN_TOY_BITS = 5
REJECTION_CAP = 10**6


def _small_primes(limit):
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for i in range(2, math.isqrt(limit) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(range(i * i, limit, i)))
    return [i for i in range(limit) if sieve[i]]


SMALL_PRIMES = tuple(_small_primes(2000))


def default_rng():
    return secrets.SystemRandom()


def randbelow(rng, n):
    """Uniform integer in [0, n) drawn from ``rng``; wraps entropy failures."""
    if n <= 0:
        raise DomainError("randbelow needs a positive bound")
    try:
        return rng.randrange(n)
    except (OSError, NotImplementedError) as exc:
        raise EntropyError(f"entropy source failed: {exc}") from exc


def randbytes(rng, n):
    if n == 0:
        return b""
    try:
        return rng.getrandbits(8 * n).to_bytes(n, "big")
    except (OSError, NotImplementedError) as exc:
        raise EntropyError(f"entropy source failed: {exc}") from exc


def is_probable_prime(n, rounds=MR_ROUNDS, rng=None):
    """Miller-Rabin with ``rounds`` random bases after trial division.

    With 40 rounds the error probability for a composite is below 4**-40.
    """
    if n < 2:
        return False
    for p in SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    rng = rng or default_rng()
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    gn = gmpy2.mpz(n)
    for _ in range(rounds):
        a = 2 + rng.randrange(n - 3)
        x = gmpy2.powmod(a, d, gn)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = gmpy2.powmod(x, 2, gn)
            if x == n - 1:
                break
        else:
            return False
    return True


class Profile(str, enum.Enum):
    SAFE_PRIME = "safe_prime"
    PLAIN_PRIME = "plain_prime"

    @property
    def tag(self):
        return "s" if self is Profile.SAFE_PRIME else "p"

    @classmethod
    def from_tag(cls, tag):
        try:
            return {"s": cls.SAFE_PRIME, "p": cls.PLAIN_PRIME}[tag]
        except KeyError:
            raise DomainError(f"unknown profile tag {tag!r}") from None


@dataclass(frozen=True)
class GroupParams:
    """Prime modulus ``q`` and the constants derived from it.

    ``subgroup_order`` is ``(q-1)/2`` for a safe prime (the order of the
    quadratic-residue subgroup) and ``q-1`` otherwise.
    """

    q: int
    profile: Profile = Profile.SAFE_PRIME
    q_minus_1: int = field(init=False)
    subgroup_order: int = field(init=False)

    def __post_init__(self):
        q = int(self.q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "profile", Profile(self.profile))
        object.__setattr__(self, "q_minus_1", q - 1)
        if self.profile is Profile.SAFE_PRIME:
            object.__setattr__(self, "subgroup_order", (q - 1) // 2)
        else:
            object.__setattr__(self, "subgroup_order", q - 1)

    @classmethod
    def from_prime(cls, q, profile=None, *, check=True):
        """Validate ``q`` and build params; profile is inferred when omitted."""
        if q < 5:
            raise DomainError("modulus must be a prime >= 5")
        if check and not is_probable_prime(q):
            raise DomainError(f"{q} is not prime")
        if profile is None:
            safe = is_probable_prime((q - 1) // 2)
            profile = Profile.SAFE_PRIME if safe else Profile.PLAIN_PRIME
        profile = Profile(profile)
        if profile is Profile.SAFE_PRIME and check and not is_probable_prime((q - 1) // 2):
            raise DomainError(f"{q} is not a safe prime")
        return cls(q, profile)

    @classmethod
    def well_known(cls, name):
        try:
            q = WELL_KNOWN_PRIMES[name]
        except KeyError:
            raise DomainError(f"unknown group {name!r}") from None
        return cls(q, Profile.SAFE_PRIME)

    @property
    def bit_length(self):
        return self.q.bit_length()

    @property
    def is_safe(self):
        return self.profile is Profile.SAFE_PRIME

    def to_text(self):
        return f"{self.profile.tag}:0x{self.q:x}"

    @classmethod
    def from_text(cls, text, *, check=True):
        tag, sep, value = text.strip().partition(":")
        if not sep:
            raise DomainError("group text must look like '<tag>:<modulus>'")
        profile = Profile.from_tag(tag)
        value = value.strip()
        try:
            q = int(value[2:], 16) if value.lower().startswith("0x") else int(value, 10)
        except ValueError:
            raise DomainError(f"bad modulus encoding {value!r}") from None
        if check:
            return cls.from_prime(q, profile)
        return cls(q, profile)


@dataclass(frozen=True, repr=False)
class BlindingExponent:
    e: int
    e_inv: int

    def __repr__(self):
        # exponents are secrets
        return "BlindingExponent(<redacted>)"


def mod_exp(base, exp, params):
    """``base ** exp mod q``. Base must already be reduced into [0, q)."""
    if not 0 <= base < params.q:
        raise DomainError(f"base {base} outside [0, q)")
    if exp < 0:
        raise DomainError("negative exponent")
    return int(gmpy2.powmod(base, exp, params.q))


def mod_inverse(x, modulus):
    if modulus < 2:
        raise DomainError("modulus must be >= 2")
    g = math.gcd(x, modulus)
    if g != 1:
        raise NotInvertibleError(f"gcd({x}, {modulus}) = {g}")
    return pow(x, -1, modulus)


def legendre(x, params):
    """Legendre symbol (x | q) in {-1, 0, 1}."""
    return int(gmpy2.legendre(x % params.q, params.q))


def is_quadratic_residue(x, params):
    return legendre(x, params) == 1


def sample_blinding_exponent(params, rng=None, max_draws=REJECTION_CAP):
    """Draw ``e`` uniformly from the units of Z_{q-1} inside [2, q-2]."""
    rng = rng or default_rng()
    lo, hi = 2, params.q - 2
    if hi < lo:
        raise DomainError("group too small for a blinding exponent")
    for _ in range(max_draws):
        e = lo + randbelow(rng, hi - lo + 1)
        if math.gcd(e, params.q_minus_1) == 1:
            return BlindingExponent(e, mod_inverse(e, params.q_minus_1))
    raise EntropyError(f"no unit exponent after {max_draws} draws")


def _passes_trial_division(n):
    for p in SMALL_PRIMES:
        if n % p == 0:
            return n == p
    return True


def generate_group(bit_length, profile=Profile.SAFE_PRIME, rng=None, *,
                   max_draws=2_000_000, allow_toy=False):
    """Search for a prime of exactly ``bit_length`` bits.

    ``safe_prime`` yields ``q = 2r + 1`` with ``r`` prime. ``allow_toy`` lowers
    the size floor from 64 to 5 bits for exhaustive-oracle tests.
    """
    floor = MIN_TOY_BITS if allow_toy else MIN_GROUP_BITS
    if bit_length < floor:
        raise DomainError(f"bit_length {bit_length} below minimum {floor}")
    profile = Profile(profile)
    rng = rng or default_rng()
    for _ in range(max_draws):
        if profile is Profile.SAFE_PRIME:
            r = randbelow(rng, 1 << (bit_length - 2)) | (1 << (bit_length - 2)) | 1
            q = 2 * r + 1
            if r < 3 or not (_passes_trial_division(r) and _passes_trial_division(q)):
                continue
            if is_probable_prime(r, rng=rng) and is_probable_prime(q, rng=rng):
                return GroupParams(q, profile)
        else:
            q = randbelow(rng, 1 << (bit_length - 1)) | (1 << (bit_length - 1)) | 1
            if not _passes_trial_division(q):
                continue
            if is_probable_prime(q, rng=rng):
                return GroupParams(q, profile)
    raise SearchTimeoutError(f"no {profile.value} of {bit_length} bits in {max_draws} draws")


def next_safe_prime(start):
    """Smallest safe prime >= ``start``; deterministic, for toy groups."""
    q = max(start, 5)
    if q % 2 == 0:
        q += 1
    while not (is_probable_prime(q) and is_probable_prime((q - 1) // 2)):
        q += 2
    return q


# RFC 3526 group 14 and RFC 2409 group 1; both are safe primes.
WELL_KNOWN_PRIMES = {
    "modp2048": int(
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
        "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
        "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
        "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
        "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
        "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF",
        16,
    ),
    "modp768": int(
        "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
        "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
        "4FE1356D6D51C245E485B576625E7EC6F44C42E9A63A3620FFFFFFFFFFFFFFFF",
        16,
    ),
}

PRODUCTION_GROUP = "modp2048"
TEST_GROUP = "modp768"
