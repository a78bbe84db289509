"""Physical-limits cost model for password guessing against ENK.

Every quantity is an exact ``Fraction``: per-guess time is serial gate count
times gate time, and the guess budget is ``floor(duration * machines / per-guess
time)``. Nothing here touches floating point, so comparisons with the
published constants are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import DomainError

ATTACK_DURATION_S = 2**32
SECONDS_PER_YEAR = Fraction(36525 * 24 * 3600, 100)
EARTH_RADIUS_M = 6370 * 10**3
# Archimedes-style rational brackets around pi
PI_LOWER = Fraction(333, 106)
PI_UPPER = Fraction(355, 113)
MACHINE_CAP = 2**49

GENERIC_GATE_TIME = Fraction(1, 10**14)
GENERIC_SERIAL_GATES = 10**4
GENERIC_MARGIN = 2
ION_GATE_TIME = Fraction(285, 10**6)
ION_SERIAL_GATES = 10**2
ION_MARGIN = 1


def _fraction(value, name):
    try:
        value = Fraction(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a number") from None
    if value <= 0:
        raise DomainError(f"{name} must be strictly positive")
    return value


@dataclass(frozen=True)
class PhysicalParams:
    gate_time_s: Fraction
    serial_gates: Fraction
    attack_duration_s: Fraction = Fraction(ATTACK_DURATION_S)
    computer_count: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("gate_time_s", "serial_gates", "attack_duration_s", "computer_count"):
            object.__setattr__(self, name, _fraction(getattr(self, name), name))


@dataclass(frozen=True)
class CostModelReport:
    profile: str
    params: PhysicalParams
    per_guess_time_s: Fraction
    guesses_within_budget: int
    min_password_bits: int
    margin: int
    notes: tuple = field(default=())

    @property
    def recommended_bits(self):
        return self.min_password_bits + self.margin


def per_guess_time(params):
    return params.serial_gates * params.gate_time_s


def guess_budget(params):
    return math.floor(params.attack_duration_s * params.computer_count / per_guess_time(params))


def _bits_above(x):
    """Smallest k >= 0 with 2**k >= x, for a positive rational x."""
    if x <= 1:
        return 0
    k = (x.numerator // x.denominator).bit_length() - 1
    while Fraction(2**k) < x:
        k += 1
    return k


def min_password_bits(attack_duration_s, per_guess_time_s, computer_count):
    """Bits needed so the keyspace covers every guess an attacker can make.

    ``ceil(log2(duration * machines / per-guess time))`` in exact arithmetic.
    """
    duration = _fraction(attack_duration_s, "attack_duration_s")
    t = _fraction(per_guess_time_s, "per_guess_time_s")
    machines = _fraction(computer_count, "computer_count")
    return _bits_above(duration * machines / t)


def _report(profile, params, margin, notes):
    dt = per_guess_time(params)
    return CostModelReport(
        profile,
        params,
        dt,
        guess_budget(params),
        min_password_bits(params.attack_duration_s, dt, params.computer_count),
        margin,
        tuple(notes),
    )


def _duration_note(params):
    years = params.attack_duration_s / SECONDS_PER_YEAR
    return f"attack duration 2^32 s is about {float(years):.1f} Julian years, not 100"


def generic_gate_bound(params=None):
    params = params or PhysicalParams(GENERIC_GATE_TIME, GENERIC_SERIAL_GATES)
    notes = [
        _duration_note(params),
        "the bound gives |P| >= 66 while 68 bits is named as enough; the 2-bit margin is reported, not explained",
    ]
    return _report("generic", params, GENERIC_MARGIN, notes)


def planet_area_bounds():
    """``4 pi r^2`` for the Earth, bracketed with rational bounds on pi."""
    r2 = EARTH_RADIUS_M**2
    return 4 * PI_LOWER * r2, 4 * PI_UPPER * r2


def ion_trap_bound(params=None):
    params = params or PhysicalParams(ION_GATE_TIME, ION_SERIAL_GATES, computer_count=MACHINE_CAP)
    if params.computer_count > MACHINE_CAP:
        raise DomainError("more machines than one per square metre of the planet allows")
    notes = [
        _duration_note(params),
        "machine count defaults to 2^49, the power of two above the 5.1e14 planetary bound",
    ]
    return _report("ion-trap", params, ION_MARGIN, notes)


# --- report table -----------------------------------------------------------------


def sci(value, digits=6):
    """Compact exact scientific notation (``2.85e-2``); ``~`` marks rounding."""
    value = Fraction(value)
    if value == 0:
        return "0"
    sign = "-" if value < 0 else ""
    value = abs(value)
    exp = math.floor(math.log10(value.numerator) - math.log10(value.denominator))
    while value >= Fraction(10) ** (exp + 1):
        exp += 1
    while value < Fraction(10) ** exp:
        exp -= 1
    mantissa = value / Fraction(10) ** exp
    scaled = mantissa * 10 ** (digits - 1)
    rounded = round(scaled)
    exact = rounded == scaled
    text = str(rounded).rstrip("0") or "0"
    body = text[0] + ("." + text[1:] if len(text) > 1 else "")
    out = f"{sign}{body}e{exp}" if exp else f"{sign}{body}"
    return out if exact else "~" + out


def pow2(value):
    """Human form of a large integer: ``2^k`` when exact, else ``~2^x.xx``."""
    if value > 0 and value & (value - 1) == 0:
        return f"2^{value.bit_length() - 1}"
    return f"~2^{math.log2(value):.2f}"


@dataclass(frozen=True)
class TableRow:
    parameter: str
    published: str
    computed: str
    match: bool | None  # None: informational only


def _two_sig(value):
    return round(Fraction(value) / 10**13) * 10**13


def report_rows(profile):
    if profile == "generic":
        rep = generic_gate_bound()
        return [
            TableRow("gate time dt1 (s)", "1e-14", sci(rep.params.gate_time_s),
                     rep.params.gate_time_s == GENERIC_GATE_TIME),
            TableRow("serial gates N1", "1e4", sci(rep.params.serial_gates), rep.params.serial_gates == 10**4),
            TableRow("per-guess time dT1 (s)", "1e-10", sci(rep.per_guess_time_s),
                     rep.per_guess_time_s == Fraction(1, 10**10)),
            TableRow("guesses in 2^32 s", "< 2^66", pow2(rep.guesses_within_budget),
                     rep.guesses_within_budget < 2**66),
            TableRow("min password bits", "66", str(rep.min_password_bits), rep.min_password_bits == 66),
            TableRow("recommended password bits", "68", f"{rep.recommended_bits} (margin {rep.margin})",
                     rep.recommended_bits == 68),
            TableRow("attack duration", "2^32 s (100 years)",
                     f"2^32 s = {float(rep.params.attack_duration_s / SECONDS_PER_YEAR):.1f} years", None),
        ]
    if profile == "ion-trap":
        rep = ion_trap_bound()
        per_second = 1 / rep.per_guess_time_s
        per_machine = math.floor(rep.params.attack_duration_s * per_second)
        lo, hi = planet_area_bounds()
        area_ok = _two_sig(lo) == _two_sig(hi) == 51 * 10**13 and hi < MACHINE_CAP
        at_bound = min_password_bits(rep.params.attack_duration_s, rep.per_guess_time_s, 51 * 10**13)
        return [
            TableRow("CNOT time dt2 (s)", "2.85e-4", sci(rep.params.gate_time_s),
                     rep.params.gate_time_s == ION_GATE_TIME),
            TableRow("serial CNOTs N2", "1e2", sci(rep.params.serial_gates), rep.params.serial_gates == 100),
            TableRow("per-guess time dT2 (s)", "2.85e-2", sci(rep.per_guess_time_s),
                     rep.per_guess_time_s == Fraction(285, 10**4)),
            TableRow("guesses per machine per second", "< 2^6", sci(per_second, 4), per_second < 2**6),
            TableRow("guesses per machine in 2^32 s", "< 2^38", pow2(per_machine), per_machine < 2**38),
            TableRow("planet area 4*pi*(6370e3)^2 (m^2)", "5.1e14 < 2^49",
                     f"{sci(_two_sig(lo), 2)} in [{sci(lo, 5)}, {sci(hi, 5)}]", area_ok),
            TableRow("total guesses, 2^49 machines", "< 2^87", pow2(rep.guesses_within_budget),
                     rep.guesses_within_budget < 2**87),
            TableRow("min password bits", "87", str(rep.min_password_bits), rep.min_password_bits == 87),
            TableRow("password length", "88", f"{rep.recommended_bits} (margin {rep.margin})",
                     rep.recommended_bits == 88),
            TableRow("min bits at exactly 5.1e14 machines", "-", str(at_bound), None),
            TableRow("attack duration", "2^32 s (100 years)",
                     f"2^32 s = {float(rep.params.attack_duration_s / SECONDS_PER_YEAR):.1f} years", None),
        ]
    raise DomainError(f"unknown profile {profile!r}; expected 'generic' or 'ion-trap'")


def format_table(rows):
    header = ("parameter", "published", "computed", "match")
    cells = [header] + [
        (r.parameter, r.published, r.computed, "-" if r.match is None else ("yes" if r.match else "NO"))
        for r in rows
    ]
    widths = [max(len(c[i]) for c in cells) for i in range(4)]
    lines = ["  ".join(c[i].ljust(widths[i]) for i in range(4)).rstrip() for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def all_match(rows):
    return all(r.match is not False for r in rows)
