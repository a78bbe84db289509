"""Text formats on disk: manifest, per-party credentials, receipts, board.

Every format is ``key: value`` lines with hex-encoded binary fields.
Credential files are written owner-read/write only.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass
from pathlib import Path

from .. import numtheory as nt
from ..crypto import DEFAULT_PASSWORD_BITS, MacTag, Password, SymmetricKey
from ..election import (
    AdminCredential,
    BallotPackage,
    CandidateSet,
    CounterCredential,
    ElectionSetup,
    VoterCredential,
    setup_election,
)
from ..errors import ConfigError, DomainError, ManifestError

MODES = ("simulated", "socket")
MANIFEST_NAME = "manifest.txt"
ADMIN_FILE = "admin.cred"
COUNTER_FILE = "counter.cred"
BOARD_FILE = "board.txt"
RUNLOG_FILE = "runlog.txt"


def voter_file(index):
    return f"voter-{index:03d}.cred"


def receipt_file(index):
    return f"voter-{index:03d}.receipt"


def _pairs(text, source):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ManifestError(f"{source}:{lineno}: expected 'key: value'")
        yield lineno, key.strip(), value.strip()


@dataclass(frozen=True)
class Manifest:
    params: nt.GroupParams
    candidates: CandidateSet
    n_voters: int
    password_bits: int = DEFAULT_PASSWORD_BITS
    mode: str = "simulated"
    timeout: int = 1
    round_cap: int = 3

    def to_text(self):
        lines = [f"group: {self.params.to_text()}"]
        lines += [f"candidate: {c.hex()} {label}" for label, c in zip(self.candidates.labels, self.candidates.codes)]
        lines += [
            f"code_bits: {self.candidates.s_bits}",
            f"voters: {self.n_voters}",
            f"password_bits: {self.password_bits}",
            f"mode: {self.mode}",
            f"timeout: {self.timeout}",
            f"round_cap: {self.round_cap}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text, source="manifest"):
        fields, labels, codes = {}, [], []
        for lineno, key, value in _pairs(text, source):
            if key == "candidate":
                code, _, label = value.partition(" ")
                try:
                    codes.append(bytes.fromhex(code))
                except ValueError:
                    raise ManifestError(f"{source}:{lineno}: candidate code is not hex") from None
                labels.append(label.strip())
            elif key in fields:
                raise ManifestError(f"{source}:{lineno}: duplicate key {key!r}")
            else:
                fields[key] = value
        for key in ("group", "voters"):
            if key not in fields:
                raise ManifestError(f"{source}: missing {key!r}")
        if len(labels) < 2:
            raise ManifestError(f"{source}: an election needs at least two candidates, got {len(labels)}")
        try:
            group = fields["group"]
            if group in nt.WELL_KNOWN_PRIMES:
                params = nt.GroupParams.well_known(group)
            else:
                params = nt.GroupParams.from_text(group)
            s_bits = int(fields.get("code_bits", 8 * len(codes[0])))
            candidates = CandidateSet(tuple(labels), tuple(codes), s_bits)
            manifest = cls(
                params,
                candidates,
                int(fields["voters"]),
                int(fields.get("password_bits", DEFAULT_PASSWORD_BITS)),
                fields.get("mode", "simulated"),
                int(fields.get("timeout", 1)),
                int(fields.get("round_cap", 3)),
            )
        except (ValueError, DomainError, ConfigError) as exc:
            raise ManifestError(f"{source}: {exc}") from None
        if manifest.n_voters < 1:
            raise ManifestError(f"{source}: voters must be >= 1")
        if manifest.mode not in MODES:
            raise ManifestError(f"{source}: mode must be one of {MODES}")
        if manifest.timeout < 1 or manifest.round_cap < 1 or manifest.password_bits < 1:
            raise ManifestError(f"{source}: timeout, round_cap and password_bits must be positive")
        return manifest

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ManifestError(f"cannot read manifest: {exc}") from None
        return cls.parse(text, str(path))

    def save(self, path):
        Path(path).write_text(self.to_text())


def derive_setup(manifest, seed):
    """Credentials for ``manifest`` drawn from a seeded stream (reproducible runs)."""
    rng = random.Random(f"{seed}:setup") if seed is not None else nt.default_rng()
    return setup_election(
        manifest.candidates.labels,
        manifest.n_voters,
        manifest.params,
        rng,
        password_bits=manifest.password_bits,
        s_bits=manifest.candidates.s_bits,
        codes=manifest.candidates.codes,
    )


# --- credentials --------------------------------------------------------------


def _write_private(path, text):
    path = Path(path)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.chmod(path, 0o600)


def _key(value, role):
    return SymmetricKey(bytes.fromhex(value), role)


def voter_credential_text(cred):
    return (
        "role: voter\n"
        f"index: {cred.index}\n"
        f"id: {cred.id.hex()}\n"
        f"p_av: {cred.p_av.to_text()}\n"
        f"k_va: {cred.k_va.key.hex()}\n"
        f"k_vc: {cred.k_vc.key.hex()}\n"
        f"p_vc: {cred.p_vc.to_text()}\n"
    )


def admin_credential_text(cred):
    lines = [
        "role: admin",
        f"k_va: {cred.k_va.key.hex()}",
        f"k_ac: {cred.k_ac.key.hex()}",
        f"p_ac: {cred.p_ac.to_text()}",
    ]
    for voter_id, (index, p_av) in sorted(cred.roster.items(), key=lambda kv: kv[1][0]):
        lines.append(f"voter: {index} {voter_id.hex()} {p_av.to_text()}")
    return "\n".join(lines) + "\n"


def counter_credential_text(cred):
    return (
        "role: counter\n"
        f"k_ac: {cred.k_ac.key.hex()}\n"
        f"p_ac: {cred.p_ac.to_text()}\n"
        f"k_vc: {cred.k_vc.key.hex()}\n"
        f"p_vc: {cred.p_vc.to_text()}\n"
    )


def parse_credential(text, source="credential"):
    fields, roster = {}, {}
    try:
        for _, key, value in _pairs(text, source):
            if key == "voter":
                index, voter_id, pw = value.split()
                roster[bytes.fromhex(voter_id)] = (int(index), Password.from_text(pw))
            else:
                fields[key] = value
        role = fields.get("role")
        if role == "voter":
            return VoterCredential(
                int(fields["index"]),
                bytes.fromhex(fields["id"]),
                Password.from_text(fields["p_av"]),
                _key(fields["k_va"], "va"),
                _key(fields["k_vc"], "vc"),
                Password.from_text(fields["p_vc"]),
            )
        if role == "admin":
            return AdminCredential(
                _key(fields["k_va"], "va"), _key(fields["k_ac"], "ac"), Password.from_text(fields["p_ac"]), roster
            )
        if role == "counter":
            return CounterCredential(
                _key(fields["k_ac"], "ac"),
                Password.from_text(fields["p_ac"]),
                _key(fields["k_vc"], "vc"),
                Password.from_text(fields["p_vc"]),
            )
    except (KeyError, ValueError, DomainError) as exc:
        raise ManifestError(f"{source}: malformed credential ({exc})") from None
    raise ManifestError(f"{source}: unknown role {fields.get('role')!r}")


def load_credential(path):
    path = Path(path)
    return parse_credential(path.read_text(), str(path))


def write_election(directory, manifest, setup):
    """Write the manifest plus one private credential file per party."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest.save(directory / MANIFEST_NAME)
    _write_private(directory / ADMIN_FILE, admin_credential_text(setup.admin))
    _write_private(directory / COUNTER_FILE, counter_credential_text(setup.counter))
    for cred in setup.voters:
        _write_private(directory / voter_file(cred.index), voter_credential_text(cred))
    return directory


def load_election(directory):
    """Manifest and credentials written by :func:`write_election`."""
    directory = Path(directory)
    manifest = Manifest.load(directory / MANIFEST_NAME)
    voters = [load_credential(directory / voter_file(i)) for i in range(1, manifest.n_voters + 1)]
    setup = ElectionSetup(
        manifest.params,
        manifest.candidates,
        voters,
        load_credential(directory / ADMIN_FILE),
        load_credential(directory / COUNTER_FILE),
        manifest.password_bits,
    )
    return manifest, setup


# --- receipts and choices ---------------------------------------------------------


def receipt_text(package, choice=None):
    lines = [
        f"ballot: {package.ballot.hex()}",
        f"verif: {package.verif.hex()}",
        f"tag_va: {package.tag_va.to_bytes().hex()}",
        f"tag_vc: {package.tag_vc.to_bytes().hex()}",
    ]
    if choice is not None:
        lines.append(f"choice: {choice}")
    return "\n".join(lines) + "\n"


def parse_receipt(text, source="receipt"):
    fields = {key: value for _, key, value in _pairs(text, source)}
    try:
        return BallotPackage(
            bytes.fromhex(fields["ballot"]),
            bytes.fromhex(fields["verif"]),
            MacTag.from_bytes(bytes.fromhex(fields["tag_va"])),
            MacTag.from_bytes(bytes.fromhex(fields["tag_vc"])),
        )
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{source}: malformed receipt ({exc})") from None


def parse_choices(text):
    """Choices script: ``<voter index> <choice | stall | stall-relay>`` per line."""
    choices = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ManifestError(f"choices:{lineno}: expected '<voter> <choice>'")
        index, action = parts
        try:
            choices[int(index)] = int(action) if action.isdigit() else action
        except ValueError:
            raise ManifestError(f"choices:{lineno}: bad voter index {index!r}") from None
    return choices


def choices_text(choices):
    return "".join(f"{i} {c}\n" for i, c in sorted(choices.items()))
