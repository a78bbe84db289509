import random
import subprocess
import sys

import pytest

from enkvote import cli
from enkvote.election import CandidateSet, VerifyStatus
from enkvote.errors import RoundCapExceededError
from enkvote.harness import files
from enkvote.harness.bus import Fault, FaultRule
from enkvote.harness.envelope import MsgType
from enkvote.harness.net import run_socket_election
from enkvote.harness.simulation import STALL, STALL_RELAY, run_election


@pytest.fixture(scope="module")
def manifest(g768):
    candidates = CandidateSet.generate(("red", "blue"), random.Random("sim"))
    return files.Manifest(g768, candidates, 6)


CHOICES = {1: 1, 2: 2, 3: 1, 4: 2, 5: 1, 6: 1}


def test_simulated_election_counts_everyone(manifest):
    result = run_election(manifest, CHOICES, seed=3)
    assert result.tally == {"red": 4, "blue": 2}
    assert result.rounds == 1 and not result.failed_ids and not result.audit
    assert all(v is VerifyStatus.COUNTED for v in result.verification.values())


def test_simulation_is_deterministic(manifest):
    a = run_election(manifest, CHOICES, seed=11)
    b = run_election(manifest, CHOICES, seed=11)
    assert a.export == b.export
    assert a.log.digests() == b.log.digests()
    c = run_election(manifest, CHOICES, seed=12)
    assert c.export != a.export


def test_choices_as_sequence_and_file(manifest, tmp_path):
    path = tmp_path / "choices.txt"
    path.write_text(files.choices_text(CHOICES))
    by_path = run_election(manifest, path, seed=1)
    by_list = run_election(manifest, [CHOICES[i] for i in range(1, 7)], seed=1)
    assert by_path.export == by_list.export


def test_stalled_submission_is_missing_not_failed(manifest):
    result = run_election(manifest, {**CHOICES, 2: STALL}, seed=2)
    assert sum(result.tally.values()) == 5 and result.rounds == 1
    assert len(result.closures[0].missing) == 1


@pytest.mark.parametrize("fault,rounds", [
    (Fault.drop(), 2),
    (Fault.tamper(40), 2),
    (Fault.delay(2), 2),
    (Fault.delay(1), 1),
])
def test_relay_faults(manifest, fault, rounds):
    rule = FaultRule(fault, msg_type=MsgType.RELAY_VA)
    result = run_election(manifest, CHOICES, seed=4, rules=[rule])
    assert result.rounds == rounds
    assert result.tally == {"red": 4, "blue": 2}
    assert all(v is VerifyStatus.COUNTED for v in result.verification.values())


def test_duplicated_submission_is_rejected(manifest):
    rule = FaultRule(Fault.duplicate(), msg_type=MsgType.SUBMIT, sender="voter3")
    result = run_election(manifest, CHOICES, seed=5, rules=[rule])
    reasons = [r.reason for _, _, r in result.auth_results if not r.accepted]
    assert reasons == ["duplicate"]
    assert sum(result.tally.values()) == 6


def test_stalling_relay_exhausts_round_cap(manifest):
    with pytest.raises(RoundCapExceededError) as info:
        run_election(manifest, {**CHOICES, 4: STALL_RELAY}, seed=6, round_cap=2)
    partial = info.value.result
    assert partial.rounds == 2 and len(partial.failed_ids) == 1
    assert sum(partial.tally.values()) == 5


def test_socket_mode_matches_simulation(manifest):
    setup = files.derive_setup(manifest, 9)
    simulated = run_election(manifest, CHOICES, seed=9, credentials=setup)
    export, outcomes = run_socket_election(manifest, setup, CHOICES, seed=9, timeout=20)
    assert export == simulated.export
    assert {o.status for o in outcomes.values()} == {"counted"}


# --- command line -----------------------------------------------------------------


def _run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_setup_run_audit_verify(tmp_path, capsys):
    d = tmp_path / "el"
    assert _run_cli("setup", "--out", d, "--voters", 4, "--candidates", "yes,no",
                    "--group", "modp768", "--seed", 1) == 0
    assert _run_cli("run", "--dir", d, "--split", "3,1", "--seed", 2) == 0
    out = capsys.readouterr().out
    assert "yes: 3" in out and "no: 1" in out
    board = d / files.BOARD_FILE
    assert _run_cli("audit", "--board", board, "--credential", d / "admin.cred") == 0
    for i in range(1, 5):
        assert _run_cli("verify", "--board", board, "--credential", d / files.voter_file(i),
                        "--receipt", d / files.receipt_file(i)) == 0
    assert capsys.readouterr().out.count("counted") == 4
    # flip one ballot to the other candidate
    lines = board.read_text().splitlines()
    codes = files.Manifest.load(d / files.MANIFEST_NAME).candidates.codes
    entry, b, s, tag = lines[0].split(",")
    lines[0] = ",".join((entry, next(c.hex() for c in codes if c.hex() != b), s, tag))
    board.write_text("\n".join(lines) + "\n")
    assert _run_cli("audit", "--board", board, "--credential", d / "admin.cred") == 1
    assert "MAC mismatch" in capsys.readouterr().out


def test_cli_split_must_cover_roster(tmp_path, capsys):
    d = tmp_path / "el"
    _run_cli("setup", "--out", d, "--voters", 3, "--candidates", "a,b", "--group", "modp768", "--seed", 1)
    assert _run_cli("run", "--dir", d, "--split", "1,1") == 1
    assert "error:" in capsys.readouterr().err


def test_cli_costmodel_and_attack(capsys):
    assert _run_cli("costmodel", "--profile", "generic") == 0
    assert _run_cli("costmodel", "--profile", "ion-trap") == 0
    out = capsys.readouterr().out
    assert not any(line.rstrip().endswith("NO") for line in out.splitlines())
    assert "88 (margin 1)" in out
    assert _run_cli("attack", "--scenario", "replay") == 0
    assert "detected" in capsys.readouterr().out


def test_cli_missing_manifest_is_an_error(tmp_path, capsys):
    assert _run_cli("run", "--dir", tmp_path, "--split", "1,1") == 1
    assert capsys.readouterr().err.startswith("error:")


def test_cli_socket_processes(tmp_path):
    d = tmp_path / "el"
    n = 3
    assert _run_cli("setup", "--out", d, "--voters", n, "--candidates", "yes,no", "--group", "modp768",
                    "--seed", 4, "--mode", "socket") == 0
    exe = [sys.executable, "-m", "enkvote.cli"]
    manifest = d / files.MANIFEST_NAME

    def start(*args):
        return subprocess.Popen(exe + [str(a) for a in args], stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                                text=True)

    counter = start("serve-counter", "--listen", "127.0.0.1:0", "--manifest", manifest,
                    "--credential", d / "counter.cred", "--out", tmp_path / "board.txt")
    counter_addr = counter.stdout.readline().split()[-1]
    admin = start("serve-admin", "--listen", "127.0.0.1:0", "--connect", counter_addr, "--manifest", manifest,
                  "--credential", d / "admin.cred", "--timeout", 30)
    admin_addr = admin.stdout.readline().split()[-1]
    voters = [start("vote", "--connect", admin_addr, "--manifest", manifest, "--credential",
                    d / files.voter_file(i), "--choice", 1 + i % 2) for i in range(1, n + 1)]
    statuses = [v.communicate(timeout=60)[0].strip() for v in voters]
    admin.communicate(timeout=60)
    counter.communicate(timeout=60)
    assert statuses == ["counted"] * n
    assert "TALLY yes=1" in (tmp_path / "board.txt").read_text()
    assert "TALLY no=2" in (tmp_path / "board.txt").read_text()
