import io
import random
import stat

import pytest
from hypothesis import given, settings, strategies as st

from enkvote.election import CandidateSet, ElectionState, setup_election
from enkvote.errors import DomainError, ManifestError, ProtocolError, UnknownEndpointError
from enkvote.harness import files
from enkvote.harness.bus import Bus, Fault, FaultKind, FaultRule, flip_bit
from enkvote.harness.envelope import HEADER_BYTES, Envelope, MsgType, decode_prefix, read_envelope


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(list(MsgType)), st.binary(max_size=300))
def test_envelope_round_trip(msg_type, body):
    env = Envelope(msg_type, body)
    wire = env.to_bytes()
    assert len(wire) == HEADER_BYTES + len(body)
    assert Envelope.from_bytes(wire) == env
    assert read_envelope(io.BytesIO(wire)) == env


def test_envelope_unknown_type_is_rejected():
    with pytest.raises(ProtocolError):
        Envelope.from_bytes(b"\x7f\x00\x00\x00\x00")
    with pytest.raises(ProtocolError):
        decode_prefix(b"\x7f")
    with pytest.raises(ProtocolError):
        read_envelope(io.BytesIO(b"\x7f\x00\x00\x00\x00"))


def test_envelope_partial_and_trailing_data():
    wire = Envelope(MsgType.SUBMIT, b"abc").to_bytes()
    assert decode_prefix(wire[:-1]) == (None, 0)
    env, used = decode_prefix(wire + b"\x01")
    assert env.body == b"abc" and used == len(wire)
    with pytest.raises(ProtocolError):
        Envelope.from_bytes(wire + b"\x01")
    with pytest.raises(ProtocolError):
        read_envelope(io.BytesIO(wire[:3]))
    assert read_envelope(io.BytesIO(b"")) is None


def test_envelope_oversized_body_rejected():
    with pytest.raises(ProtocolError):
        decode_prefix(bytes([MsgType.SUBMIT]) + (1 << 25).to_bytes(4, "big"))


def test_flip_bit_is_msb_first():
    assert flip_bit(b"\x00\x00", 0) == b"\x80\x00"
    assert flip_bit(b"\x00\x00", 15) == b"\x00\x01"
    with pytest.raises(DomainError):
        flip_bit(b"\x00", 8)


def _recording_bus(rules=()):
    bus = Bus(rules)
    got = []
    bus.register("b", lambda sender, env: got.append((bus.now, sender, env.body)))
    bus.register("a", lambda sender, env: None)
    return bus, got


def test_bus_delivers_after_latency():
    bus, got = _recording_bus()
    bus.send("a", "b", Envelope(MsgType.SUBMIT, b"x"))
    bus.run()
    assert got == [(1, "a", b"x")]
    assert len(bus.log) == 1 and bus.idle


def test_bus_faults():
    rules = [
        FaultRule(Fault.drop(), occurrence=1),
        FaultRule(Fault.tamper(7), occurrence=2),
        FaultRule(Fault.delay(3), occurrence=3),
        FaultRule(Fault.duplicate(), occurrence=4),
    ]
    bus, got = _recording_bus(rules)
    for body in (b"\x00", b"\x00", b"\x02", b"\x03", b"\x04"):
        bus.send("a", "b", Envelope(MsgType.SUBMIT, body))
    bus.run()
    assert sorted(got) == [(1, "a", b"\x01"), (1, "a", b"\x03"), (1, "a", b"\x03"), (1, "a", b"\x04"),
                           (4, "a", b"\x02")]
    assert [e.event for e in bus.log].count("drop") == 1
    assert [r.fired for r in rules] == [1, 1, 1, 1]


def test_bus_rule_filters_and_every_occurrence():
    rule = FaultRule(Fault.drop(), msg_type=MsgType.ANNOUNCE, sender="a", occurrence=0)
    bus, got = _recording_bus([rule])
    bus.send("a", "b", Envelope(MsgType.ANNOUNCE, b"1"))
    bus.send("a", "b", Envelope(MsgType.SUBMIT, b"2"))
    bus.send("a", "b", Envelope(MsgType.ANNOUNCE, b"3"))
    bus.run()
    assert [g[2] for g in got] == [b"2"]
    assert rule.fired == 2


def test_bus_timers_fire_after_same_tick_deliveries():
    bus, got = _recording_bus()
    order = []
    bus.at(1, lambda: order.append(("timer", len(got))))
    bus.send("a", "b", Envelope(MsgType.SUBMIT, b"x"))
    bus.run()
    assert order == [("timer", 1)]


def test_bus_unknown_endpoint():
    bus, _ = _recording_bus()
    with pytest.raises(UnknownEndpointError):
        bus.send("a", "nowhere", Envelope(MsgType.SUBMIT, b""))


def test_fault_constructors():
    assert Fault.none().kind is FaultKind.NONE
    assert Fault.delay(2).ticks == 2 and Fault.tamper(9).bit == 9


# --- files -----------------------------------------------------------------------


@pytest.fixture
def manifest(g768):
    candidates = CandidateSet.generate(("alice", "bob"), random.Random(0))
    return files.Manifest(g768, candidates, 3, password_bits=88)


def test_manifest_round_trip(manifest):
    assert files.Manifest.parse(manifest.to_text()) == manifest


def test_manifest_accepts_well_known_group_name(manifest):
    text = manifest.to_text().replace(manifest.params.to_text(), "modp768")
    assert files.Manifest.parse(text).params == manifest.params


def test_manifest_single_candidate_is_rejected(manifest):
    lines = [l for l in manifest.to_text().splitlines() if "bob" not in l]
    with pytest.raises(ManifestError):
        files.Manifest.parse("\n".join(lines))


@pytest.mark.parametrize("edit", [
    ("voters: 3", "voters: 0"),
    ("mode: simulated", "mode: carrier-pigeon"),
    ("timeout: 1", "timeout: 0"),
    ("voters: 3", "voters: three"),
    ("voters: 3", ""),
    ("round_cap: 3", "round_cap: 3\nround_cap: 4"),
    ("mode: simulated", "not a pair"),
])
def test_manifest_invalid_input(manifest, edit):
    with pytest.raises(ManifestError):
        files.Manifest.parse(manifest.to_text().replace(*edit))


def test_manifest_bad_group(manifest):
    with pytest.raises(ManifestError):
        files.Manifest.parse(manifest.to_text().replace(manifest.params.to_text(), "s:0x15"))
    with pytest.raises(ManifestError):
        files.Manifest.load("/nonexistent/manifest.txt")


def test_write_and_load_election(tmp_path, manifest):
    setup = files.derive_setup(manifest, 7)
    files.write_election(tmp_path, manifest, setup)
    for name in ("admin.cred", "counter.cred", "voter-001.cred"):
        assert stat.S_IMODE((tmp_path / name).stat().st_mode) == 0o600
    loaded_manifest, loaded = files.load_election(tmp_path)
    assert loaded_manifest == manifest
    assert [v.id for v in loaded.voters] == [v.id for v in setup.voters]
    assert loaded.admin.roster == setup.admin.roster
    assert loaded.counter.p_vc == setup.counter.p_vc


def test_derive_setup_is_seeded(manifest):
    a, b = files.derive_setup(manifest, 1), files.derive_setup(manifest, 1)
    assert [v.id for v in a.voters] == [v.id for v in b.voters]
    assert files.derive_setup(manifest, 2).voters[0].id != a.voters[0].id


def test_credential_parse_errors():
    with pytest.raises(ManifestError):
        files.parse_credential("role: wizard\n")
    with pytest.raises(ManifestError):
        files.parse_credential("role: voter\nindex: 1\n")


def test_receipt_round_trip(g768):
    setup = setup_election(("a", "b"), 1, g768, random.Random(3))
    voter = ElectionState.from_setup(setup, 0).voters[1]
    package = voter.build_ballot(2)
    assert files.parse_receipt(files.receipt_text(package, 2)) == package
    with pytest.raises(ManifestError):
        files.parse_receipt("ballot: 00\n")


def test_choices_script():
    text = "# comment\n1 2\n2 stall\n3 stall-relay  # trailing\n\n"
    choices = files.parse_choices(text)
    assert choices == {1: 2, 2: "stall", 3: "stall-relay"}
    assert files.parse_choices(files.choices_text(choices)) == choices
    with pytest.raises(ManifestError):
        files.parse_choices("1\n")
    with pytest.raises(ManifestError):
        files.parse_choices("x 1\n")
