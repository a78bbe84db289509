"""Scripted adversaries run against small simulated elections.

Each scenario builds its own election, plays one attack (or checks one
property) and reports whether the scheme responded as claimed. Every
scenario maps to exactly one security property.
"""

from __future__ import annotations

import pickle
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .. import numtheory as nt
from ..crypto import (
    NONCE_BYTES,
    decode_payload,
    ep_unwrap,
    mac_tag,
    sym_decrypt,
    sym_encrypt,
    unwrap_layer,
    wrap_layer,
)
from ..election import (
    BallotPackage,
    BoardRow,
    ElectionState,
    PublishedBoard,
    RelayBody,
    VerifyStatus,
    setup_election,
    verify_package,
)
from ..enk import EnkMessage
from ..errors import (
    AuthFailError,
    DecodeError,
    DomainError,
    FormatError,
    ProtocolError,
    StateError,
)
from ..harness.bus import Fault, FaultRule, flip_bit
from ..harness.envelope import Envelope, MsgType
from ..harness.simulation import ADMIN, STALL, Simulation

PROPERTIES = ("completeness", "robustness", "privacy", "eligibility", "unreusability", "fairness", "verifiability")
_REFUSALS = (AuthFailError, DecodeError, DomainError, FormatError, ProtocolError, StateError)


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    property: str
    passed: bool
    detail: str
    attack: bool = True

    @property
    def outcome(self):
        if self.attack:
            return "detected" if self.passed else "UNDETECTED"
        return "holds" if self.passed else "VIOLATED"

    def line(self):
        return f"{self.name:<15} {self.property:<14} {self.outcome:<10} {self.detail}"


@dataclass(frozen=True)
class SuiteConfig:
    params: nt.GroupParams
    seed: int = 0
    n_voters: int = 5
    labels: tuple = ("yes", "no")

    def setup(self):
        return setup_election(self.labels, self.n_voters, self.params, random.Random(f"{self.seed}:setup"),
                              password_bits=88)

    def choices(self):
        return {i: 1 + (i % 2) for i in range(1, self.n_voters + 1)}

    def simulation(self, **kw):
        return Simulation(self.setup(), kw.pop("choices", self.choices()), self.seed, **kw)


def _replaced_of(sim, index):
    voter_id = sim.state.voters[index].credential.id
    return sim.state.admin.substitution.by_original(voter_id).replaced


# --- completeness -------------------------------------------------------------


def scenario_honest(cfg):
    result = cfg.simulation().run()
    n = cfg.n_voters
    ok = (
        len(result.board.rows) == n
        and sum(result.tally.values()) == n
        and all(v is VerifyStatus.COUNTED for v in result.verification.values())
        and not result.audit
        and not result.failed_ids
    )
    return ScenarioReport("honest", "completeness", ok,
                          f"{len(result.board.rows)}/{n} rows, tally {result.tally}", attack=False)


# --- robustness ---------------------------------------------------------------


def _off_list_ballot(rng):
    def build(voter):
        cred = voter.credential
        code = nt.randbytes(rng, voter.candidates.code_bytes)
        verif = nt.randbytes(rng, 16)
        tag_va = mac_tag(cred.k_va, code + verif, nt.randbytes(rng, NONCE_BYTES), ledger=voter.ledger)
        x = code + verif + tag_va.to_bytes()
        tag_vc = mac_tag(cred.k_vc, x, nt.randbytes(rng, NONCE_BYTES), ledger=voter.ledger)
        return BallotPackage(code, verif, tag_va, tag_vc)
    return build


def scenario_invalid_ballot(cfg):
    rng = random.Random(f"{cfg.seed}:invalid")
    sim = cfg.simulation(ballots={2: _off_list_ballot(rng)})
    publication = sim.run_round(set(sim.state.voters))
    replaced = _replaced_of(sim, 2)
    status = sim.state.counter.round_status(replaced)
    reasons = [v.reason for _, v in sim.validations if not v.valid]
    ok = (
        reasons == ["ballot_not_in_set"]
        and status == ("failed", "ballot_not_in_set")
        and len(publication.board.rows) == cfg.n_voters - 1
        and replaced in publication.failed_ids
    )
    return ScenarioReport("invalid-ballot", "robustness", ok, f"counter verdict {reasons}")


def scenario_stall_voter(cfg):
    choices = cfg.choices()
    choices[3] = STALL
    sim = cfg.simulation(choices=choices)
    publication = sim.run_round(set(sim.state.voters))
    closure = sim.closures[0]
    stalled = sim.state.voters[3].credential.id
    in_relay = any(r.original == stalled for r in sim.state.admin.substitution)
    ok = closure.missing == (stalled,) and not in_relay and len(publication.board.rows) == cfg.n_voters - 1
    return ScenarioReport("stall-voter", "robustness", ok,
                          f"flagged at authentication close: {[m.hex()[:8] for m in closure.missing]}")


def scenario_tamper_admin(cfg):
    """The administrator swaps the inner ciphertext it relays for random octets."""
    rng = random.Random(f"{cfg.seed}:tamper-admin")
    fired = []

    def intercept(sender, receiver, env):
        if env.msg_type is MsgType.RELAY_AC and not fired:
            fired.append(True)
            p_ac = sim.state.admin.credential.p_ac
            body = RelayBody.from_bytes(env.body)
            inner = unwrap_layer(p_ac, body.payload)
            forged = inner[:1] + nt.randbytes(rng, len(inner) - 1)
            env = Envelope(env.msg_type, RelayBody(body.id_ct, wrap_layer(p_ac, forged, rng)).to_bytes())
        return env

    sim = cfg.simulation(intercept=intercept)
    publication = sim.run_round(set(sim.state.voters))
    victim = sim.state.admin.substitution.rows[0]
    ok = (
        victim.replaced in publication.failed_ids
        and len(publication.board.rows) == cfg.n_voters - 1
        and any(not v.valid for _, v in sim.validations)
    )
    return ScenarioReport("tamper-admin", "robustness", ok,
                          f"slot 1 failed; failed_ids={len(publication.failed_ids)}")


def tamper_board_row(export, entry, candidates):
    """Counter-side forgery: give row ``entry`` a different candidate code."""
    lines = export.splitlines()
    row = BoardRow.from_line(lines[entry - 1])
    other = next(c for c in candidates.codes if c != row.ballot)
    lines[entry - 1] = BoardRow(row.entry, other, row.verif, row.tag_va).to_line()
    return "\n".join(lines) + "\n"


def scenario_tamper_counter(cfg, entry=2):
    result = cfg.simulation().run()
    forged = PublishedBoard.parse(tamper_board_row(result.export, entry, result.state.setup.candidates))
    flagged = [r.entry for r in result.state.admin.audit(forged)]
    owner = next(i for i, p in result.packages.items() if p.verif == forged.rows[entry - 1].verif)
    status = verify_package(result.packages[owner], forged)
    ok = flagged == [entry] and status is VerifyStatus.ALTERED
    return ScenarioReport("tamper-counter", "robustness", ok, f"audit flags rows {flagged}; owner sees {status.value}")


def exhaustive_hop_flips(cfg, entry=1):
    """Flip every bit of every envelope in one relay round; return (flips, undetected)."""
    state = ElectionState.from_setup(cfg.setup(), cfg.seed)
    admin, counter = state.admin, state.counter
    for index, voter in state.voters.items():
        voter.build_ballot(cfg.choices()[index])
        admin.authenticate(voter.submit())
    admin.close_authentication()
    admin.substitute()
    counter.on_announce(admin.announce_to_counter())

    hops = [MsgType.RELAY_AC, MsgType.RELAY_CA, MsgType.RELAY_AV, MsgType.RELAY_VA, MsgType.RELAY_AC_FINAL]

    def deliver(st, k, body):
        if k == 0:
            return st.counter.on_relay(body)
        if k == 1:
            return st.admin.on_counter_reply(body)[1]
        if k == 2:
            original = st.admin.substitution.rows[entry - 1].original
            return st.voters[st.admin.credential.roster[original][0]].on_relay(body)
        if k == 3:
            return st.admin.on_voter_reply(body)
        return st.counter.on_final(body)

    def finish(st, k, env_bytes):
        try:
            env = Envelope.from_bytes(env_bytes)
        except ProtocolError:
            return False
        if env.msg_type is not hops[k]:
            return False
        try:
            out = deliver(st, k, env.body)
            for j in range(k + 1, len(hops)):
                out = deliver(st, j, out)
        except _REFUSALS:
            return False
        return out.valid

    snapshots = []
    body = state.admin.begin_round(entry)
    st = state
    for k in range(len(hops)):
        # pickled snapshots restore far faster than deepcopy
        snapshots.append((pickle.dumps(st), Envelope(hops[k], body).to_bytes()))
        body = deliver(st, k, body)
    if not body.valid:
        raise AssertionError("honest round did not validate")

    flips = undetected = 0
    for k, (snap, wire) in enumerate(snapshots):
        for bit in range(8 * len(wire)):
            flips += 1
            if finish(pickle.loads(snap), k, flip_bit(wire, bit)):
                undetected += 1
    return flips, undetected


def scenario_tamper_hop(cfg):
    flips, undetected = exhaustive_hop_flips(cfg)
    # and one flip through the bus, to show the round is failed and revoted
    rule = FaultRule(Fault.tamper(7), msg_type=MsgType.RELAY_AC)
    result = cfg.simulation(rules=[rule]).run()
    ok = undetected == 0 and flips > 0 and result.rounds == 2 and len(result.board.rows) == cfg.n_voters
    return ScenarioReport("tamper-hop", "robustness", ok,
                          f"{flips - undetected}/{flips} single-bit flips detected; bus tamper revoted in round 2")


# --- unreusability and eligibility ------------------------------------------------


def scenario_replay(cfg):
    rule = FaultRule(Fault.duplicate(), msg_type=MsgType.SUBMIT, sender="voter1")
    result = cfg.simulation(rules=[rule]).run()
    rejected = [r.reason for _, _, r in result.auth_results if not r.accepted]
    ok = rejected == ["duplicate"] and len(result.board.rows) == cfg.n_voters
    return ScenarioReport("replay", "unreusability", ok, f"replayed submission rejected: {rejected}")


def scenario_impersonate(cfg):
    """An invented identity: once encrypted under the voters' shared K_va, once blind."""
    rng = random.Random(f"{cfg.seed}:impersonate")
    sim = cfg.simulation()
    cred = sim.state.voters[1].credential
    forged = RelayBody(sym_encrypt(cred.k_va, nt.randbytes(rng, 16), rng), nt.randbytes(rng, 64)).to_bytes()
    blind = RelayBody(nt.randbytes(rng, 44), nt.randbytes(rng, 64)).to_bytes()

    def inject():
        sim.send("voter1", ADMIN, MsgType.SUBMIT, forged)
        sim.send("voter1", ADMIN, MsgType.SUBMIT, blind)

    sim.bus.at(0, inject)
    sim.run()
    rejected = [r.reason for _, _, r in sim.auth_results if not r.accepted]
    ok = rejected == ["ineligible", "tampered"] and len(sim.result().board.rows) == cfg.n_voters
    return ScenarioReport("impersonate", "eligibility", ok, f"invented identities rejected: {rejected}")


# --- privacy ------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepReport:
    attempts: int
    decodable: int
    recovered: int


def admin_key_sweep(traffic, admin_credential, payloads, params):
    """Try every key the administrator holds against every recorded hop.

    ``traffic`` is a list of envelope bodies. Symmetric keys are tried on the
    ID field; every password is tried as the outer layer and again on the
    inner group ciphertext, in both wrap modes. Counts payloads that decode
    and those equal to some ``Y_i``.
    """
    keys = [admin_credential.k_va, admin_credential.k_ac]
    passwords = [admin_credential.p_ac] + [pw for _, pw in admin_credential.roster.values()]
    targets = set(payloads)
    attempts = decodable = recovered = 0

    def check(value):
        nonlocal decodable, recovered
        try:
            y = decode_payload(value, params)
        except DecodeError:
            return
        decodable += 1
        recovered += y in targets

    for body in traffic:
        try:
            relay = RelayBody.from_bytes(body)
        except FormatError:
            continue
        for key in keys:
            attempts += 1
            try:
                plain = sym_decrypt(key, relay.id_ct)
            except (AuthFailError, FormatError):
                continue
            recovered += plain in targets
        for outer in passwords:
            inner = unwrap_layer(outer, relay.payload)
            try:
                msg = EnkMessage.from_bytes(inner, params)
            except FormatError:
                continue
            for pw in passwords:
                for qr in (False, True):
                    attempts += 1
                    try:
                        check(ep_unwrap(pw, msg.ct, params, qr=qr))
                    except DomainError:
                        continue
    return SweepReport(attempts, decodable, recovered)


def scenario_admin_blind(cfg):
    traffic = []

    def record(sender, receiver, env):
        if env.msg_type in (MsgType.SUBMIT, MsgType.RELAY_AC, MsgType.RELAY_CA, MsgType.RELAY_AV,
                            MsgType.RELAY_VA, MsgType.RELAY_AC_FINAL):
            traffic.append(env.body)
        return env

    sim = cfg.simulation(intercept=record)
    result = sim.run()
    ys = [p.y for p in result.packages.values()]
    sweep = admin_key_sweep(traffic, sim.state.admin.credential, ys, cfg.params)
    ok = sweep.recovered == 0 and sweep.decodable == 0
    return ScenarioReport("admin-blind", "privacy", ok,
                          f"{sweep.attempts} decryptions over {len(traffic)} hops, {sweep.recovered} ballots recovered",
                          attack=False)


# --- fairness and verifiability ------------------------------------------------------


_QUERIES = (
    ("rows", lambda b: b.rows),
    ("len", len),
    ("tally", lambda b: b.tally()),
    ("find", lambda b: b.find(b"\x00" * 16)),
    ("export", lambda b: b.export()),
)


def scenario_early_tally(cfg):
    """Probe every board query before every delivery; none may answer while open."""
    probes, leaks = [0], []

    def probe(sender, receiver, env):
        board = sim.state.counter.board
        if board.status.value == "open":
            for name, query in _QUERIES:
                probes[0] += 1
                try:
                    query(board)
                    leaks.append((name, sim.bus.now))
                except StateError:
                    pass
        return env

    sim = cfg.simulation(intercept=probe)
    sim.run()
    ok = not leaks and probes[0] > 0
    return ScenarioReport("early-tally", "fairness", ok, f"{probes[0]} probes while open, {len(leaks)} answered",
                          attack=False)


def scenario_verify(cfg):
    """Every voter finds their ballot; a row the counter drops shows as missing."""
    result = cfg.simulation().run()
    counted = all(v is VerifyStatus.COUNTED for v in result.verification.values())
    lines = result.export.splitlines()
    dropped = PublishedBoard.parse("\n".join(lines[1:]) + "\n")
    owner = next(i for i, p in result.packages.items() if p.verif == result.board.rows[0].verif)
    status = verify_package(result.packages[owner], dropped)
    ok = counted and status is VerifyStatus.MISSING
    return ScenarioReport("verify", "verifiability", ok,
                          f"all {len(result.verification)} voters counted; dropped row reported {status.value}",
                          attack=False)


SCENARIOS = {
    "honest": scenario_honest,
    "invalid-ballot": scenario_invalid_ballot,
    "stall-voter": scenario_stall_voter,
    "tamper-admin": scenario_tamper_admin,
    "tamper-counter": scenario_tamper_counter,
    "tamper-hop": scenario_tamper_hop,
    "replay": scenario_replay,
    "impersonate": scenario_impersonate,
    "admin-blind": scenario_admin_blind,
    "early-tally": scenario_early_tally,
    "verify": scenario_verify,
}

# the seven adversarial scenarios the suite must always pass
REQUIRED = ("invalid-ballot", "stall-voter", "tamper-admin", "tamper-counter", "tamper-hop", "replay", "impersonate")


def run_scenario(name, cfg):
    try:
        fn = SCENARIOS[name]
    except KeyError:
        raise DomainError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return fn(cfg)


def _run_named(args):
    name, cfg = args
    return run_scenario(name, cfg)


def attack_suite(names=None, *, params=None, seed=0, n_voters=5, workers=1):
    """Run scenarios (all by default), each on a fresh election instance."""
    params = params or nt.GroupParams.well_known(nt.TEST_GROUP)
    cfg = SuiteConfig(params, seed, n_voters)
    names = list(names or SCENARIOS)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_named, [(n, cfg) for n in names]))
    return [run_scenario(n, cfg) for n in names]
