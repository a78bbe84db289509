"""Whole elections on the virtual-time bus.

Timeline of one round (latency 1 tick, ``timeout`` ticks of slack)::

    t0        voters submit
    t0+1      submissions reach A
    t0+1+T    A closes authentication, announces, starts every relay round
    ...       relay hops interleave across rounds, one tick per hop
    +4+T      C expires any round still open and publishes

Rounds that fail are revoted with fresh credentials until none fail or
the round cap is reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..election import ElectionSetup, ElectionState, PublishedBoard, verify_package
from ..errors import (
    AuthFailError,
    DecodeError,
    DomainError,
    FormatError,
    ProtocolError,
    RoundCapExceededError,
    StateError,
)
from .bus import Bus
from .envelope import Envelope, MsgType
from .files import Manifest, derive_setup, load_election, parse_choices

STALL = "stall"
STALL_RELAY = "stall-relay"
ADMIN, COUNTER = "admin", "counter"
_HANDLED = (AuthFailError, DecodeError, DomainError, FormatError, ProtocolError, StateError)


def voter_name(index):
    return f"voter{index}"


@dataclass(frozen=True)
class Incident:
    """A message some party refused; the protocol carries on without it."""

    tick: int
    party: str
    msg_type: str
    error: str


@dataclass
class ElectionResult:
    export: str
    board: PublishedBoard
    rounds: int
    log: object
    packages: dict
    auth_results: list = field(default_factory=list)
    closures: list = field(default_factory=list)
    validations: list = field(default_factory=list)
    incidents: list = field(default_factory=list)
    exports: list = field(default_factory=list)
    audit: list = field(default_factory=list)
    verification: dict = field(default_factory=dict)
    state: ElectionState | None = None

    @property
    def tally(self):
        return self.board.tally

    @property
    def failed_ids(self):
        return self.board.failed_ids


class Simulation:
    """One election wired onto a :class:`Bus`.

    ``choices`` maps voter index to a 1-based candidate, ``"stall"`` (never
    submits) or ``"stall-relay"`` (submits, then ignores the relay).
    ``ballots`` maps voter index to ``f(voter) -> BallotPackage`` for scripted
    dishonest ballots. ``intercept(sender, receiver, env)`` may rewrite or
    swallow (return None) any message before the bus sees it.
    """

    def __init__(self, setup, choices, seed=None, *, timeout=1, round_cap=3, rules=(),
                 ballots=None, intercept=None):
        self.state = ElectionState.from_setup(setup, seed)
        self.choices = dict(choices)
        self.timeout = timeout
        self.round_cap = round_cap
        self.ballots = dict(ballots or {})
        self.intercept = intercept
        self.bus = Bus(rules)
        self.round = 0
        self.publication = None
        self.exports = []
        self.auth_results = []
        self.closures = []
        self.validations = []
        self.incidents = []
        self.packages = {}
        self.bus.register(ADMIN, self._guard(ADMIN, self._on_admin))
        self.bus.register(COUNTER, self._guard(COUNTER, self._on_counter))
        for index in self.state.voters:
            self.bus.register(voter_name(index), self._guard(voter_name(index), self._voter_handler(index)))

    # -- plumbing --

    def send(self, sender, receiver, msg_type, body):
        env = Envelope(msg_type, body)
        if self.intercept is not None:
            env = self.intercept(sender, receiver, env)
            if env is None:
                return None
        return self.bus.send(sender, receiver, env)

    def _guard(self, party, handler):
        def deliver(sender, env):
            try:
                handler(sender, env)
            except _HANDLED as exc:
                self.incidents.append(Incident(self.bus.now, party, env.msg_type.name, f"{type(exc).__name__}: {exc}"))
        return deliver

    # -- administrator --

    def _on_admin(self, sender, env):
        admin = self.state.admin
        if env.msg_type is MsgType.SUBMIT:
            result = admin.authenticate(env.body)
            self.auth_results.append((self.round, sender, result))
        elif env.msg_type is MsgType.RELAY_CA:
            index, body = admin.on_counter_reply(env.body)
            self.send(ADMIN, voter_name(index), MsgType.RELAY_AV, body)
        elif env.msg_type is MsgType.RELAY_VA:
            self.send(ADMIN, COUNTER, MsgType.RELAY_AC_FINAL, admin.on_voter_reply(env.body))
        elif env.msg_type is MsgType.BOARD_EXPORT:
            self.exports.append(env.body.decode())
        else:
            raise ProtocolError(f"administrator does not accept {env.msg_type.name}")

    def _close_authentication(self):
        admin = self.state.admin
        closure = admin.close_authentication()
        self.closures.append(closure)
        listing = b"".join(closure.authenticated)
        for index in sorted(self.state.voters):
            self.send(ADMIN, voter_name(index), MsgType.ANNOUNCE, listing)
        table = admin.substitute()
        self.send(ADMIN, COUNTER, MsgType.ANNOUNCE, admin.announce_to_counter())
        for row in table:
            self.send(ADMIN, COUNTER, MsgType.RELAY_AC, admin.begin_round(row.entry))

    # -- counter --

    def _on_counter(self, sender, env):
        counter = self.state.counter
        if env.msg_type is MsgType.ANNOUNCE:
            counter.on_announce(env.body)
            self._published = False
            self.bus.after(4 * self.bus.latency + self.timeout, self._expire)
            self._maybe_publish()
        elif env.msg_type is MsgType.RELAY_AC:
            self.send(COUNTER, ADMIN, MsgType.RELAY_CA, counter.on_relay(env.body))
        elif env.msg_type is MsgType.RELAY_AC_FINAL:
            self.validations.append((self.round, counter.on_final(env.body)))
            self._maybe_publish()
        else:
            raise ProtocolError(f"counter does not accept {env.msg_type.name}")

    def _maybe_publish(self):
        counter = self.state.counter
        if self._published or counter.outstanding:
            return
        self._published = True
        self.publication = counter.publish()
        self.send(COUNTER, ADMIN, MsgType.BOARD_EXPORT, counter.board.export().encode())

    def _expire(self):
        if not self._published:
            self.state.counter.expire_pending()
            self._maybe_publish()

    # -- voters --

    def _voter_handler(self, index):
        def handle(sender, env):
            voter = self.state.voters[index]
            if env.msg_type is MsgType.ANNOUNCE:
                ids = [env.body[i : i + 16] for i in range(0, len(env.body), 16)]
                voter.on_announce(ids)
            elif env.msg_type is MsgType.RELAY_AV:
                if self.choices.get(index) == STALL_RELAY:
                    return
                self.send(voter_name(index), ADMIN, MsgType.RELAY_VA, voter.on_relay(env.body))
            else:
                raise ProtocolError(f"voter does not accept {env.msg_type.name}")
        return handle

    def _cast(self, index):
        choice = self.choices.get(index, STALL)
        if choice == STALL:
            return
        voter = self.state.voters[index]
        if index in self.ballots:
            package = self.ballots[index](voter)
        else:
            # a relay staller still submits a well-formed ballot; it is never delivered
            package = voter.build_ballot(1 if choice == STALL_RELAY else choice)
        self.packages[index] = package
        self.send(voter_name(index), ADMIN, MsgType.SUBMIT, voter.submit(package))

    # -- driver --

    def run_round(self, indices):
        self.round += 1
        self.publication = None
        self.bus.after(self.bus.latency + self.timeout, self._close_authentication)
        for index in sorted(indices):
            self._cast(index)
        self.bus.run()
        return self.publication

    def run(self):
        active = set(self.state.voters)
        while True:
            publication = self.run_round(active)
            if not publication.failed_ids:
                break
            if self.round >= self.round_cap:
                raise RoundCapExceededError(
                    f"{len(publication.failed_ids)} ballots still failing after {self.round} rounds",
                    result=self.result(),
                )
            issued = self.state.admin.revote(publication.failed_ids)
            for index, (new_id, new_pw) in issued.items():
                self.state.voters[index].rekey(new_id, new_pw)
            active = set(issued)
        return self.result()

    def result(self):
        export = self.exports[-1] if self.exports else self.state.counter.board.export()
        board = PublishedBoard.parse(export)
        return ElectionResult(
            export=export,
            board=board,
            rounds=self.round,
            log=self.bus.log,
            packages=dict(self.packages),
            auth_results=list(self.auth_results),
            closures=list(self.closures),
            validations=list(self.validations),
            incidents=list(self.incidents),
            exports=list(self.exports),
            audit=self.state.admin.audit(board),
            verification={i: verify_package(p, board) for i, p in sorted(self.packages.items())},
            state=self.state,
        )


def _resolve(manifest, credentials, seed):
    if not isinstance(manifest, Manifest):
        path = Path(manifest)
        if credentials is None and (path.parent / "admin.cred").exists():
            credentials = path.parent
        manifest = Manifest.load(path)
    if isinstance(credentials, ElectionSetup):
        return manifest, credentials
    if credentials is not None:
        return manifest, load_election(credentials)[1]
    return manifest, derive_setup(manifest, seed)


def run_election(manifest, choices, seed, *, credentials=None, rules=(), ballots=None, intercept=None,
                 timeout=None, round_cap=None):
    """Simulated election from a manifest (path or object) and a choices script.

    ``choices`` may be a mapping, a sequence (voter 1 first) or a path to a
    choices file. Credentials come from ``credentials`` (directory or setup),
    from files next to the manifest, or are derived from ``seed``.
    """
    manifest, setup = _resolve(manifest, credentials, seed)
    if isinstance(choices, (str, Path)):
        choices = parse_choices(Path(choices).read_text())
    elif not isinstance(choices, dict):
        choices = {i: c for i, c in enumerate(choices, 1)}
    sim = Simulation(
        setup,
        choices,
        seed,
        timeout=manifest.timeout if timeout is None else timeout,
        round_cap=manifest.round_cap if round_cap is None else round_cap,
        rules=rules,
        ballots=ballots,
        intercept=intercept,
    )
    return sim.run()
