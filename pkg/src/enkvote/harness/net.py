"""Socket transport: counter server, administrator server, voter client.

Topology::

    voter --TCP--> admin --TCP--> counter

Voters keep their connection open for the whole election: submit, receive
the announcement, answer the relay hop, receive the board. The
administrator relays rounds one at a time in delivery order, and asks the
counter to publish once every round has been attempted (an empty
BOARD_EXPORT is the request). Only the voter-facing hops wait on the clock.
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass

from ..election import Administrator, Counter, PublishedBoard, Voter, party_rng, verify_package
from ..crypto import NonceLedger
from ..errors import AuthFailError, DomainError, FormatError, ProtocolError, StateError
from .envelope import Envelope, MsgType, read_envelope

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0


def parse_address(text):
    host, sep, port = text.rpartition(":")
    if not sep:
        raise ValueError(f"address {text!r} is not host:port")
    return host or "127.0.0.1", int(port)


class Connection:
    def __init__(self, sock):
        self.sock = sock
        self._reader = sock.makefile("rb")

    @classmethod
    def connect(cls, address, timeout=DEFAULT_TIMEOUT):
        sock = socket.create_connection(address, timeout=timeout)
        sock.settimeout(timeout)
        return cls(sock)

    def send(self, msg_type, body):
        self.sock.sendall(Envelope(msg_type, body).to_bytes())

    def recv(self, expected=None):
        env = read_envelope(self._reader)
        if env is None:
            raise ConnectionError("peer closed the connection")
        if expected is not None and env.msg_type is not expected:
            raise ProtocolError(f"expected {expected.name}, got {env.msg_type.name}")
        return env

    def close(self):
        try:
            self._reader.close()
        finally:
            self.sock.close()


def _listener(address):
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(address)
    sock.listen(128)
    return sock


class CounterServer:
    """Serves exactly one administrator connection, then exits."""

    def __init__(self, manifest, credential, seed=None, address=("127.0.0.1", 0)):
        self.counter = Counter(credential, manifest.candidates, manifest.params, party_rng(seed, "counter"),
                               ledger=NonceLedger())
        self.sock = _listener(address)
        self.address = self.sock.getsockname()
        self.export = None

    def serve(self):
        conn_sock, _ = self.sock.accept()
        self.sock.close()
        conn = Connection(conn_sock)
        try:
            while self.export is None:
                env = conn.recv()
                if env.msg_type is MsgType.ANNOUNCE:
                    self.counter.on_announce(env.body)
                elif env.msg_type is MsgType.RELAY_AC:
                    try:
                        conn.send(MsgType.RELAY_CA, self.counter.on_relay(env.body))
                    except (FormatError, AuthFailError, StateError, DomainError) as exc:
                        log.warning("relay refused: %s", exc)
                        conn.send(MsgType.RELAY_CA, b"")
                elif env.msg_type is MsgType.RELAY_AC_FINAL:
                    try:
                        self.counter.on_final(env.body)
                    except (FormatError, AuthFailError, StateError) as exc:
                        log.warning("final hop refused: %s", exc)
                elif env.msg_type is MsgType.BOARD_EXPORT:
                    self.counter.expire_pending()
                    self.counter.publish()
                    self.export = self.counter.board.export()
                    conn.send(MsgType.BOARD_EXPORT, self.export.encode())
                else:
                    raise ProtocolError(f"counter does not accept {env.msg_type.name}")
        finally:
            conn.close()
        return self.export


class AdminServer:
    """Accepts voters until all ``n`` have authenticated or the window closes."""

    def __init__(self, manifest, credential, counter_address, seed=None, address=("127.0.0.1", 0),
                 timeout=DEFAULT_TIMEOUT):
        self.manifest = manifest
        self.admin = Administrator(credential, manifest.params, party_rng(seed, "admin"), ledger=NonceLedger(),
                                   shuffle_rng=party_rng(seed, "admin-shuffle"))
        self.counter_address = counter_address
        self.timeout = timeout
        self.sock = _listener(address)
        self.address = self.sock.getsockname()
        self.lock = threading.Lock()
        self.voters = {}  # voter id -> Connection
        self.results = []
        self._all_in = threading.Event()
        self.export = None

    def _accept_loop(self):
        while not self._all_in.is_set():
            try:
                sock, _ = self.sock.accept()
            except OSError:
                return
            sock.settimeout(self.timeout)
            threading.Thread(target=self._authenticate, args=(Connection(sock),), daemon=True).start()

    def _authenticate(self, conn):
        try:
            env = conn.recv(MsgType.SUBMIT)
        except (OSError, ConnectionError, ProtocolError) as exc:
            log.warning("bad submission: %s", exc)
            conn.close()
            return
        with self.lock:
            result = self.admin.authenticate(env.body)
            self.results.append(result)
            if not result.accepted:
                conn.close()
                return
            entry = next(e for e in self.admin.auth_table if e.entry == result.entry)
            self.voters[entry.id] = conn
            if len(self.voters) == self.manifest.n_voters:
                self._all_in.set()

    def serve(self):
        threading.Thread(target=self._accept_loop, daemon=True).start()
        self._all_in.wait(self.timeout)
        with self.lock:
            self._all_in.set()
            self.sock.close()
            closure = self.admin.close_authentication()
            listing = b"".join(closure.authenticated)
            for conn in self.voters.values():
                self._try_send(conn, MsgType.ANNOUNCE, listing)
            table = self.admin.substitute()
        counter = Connection.connect(self.counter_address, self.timeout)
        try:
            counter.send(MsgType.ANNOUNCE, self.admin.announce_to_counter())
            for row in table:
                self._relay(counter, row)
            counter.send(MsgType.BOARD_EXPORT, b"")
            self.export = counter.recv(MsgType.BOARD_EXPORT).body.decode()
        finally:
            counter.close()
        for conn in self.voters.values():
            self._try_send(conn, MsgType.BOARD_EXPORT, self.export.encode())
            conn.close()
        return self.export

    @staticmethod
    def _try_send(conn, msg_type, body):
        try:
            conn.send(msg_type, body)
        except OSError as exc:
            log.warning("voter unreachable: %s", exc)

    def _relay(self, counter, row):
        with self.lock:
            counter.send(MsgType.RELAY_AC, self.admin.begin_round(row.entry))
            reply = counter.recv(MsgType.RELAY_CA).body
            try:
                _, body = self.admin.on_counter_reply(reply)
            except (FormatError, AuthFailError, StateError) as exc:
                log.warning("round %d: counter reply refused: %s", row.entry, exc)
                return
        voter = self.voters[row.original]
        try:
            voter.send(MsgType.RELAY_AV, body)
            answer = voter.recv(MsgType.RELAY_VA).body
        except (OSError, ConnectionError, ProtocolError) as exc:
            log.warning("round %d: voter did not answer: %s", row.entry, exc)
            return
        with self.lock:
            try:
                final = self.admin.on_voter_reply(answer)
            except (FormatError, AuthFailError, StateError) as exc:
                log.warning("round %d: voter reply refused: %s", row.entry, exc)
                return
            counter.send(MsgType.RELAY_AC_FINAL, final)


@dataclass
class VoteOutcome:
    package: object
    status: str
    export: str | None


def vote(address, manifest, credential, choice, seed=None, timeout=DEFAULT_TIMEOUT):
    """Cast one ballot over TCP and verify it on the returned board."""
    voter = Voter(credential, manifest.candidates, manifest.params, party_rng(seed, f"voter{credential.index}"),
                  ledger=NonceLedger())
    package = voter.build_ballot(choice)
    conn = Connection.connect(address, timeout)
    try:
        conn.send(MsgType.SUBMIT, voter.submit(package))
        try:
            env = conn.recv(MsgType.ANNOUNCE)
        except ConnectionError:
            return VoteOutcome(package, "rejected", None)
        voter.on_announce(env.body[i : i + 16] for i in range(0, len(env.body), 16))
        env = conn.recv()
        if env.msg_type is MsgType.RELAY_AV:
            conn.send(MsgType.RELAY_VA, voter.on_relay(env.body))
            env = conn.recv(MsgType.BOARD_EXPORT)
        if env.msg_type is not MsgType.BOARD_EXPORT:
            raise ProtocolError(f"unexpected {env.msg_type.name}")
        export = env.body.decode()
    finally:
        conn.close()
    return VoteOutcome(package, verify_package(package, PublishedBoard.parse(export)).value, export)


def run_socket_election(manifest, setup, choices, seed, timeout=DEFAULT_TIMEOUT):
    """All parties in one process over loopback TCP; returns the admin's export."""
    counter = CounterServer(manifest, setup.counter, seed)
    admin = AdminServer(manifest, setup.admin, counter.address, seed, timeout=timeout)
    outcomes = {}
    threads = [threading.Thread(target=counter.serve, daemon=True)]

    def cast(cred, choice):
        outcomes[cred.index] = vote(admin.address, manifest, cred, choice, seed, timeout)

    for cred in setup.voters:
        if isinstance(choices.get(cred.index), int):
            threads.append(threading.Thread(target=cast, args=(cred, choices[cred.index]), daemon=True))
    for t in threads:
        t.start()
    export = admin.serve()
    for t in threads:
        t.join(timeout)
    return export, outcomes
