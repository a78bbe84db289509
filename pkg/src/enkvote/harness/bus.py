"""Deterministic virtual-time message bus with scripted fault injection.

Messages sent at tick ``t`` arrive at ``t + latency``. Within a tick,
deliveries run in send order and timers run after every delivery for that
tick, so a reply that is exactly on time always beats its deadline.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field

from ..errors import DomainError, UnknownEndpointError
from .envelope import Envelope


class FaultKind(str, enum.Enum):
    NONE = "none"
    DROP = "drop"
    TAMPER = "tamper"
    DELAY = "delay"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind = FaultKind.NONE
    bit: int = 0
    ticks: int = 0

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def drop(cls):
        return cls(FaultKind.DROP)

    @classmethod
    def tamper(cls, bit):
        """Flip body bit ``bit``, counted MSB-first from the first body octet."""
        return cls(FaultKind.TAMPER, bit=bit)

    @classmethod
    def delay(cls, ticks):
        return cls(FaultKind.DELAY, ticks=ticks)

    @classmethod
    def duplicate(cls):
        return cls(FaultKind.DUPLICATE)


@dataclass
class FaultRule:
    """Apply ``fault`` to the ``occurrence``-th matching message (0 = every one)."""

    fault: Fault
    msg_type: int | None = None
    sender: str | None = None
    receiver: str | None = None
    occurrence: int = 1
    seen: int = field(default=0, compare=False)
    fired: int = field(default=0, compare=False)

    def matches(self, sender, receiver, env):
        if self.msg_type is not None and env.msg_type != self.msg_type:
            return False
        if self.sender is not None and sender != self.sender:
            return False
        if self.receiver is not None and receiver != self.receiver:
            return False
        self.seen += 1
        return self.occurrence == 0 or self.seen == self.occurrence


def flip_bit(body, bit):
    if not 0 <= bit < 8 * len(body):
        raise DomainError(f"bit {bit} outside a {len(body)}-octet body")
    out = bytearray(body)
    out[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(out)


@dataclass(frozen=True)
class LogEntry:
    tick: int
    sender: str
    receiver: str
    digest: str
    event: str = "deliver"


class RunLog:
    """Append-only record of bus traffic; equal seeds give equal logs."""

    def __init__(self):
        self._entries = []

    def append(self, entry):
        self._entries.append(entry)

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def digests(self):
        return [e.digest for e in self._entries]

    def lines(self):
        return [f"{e.tick} {e.event} {e.sender}->{e.receiver} {e.digest}" for e in self._entries]


@dataclass(frozen=True)
class Delivery:
    """What ``send`` did with a message: the fault applied and the arrival ticks."""

    fault: Fault
    arrivals: tuple


_MESSAGE, _TIMER = 0, 1


class Bus:
    def __init__(self, rules=(), *, latency=1):
        self.rules = list(rules)
        self.latency = latency
        self.now = 0
        self.log = RunLog()
        self._handlers = {}
        self._queue = []
        self._seq = itertools.count()

    def register(self, name, handler):
        """``handler(sender, envelope)`` is called on each delivery to ``name``."""
        self._handlers[name] = handler

    def add_rule(self, rule):
        self.rules.append(rule)

    def _fault_for(self, sender, receiver, env):
        fault = Fault.none()
        for rule in self.rules:
            if rule.matches(sender, receiver, env) and fault.kind is FaultKind.NONE:
                fault = rule.fault
                rule.fired += 1
        return fault

    def send(self, sender, receiver, env):
        if receiver not in self._handlers:
            raise UnknownEndpointError(receiver)
        fault = self._fault_for(sender, receiver, env)
        at = self.now + self.latency
        if fault.kind is FaultKind.DROP:
            self.log.append(LogEntry(self.now, sender, receiver, env.digest(), "drop"))
            return Delivery(fault, ())
        if fault.kind is FaultKind.TAMPER:
            env = Envelope(env.msg_type, flip_bit(env.body, fault.bit))
        elif fault.kind is FaultKind.DELAY:
            at += fault.ticks
        arrivals = [at]
        if fault.kind is FaultKind.DUPLICATE:
            arrivals.append(at)
        for tick in arrivals:
            heapq.heappush(self._queue, (tick, _MESSAGE, next(self._seq), (sender, receiver, env)))
        return Delivery(fault, tuple(arrivals))

    def at(self, tick, callback):
        """Run ``callback()`` at ``tick``, after that tick's deliveries."""
        heapq.heappush(self._queue, (max(tick, self.now), _TIMER, next(self._seq), callback))

    def after(self, ticks, callback):
        self.at(self.now + ticks, callback)

    @property
    def idle(self):
        return not self._queue

    def step(self):
        tick, kind, _, item = heapq.heappop(self._queue)
        self.now = tick
        if kind == _TIMER:
            item()
            return
        sender, receiver, env = item
        self.log.append(LogEntry(tick, sender, receiver, env.digest()))
        self._handlers[receiver](sender, env)

    def run(self, max_steps=1_000_000):
        steps = 0
        while self._queue:
            if steps >= max_steps:
                raise RuntimeError("bus did not go quiet")
            self.step()
            steps += 1
        return steps
