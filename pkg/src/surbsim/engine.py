"""Step semantics of the bounded asynchronous model.

A step picks a party, optionally hands it one pending message (or, for the
sender, the next input value), runs the party's transition and appends its
sends to the outgoing links. In fully-bounded mode a send to a full link loses
one message, chosen by the drop policy. Runs are recorded step by step and can
be replayed from any compatible system state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Callable, NamedTuple, Optional, Sequence, Union

from .netmodel import NetworkMatrix, link_list, matrix_of
from .sequences import incremental_symbol

DROP_POLICIES = ("drop-new", "drop-oldest", "drop-seeded-random")
MODES = ("semi-bounded", "fully-bounded")


class EngineError(Exception):
    pass


class InfeasibleStep(EngineError):
    """A step cannot be applied at the given system state."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"step {index}: {reason}")
        self.index = index
        self.reason = reason


class SpliceError(EngineError):
    pass


class StateBoundExceeded(EngineError):
    pass


# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class Receive:
    src: int
    msg: int


@dataclass(frozen=True)
class ReadInput:
    value: int


@dataclass(frozen=True)
class NoReceive:
    pass


NO_RECEIVE = NoReceive()
Event = Union[Receive, ReadInput, NoReceive]


class Outcome(NamedTuple):
    state: Any
    sends: tuple = ()
    delivered: Optional[int] = None


# -- protocols and static setup ---------------------------------------------


@dataclass(frozen=True)
class ProtocolSpec:
    """Pluggable per-role transition functions.

    ``on_sender(state, event, peers)`` and ``on_receiver(state, event, sender)``
    must be deterministic and return an :class:`Outcome` whose ``sends`` is a
    tuple of ``(dst, symbol)`` pairs.
    """

    name: str
    init_sender: Callable[[tuple], Any]
    init_receiver: Callable[[], Any]
    on_sender: Callable[[Any, Event, tuple], Outcome]
    on_receiver: Callable[[Any, Event, int], Outcome]
    wants_input: Callable[[Any], bool]
    state_bound: int
    capacity: int = 1
    random_state: Optional[Callable[..., Any]] = None
    format_state: Callable[[Any], str] = repr
    parse_state: Optional[Callable[[str, bool], Any]] = None
    params: tuple = ()


@dataclass(frozen=True)
class InputStream:
    """External input: ``repeat`` one value, the ``incremental`` stream, or ``explicit`` values."""

    kind: str = "repeat"
    values: tuple = (0,)

    def __post_init__(self):
        if self.kind not in ("repeat", "incremental", "explicit"):
            raise ValueError(f"unknown input kind {self.kind!r}")
        if self.kind == "repeat" and len(self.values) != 1:
            raise ValueError("repeat input takes exactly one value")

    @classmethod
    def repeat(cls, v: int) -> "InputStream":
        return cls("repeat", (v,))

    @classmethod
    def incremental(cls) -> "InputStream":
        return cls("incremental", ())

    @classmethod
    def explicit(cls, values: Sequence[int]) -> "InputStream":
        return cls("explicit", tuple(values))

    def at(self, i: int) -> Optional[int]:
        if self.kind == "repeat":
            return self.values[0]
        if self.kind == "incremental":
            return incremental_symbol(i)
        return self.values[i] if i < len(self.values) else None

    def __str__(self) -> str:
        if self.kind == "repeat":
            return f"repeat:{self.values[0]}"
        if self.kind == "incremental":
            return "incremental"
        return "explicit:" + ",".join(map(str, self.values))

    @classmethod
    def parse(cls, text: str) -> "InputStream":
        kind, _, rest = text.strip().partition(":")
        if kind == "repeat":
            return cls.repeat(int(rest))
        if kind == "incremental":
            return cls.incremental()
        if kind == "explicit":
            return cls.explicit([int(v) for v in rest.split(",") if v.strip()])
        raise ValueError(f"unknown input spec {text!r}")


@dataclass(frozen=True)
class Setup:
    protocol: ProtocolSpec
    n: int
    sender: int = 0
    capacity: Optional[int] = None  # None: unbounded, lossless links
    drop_policy: str = "drop-new"
    alphabet: tuple = (0, 1)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two parties")
        if not 0 <= self.sender < self.n:
            raise ValueError("sender index out of range")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("link capacity must be positive")
        if self.drop_policy not in DROP_POLICIES:
            raise ValueError(f"unknown drop policy {self.drop_policy!r}")
        if not self.alphabet:
            raise ValueError("alphabet must be nonempty")

    @property
    def mode(self) -> str:
        return "semi-bounded" if self.capacity is None else "fully-bounded"

    @cached_property
    def links(self) -> tuple:
        return link_list(self.n)

    @cached_property
    def link_index(self) -> dict:
        return {lk: i for i, lk in enumerate(self.links)}

    @cached_property
    def incoming(self) -> tuple:
        return tuple(
            tuple(i for i, (_, d) in enumerate(self.links) if d == p)
            for p in range(self.n)
        )

    @cached_property
    def peers(self) -> tuple:
        return tuple(p for p in range(self.n) if p != self.sender)

    @property
    def injection_bound(self) -> int:
        return self.capacity if self.capacity is not None else self.protocol.capacity

    def initial_state(self) -> "SystemState":
        states = tuple(
            self.protocol.init_sender(self.peers) if p == self.sender
            else self.protocol.init_receiver()
            for p in range(self.n)
        )
        return SystemState(states, ((),) * len(self.links))


# -- system state, faults, records ------------------------------------------


@dataclass(frozen=True)
class SystemState:
    states: tuple
    network: tuple  # per link: pending symbols in arrival order
    cursor: int = 0
    crashed: frozenset = frozenset()
    byzantine: tuple = ()  # (party, script-or-None) pairs

    def configuration(self) -> tuple:
        """Party states plus fault status; the input cursor is excluded."""
        return (self.states, self.crashed, self.byzantine)

    def matrix(self, alphabet: Sequence[int]) -> NetworkMatrix:
        return matrix_of(self.network, alphabet)

    def canonical(self) -> tuple:
        """Key that treats each link as a multiset."""
        return (
            self.states,
            tuple(tuple(sorted(lk)) for lk in self.network),
            self.cursor,
            self.crashed,
            self.byzantine,
        )

    def is_byzantine(self, party: int) -> bool:
        return any(p == party for p, _ in self.byzantine)


def same_state(a: SystemState, b: SystemState) -> bool:
    return a.canonical() == b.canonical()


@dataclass(frozen=True)
class Crash:
    party: int


@dataclass(frozen=True)
class Transient:
    """Overwrite party states and replace link contents (at most c̄ per link).

    ``opaque`` marks a fault read back from a trace file, whose payload is not
    recorded there.
    """

    overwrites: tuple = ()  # (party, state)
    injections: tuple = ()  # ((src, dst), symbols)
    opaque: bool = False


@dataclass(frozen=True)
class RandomTransient:
    """Resolved into a concrete :class:`Transient` at execution time."""

    parties: Optional[tuple] = None


@dataclass(frozen=True)
class ByzantineAssume:
    party: int
    script: Optional[Callable[[Any, Event], Outcome]] = None
    state: Any = None
    rewrite: bool = False


Fault = Union[Crash, Transient, RandomTransient, ByzantineAssume]


@dataclass(frozen=True)
class Send:
    dst: int
    msg: int
    lost: bool = False
    evicted: Optional[int] = None  # pending symbol dropped instead of the new one


@dataclass(frozen=True)
class StepRecord:
    index: int
    party: int
    event: Event
    sends: tuple = ()
    delivered: Optional[int] = None
    faults: tuple = ()


@dataclass(frozen=True)
class Run:
    setup: Setup
    initial: Optional[SystemState]
    steps: tuple = ()

    def __len__(self) -> int:
        return len(self.steps)


# -- faults -----------------------------------------------------------------


def random_transient(setup: Setup, rng: random.Random, parties=None) -> Transient:
    """Adversarially sampled transient fault touching every link and the chosen parties."""
    proto = setup.protocol
    if proto.random_state is None:
        raise EngineError(f"protocol {proto.name} cannot sample arbitrary states")
    targets = range(setup.n) if parties is None else parties
    overwrites = tuple(
        (p, proto.random_state(rng, p == setup.sender, setup.peers, setup.alphabet))
        for p in targets
    )
    bound = setup.injection_bound
    injections = []
    for lk in setup.links:
        if rng.random() < 0.5:
            content = (rng.choice(setup.alphabet),) * bound
        else:
            content = tuple(
                rng.choice(setup.alphabet) for _ in range(rng.randint(0, bound))
            )
        injections.append((lk, content))
    return Transient(overwrites, tuple(injections))


def apply_fault(setup: Setup, sys: SystemState, fault: Fault) -> SystemState:
    if isinstance(fault, Crash):
        return replace(sys, crashed=sys.crashed | {fault.party})
    if isinstance(fault, ByzantineAssume):
        byz = tuple(e for e in sys.byzantine if e[0] != fault.party)
        byz = tuple(sorted(byz + ((fault.party, fault.script),), key=lambda e: e[0]))
        states = sys.states
        if fault.rewrite:
            states = states[:fault.party] + (fault.state,) + states[fault.party + 1:]
        return replace(sys, byzantine=byz, states=states)
    if isinstance(fault, Transient):
        if fault.opaque:
            raise EngineError("transient fault payload is not available (read from a trace)")
        states = list(sys.states)
        for p, st in fault.overwrites:
            states[p] = st
        net = list(sys.network)
        bound = setup.injection_bound
        for lk, content in fault.injections:
            if len(content) > bound:
                raise EngineError(
                    f"transient injection of {len(content)} messages on link "
                    f"{lk[0]}>{lk[1]} exceeds the bound {bound}"
                )
            net[setup.link_index[tuple(lk)]] = tuple(content)
        return replace(sys, states=tuple(states), network=tuple(net))
    raise EngineError(f"unresolved fault {fault!r}")


# -- the step ---------------------------------------------------------------


def step(
    setup: Setup,
    sys: SystemState,
    party: int,
    event: Event,
    *,
    inputs: Optional[InputStream] = None,
    rng: Optional[random.Random] = None,
    index: int = 0,
    faults: tuple = (),
    recorded: Optional[StepRecord] = None,
) -> tuple[SystemState, StepRecord]:
    """Apply one step. ``recorded`` replays the loss decisions of an earlier run
    and checks that the transition reproduces it."""
    if not 0 <= party < setup.n:
        raise InfeasibleStep(index, f"no party {party}")
    if party in sys.crashed:
        raise InfeasibleStep(index, f"party {party} has crashed")
    proto = setup.protocol
    state = sys.states[party]
    net = list(sys.network)
    cursor = sys.cursor
    script = None
    byz = False
    if sys.byzantine:
        for p, s in sys.byzantine:
            if p == party:
                byz, script = True, s

    etype = type(event)
    if etype is Receive:
        lk = setup.link_index.get((event.src, party))
        if lk is None:
            raise InfeasibleStep(index, f"no link {event.src}>{party}")
        pending = net[lk]
        try:
            k = pending.index(event.msg)
        except ValueError:
            raise InfeasibleStep(
                index, f"message {event.msg} not pending on link {event.src}>{party}"
            ) from None
        net[lk] = pending[:k] + pending[k + 1:]
    elif etype is ReadInput:
        if party != setup.sender:
            raise InfeasibleStep(index, f"party {party} is not the sender")
        if not byz:
            if not proto.wants_input(state):
                raise InfeasibleStep(index, "sender is not ready to read input")
            if inputs is not None:
                v = inputs.at(cursor)
                if v is None:
                    raise InfeasibleStep(index, "input stream exhausted")
                if v != event.value:
                    raise InfeasibleStep(
                        index, f"input {event.value} is not at the top of the stream ({v})"
                    )
            cursor += 1
    elif etype is not NoReceive:
        raise InfeasibleStep(index, f"unknown event {event!r}")

    if script is not None:
        out = script(state, event)
    elif party == setup.sender:
        out = proto.on_sender(state, event, setup.peers)
    else:
        out = proto.on_receiver(state, event, setup.sender)

    if recorded is not None:
        if out.delivered != recorded.delivered or len(out.sends) != len(recorded.sends) or any(
            (d, m) != (r.dst, r.msg) for (d, m), r in zip(out.sends, recorded.sends)
        ):
            raise InfeasibleStep(index, "transition output differs from the record")

    cap = setup.capacity
    link_index = setup.link_index
    sends = []
    for i, (dst, msg) in enumerate(out.sends):
        lk = link_index.get((party, dst))
        if lk is None:
            raise EngineError(f"party {party} sent to invalid destination {dst}")
        cur = net[lk]
        rec = recorded.sends[i] if recorded is not None else None
        if cap is None or len(cur) < cap:
            if rec is not None and rec.lost:
                raise InfeasibleStep(index, f"recorded loss on {party}>{dst} cannot occur")
            net[lk] = cur + (msg,)
            sends.append(Send(dst, msg))
            continue
        if rec is not None:
            if not rec.lost:
                raise InfeasibleStep(index, f"link {party}>{dst} is full; recorded send was not lost")
            evicted = rec.evicted
            if evicted is not None and evicted not in cur:
                raise InfeasibleStep(index, f"recorded eviction of {evicted} impossible on {party}>{dst}")
        elif setup.drop_policy == "drop-new":
            evicted = None
        elif setup.drop_policy == "drop-oldest":
            evicted = cur[0]
        else:
            if rng is None:
                raise EngineError("drop-seeded-random needs an rng")
            j = rng.randrange(len(cur) + 1)
            evicted = None if j == len(cur) else cur[j]
        if evicted is None:
            sends.append(Send(dst, msg, True, None))
        else:
            k = cur.index(evicted)
            net[lk] = cur[:k] + cur[k + 1:] + (msg,)
            sends.append(Send(dst, msg, True, evicted))

    states = sys.states[:party] + (out.state,) + sys.states[party + 1:]
    new = SystemState(states, tuple(net), cursor, sys.crashed, sys.byzantine)
    return new, StepRecord(index, party, event, tuple(sends), out.delivered, tuple(faults))


# -- scheduling -------------------------------------------------------------


@dataclass(frozen=True)
class SchedulerPolicy:
    """Seeded random scheduling, optionally preceded by a scripted prefix.

    Script entries are ``(party, selector)`` with selector one of ``none``,
    ``input``, ``input:<v>``, ``recv`` (oldest pending message) or
    ``recv:<src>:<m>``. ``fairness`` is the window K; ``dormant`` parties are
    never scheduled.
    """

    seed: int = 0
    fairness: Optional[int] = None
    script: tuple = ()
    dormant: tuple = ()

    @classmethod
    def seeded(cls, seed: int, fairness: Optional[int] = None, dormant=()) -> "SchedulerPolicy":
        return cls(seed, fairness, (), tuple(dormant))

    @classmethod
    def scripted(cls, entries, seed: int = 0, fairness=None, dormant=()) -> "SchedulerPolicy":
        return cls(seed, fairness, tuple(entries), tuple(dormant))


def default_fairness(setup: Setup) -> int:
    return 64 * setup.n * setup.protocol.capacity


class ScheduleError(EngineError):
    pass


class Scheduler:
    """Chooses the next (party, event); keeps per-message ages for fairness.

    ``ages`` mirrors each link's pending list; an age counts the times the
    destination was scheduled while the message stayed pending. No message
    is passed over K times, provided fewer than K messages are pending for
    its destination (always true on bounded links, since K > (n-1)·c̄).
    """

    def __init__(self, setup: Setup, policy: SchedulerPolicy, sys: SystemState):
        self.setup = setup
        self.policy = policy
        self.rng = random.Random(policy.seed)
        self.window = policy.fairness or default_fairness(setup)
        self.script = list(policy.script)
        self.ages = [[0] * len(lk) for lk in sys.network]

    def sync(self, sys: SystemState) -> None:
        for i, lk in enumerate(sys.network):
            if len(self.ages[i]) != len(lk):
                self.ages[i] = [0] * len(lk)

    def reset(self, sys: SystemState) -> None:
        self.ages = [[0] * len(lk) for lk in sys.network]

    def _must_receive(self, incoming: list) -> bool:
        """Force a receive when the j-th oldest pending message has age >= K - j.

        Receiving the oldest message whenever this holds keeps every age
        below K, as long as fewer than K messages are pending for the party.
        """
        total = sum(len(self.ages[lk]) for lk in incoming)
        if total >= self.window:
            return True
        ages = sorted((a for lk in incoming for a in self.ages[lk]), reverse=True)
        return any(a + j >= self.window for j, a in enumerate(ages, 1))

    def _scripted(self, sys: SystemState, inputs) -> tuple[int, Event]:
        party, sel = self.script.pop(0)
        parts = sel.split(":")
        if parts[0] == "none":
            return party, NO_RECEIVE
        if parts[0] == "input":
            if len(parts) > 1:
                return party, ReadInput(int(parts[1]))
            v = inputs.at(sys.cursor) if inputs is not None else None
            if v is None:
                raise ScheduleError("scripted input read with no input available")
            return party, ReadInput(v)
        if parts[0] == "recv":
            if len(parts) == 3:
                return party, Receive(int(parts[1]), int(parts[2]))
            best = None
            for lk in self.setup.incoming[party]:
                if sys.network[lk] and (best is None or self.ages[lk][0] > self.ages[best][0]):
                    best = lk
            if best is None:
                raise ScheduleError(f"scripted receive for party {party} with nothing pending")
            return party, Receive(self.setup.links[best][0], sys.network[best][0])
        raise ScheduleError(f"unknown selector {sel!r}")

    def choose(self, sys: SystemState, inputs: Optional[InputStream]) -> Optional[tuple[int, Event]]:
        if self.script:
            return self._scripted(sys, inputs)
        setup = self.setup
        alive = [
            p for p in range(setup.n)
            if p not in sys.crashed and p not in self.policy.dormant
        ]
        if not alive:
            return None
        rng = self.rng
        party = alive[rng.randrange(len(alive))]
        net = sys.network
        incoming = [lk for lk in setup.incoming[party] if net[lk]]
        if incoming and self._must_receive(incoming):
            oldest = max(incoming, key=lambda lk: self.ages[lk][0])
            return party, Receive(setup.links[oldest][0], net[oldest][0])
        options = []
        if incoming:
            options.append(("recv", 4))
        value = None
        if party == setup.sender and setup.protocol.wants_input(sys.states[party]):
            value = inputs.at(sys.cursor) if inputs is not None else None
            if value is not None:
                options.append(("input", 4))
        options.append(("none", 1))
        roll = rng.random() * sum(w for _, w in options)
        for kind, w in options:
            if roll < w:
                break
            roll -= w
        if kind == "recv":
            total = sum(len(net[lk]) for lk in incoming)
            j = rng.randrange(total)
            for lk in incoming:
                if j < len(net[lk]):
                    return party, Receive(setup.links[lk][0], net[lk][j])
                j -= len(net[lk])
        if kind == "input":
            return party, ReadInput(value)
        return party, NO_RECEIVE

    def observe(self, before: SystemState, rec: StepRecord) -> None:
        setup = self.setup
        ages = self.ages
        for lk in setup.incoming[rec.party]:
            a = ages[lk]
            for i in range(len(a)):
                a[i] += 1
        content = {}
        if type(rec.event) is Receive:
            lk = setup.link_index[(rec.event.src, rec.party)]
            cur = list(before.network[lk])
            k = cur.index(rec.event.msg)
            del cur[k]
            del ages[lk][k]
            content[lk] = cur
        for s in rec.sends:
            lk = setup.link_index[(rec.party, s.dst)]
            cur = content.setdefault(lk, list(before.network[lk]))
            if s.lost and s.evicted is None:
                continue
            if s.lost:
                k = cur.index(s.evicted)
                del cur[k]
                del ages[lk][k]
            cur.append(s.msg)
            ages[lk].append(0)


# -- execution --------------------------------------------------------------


@dataclass(frozen=True)
class Simulation:
    """Everything needed to execute: setup, input, fault script, start state."""

    setup: Setup
    inputs: InputStream = field(default_factory=InputStream)
    faults: tuple = ()  # (step index, Fault)
    initial: Optional[SystemState] = None


def fault_rng(seed: int, index: int) -> random.Random:
    return random.Random(f"{seed}:fault:{index}")


class Executor:
    """Incremental execution of a simulation under a scheduler policy."""

    def __init__(self, sim: Simulation, policy: SchedulerPolicy, track_states: bool = False):
        self.sim = sim
        self.setup = sim.setup
        self.policy = policy
        self.state = sim.initial or sim.setup.initial_state()
        self.initial = self.state
        self.scheduler = Scheduler(self.setup, policy, self.state)
        self.drop_rng = random.Random(f"{policy.seed}:drops")
        self.steps: list[StepRecord] = []
        self.faults: dict[int, list] = {}
        for k, f in sim.faults:
            self.faults.setdefault(k, []).append(f)
        self.halted = False
        self.seen = [set() for _ in range(self.setup.n)] if track_states else None
        if self.seen is not None:
            self._track(self.state)

    def _track(self, sys: SystemState) -> None:
        bound = self.setup.protocol.state_bound
        for p, st in enumerate(sys.states):
            seen = self.seen[p]
            seen.add(st)
            if len(seen) > bound:
                raise StateBoundExceeded(
                    f"party {p} reached {len(seen)} distinct states, "
                    f"declared bound is {bound}"
                )

    def apply_faults(self, k: int) -> tuple:
        applied = []
        for f in self.faults.get(k, ()):
            if isinstance(f, RandomTransient):
                f = random_transient(self.setup, fault_rng(self.policy.seed, k), f.parties)
            self.state = apply_fault(self.setup, self.state, f)
            applied.append(f)
        if applied:
            self.scheduler.sync(self.state)
        return tuple(applied)

    def do(self, party: int, event: Event, faults: tuple = ()) -> StepRecord:
        k = len(self.steps)
        before = self.state
        self.state, rec = step(
            self.setup, before, party, event,
            inputs=self.sim.inputs, rng=self.drop_rng, index=k, faults=faults,
        )
        self.scheduler.observe(before, rec)
        self.steps.append(rec)
        if self.seen is not None:
            self._track(self.state)
        return rec

    def advance(self, count: int) -> None:
        for _ in range(count):
            if self.halted:
                return
            k = len(self.steps)
            faults = self.apply_faults(k)
            choice = self.scheduler.choose(self.state, self.sim.inputs)
            if choice is None:
                self.halted = True
                return
            self.do(choice[0], choice[1], faults)

    def run(self) -> Run:
        return Run(self.setup, self.initial, tuple(self.steps))


def execute(scenario, policy: Optional[SchedulerPolicy] = None, horizon: Optional[int] = None) -> Run:
    """Run a scenario for at most ``horizon`` steps.

    ``scenario`` is a :class:`Simulation` or anything with ``simulation()``,
    ``policy()`` and ``horizon`` (such as :class:`surbsim.scenario.Scenario`).
    """
    if hasattr(scenario, "simulation"):
        sim = scenario.simulation()
        policy = policy or scenario.policy()
        horizon = scenario.horizon if horizon is None else horizon
    else:
        sim = scenario
        policy = policy or SchedulerPolicy()
        if horizon is None:
            raise ValueError("horizon is required")
    ex = Executor(sim, policy)
    ex.advance(horizon)
    return ex.run()


# -- replay and composition -------------------------------------------------


def replay(run: Run, start: Optional[SystemState] = None, *, inputs: Optional[InputStream] = None):
    """Re-apply ``run`` from ``start``; return ``(final state, delivered per party)``.

    Raises :class:`InfeasibleStep` carrying the position of the first step
    that cannot be applied.
    """
    setup = run.setup
    sys = start if start is not None else run.initial
    if sys is None:
        raise EngineError("run has no initial state to replay from")
    delivered: dict[int, list] = {p: [] for p in range(setup.n)}
    for pos, rec in enumerate(run.steps):
        for f in rec.faults:
            sys = apply_fault(setup, sys, f)
        sys, out = step(
            setup, sys, rec.party, rec.event,
            inputs=inputs, index=pos, faults=rec.faults, recorded=rec,
        )
        if out.delivered is not None:
            delivered[rec.party].append(out.delivered)
    return sys, {p: tuple(v) for p, v in delivered.items()}


def states_along(run: Run, start: Optional[SystemState] = None) -> list[SystemState]:
    """System states before each step (after its faults), plus the final state."""
    setup = run.setup
    sys = start if start is not None else run.initial
    out = []
    for pos, rec in enumerate(run.steps):
        for f in rec.faults:
            sys = apply_fault(setup, sys, f)
        out.append(sys)
        sys, _ = step(setup, sys, rec.party, rec.event, index=pos, recorded=rec)
    out.append(sys)
    return out


def final_state(run: Run) -> SystemState:
    return replay(run)[0]


def segment(run: Run, a: int, b: int, start: Optional[SystemState] = None) -> Run:
    """Sub-run of steps ``[a, b)``, starting from the recorded state before step ``a``.

    ``start`` may supply that state when it is already known.
    """
    if start is None:
        prefix = Run(run.setup, run.initial, run.steps[:a])
        start = replay(prefix)[0]
    steps = tuple(replace(r, index=i) for i, r in enumerate(run.steps[a:b]))
    return Run(run.setup, start, steps)


class Splice(Enum):
    MATCHING = "matching-config"
    TRANSIENT = "transient"
    BYZANTINE_SENDER = "byzantine-sender"


def _first_mismatch(setup: Setup, a: SystemState, b: SystemState, skip=()) -> Optional[str]:
    for p in range(setup.n):
        if p not in skip and a.states[p] != b.states[p]:
            return f"party {p} internal state differs"
    if a.crashed != b.crashed:
        return "crash status differs"
    if a.byzantine != b.byzantine:
        return "byzantine status differs"
    return None


def concat(r1: Run, r2: Run, splice: Splice = Splice.MATCHING) -> Run:
    """``r1`` followed by ``r2``; splice variants insert a fault on the sender."""
    setup = r1.setup
    end = final_state(r1)
    start = r2.initial
    skip = () if splice is Splice.MATCHING else (setup.sender,)
    why = _first_mismatch(setup, end, start, skip)
    if why:
        raise SpliceError(f"cannot splice: {why}")
    m_end, m_start = end.matrix(setup.alphabet), start.matrix(setup.alphabet)
    for idx, (x, y) in enumerate(zip(m_start.flat, m_end.flat)):
        if x > y:
            i, j = divmod(idx, m_end.cols)
            src, dst = setup.links[j]
            raise SpliceError(
                f"cannot splice: network entry (symbol {setup.alphabet[i]}, link "
                f"{src}>{dst}) is {x} at the second run's start but {y} available"
            )
    steps2 = list(r2.steps)
    if splice is not Splice.MATCHING and end.states[setup.sender] != start.states[setup.sender]:
        if not steps2:
            raise SpliceError("a splice fault needs a nonempty second run")
        st = start.states[setup.sender]
        if splice is Splice.TRANSIENT:
            fault = Transient(overwrites=((setup.sender, st),))
        else:
            fault = ByzantineAssume(setup.sender, None, st, rewrite=True)
        steps2[0] = replace(steps2[0], faults=(fault,) + steps2[0].faults)
    offset = len(r1.steps)
    steps = r1.steps + tuple(replace(r, index=offset + i) for i, r in enumerate(steps2))
    out = Run(setup, r1.initial, steps)
    try:
        replay(out)
    except InfeasibleStep as exc:
        raise SpliceError(f"concatenation is infeasible: {exc}") from exc
    return out


def deliveries(run: Run, party: int) -> tuple:
    return tuple(r.delivered for r in run.steps if r.party == party and r.delivered is not None)
