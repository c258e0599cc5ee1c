"""Divergence witnesses for bounded-memory broadcast protocols.

The construction: run a protocol with one party kept dormant, take system
states just before the sender reads an input, and look for three of them
``i1 < i2 < i3`` with the same configuration and ordered network matrices
(exactly equal states in fully-bounded mode). Cutting the run there gives
segments R1, R2, R3, and the runs R1 R2 R2 R3 and R1 R2 R3 R2 end in the same
system state. When the input segments of R2 and R3 share no common divider,
the receivers' delivered sequences usually differ, which a replay confirms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations, islice
from typing import Iterator, Optional

from .engine import (
    ByzantineAssume,
    Executor,
    InputStream,
    Outcome,
    ProtocolSpec,
    ReadInput,
    Receive,
    Run,
    SchedulerPolicy,
    Setup,
    Simulation,
    SpliceError,
    InfeasibleStep,
    concat,
    replay,
    same_state,
    states_along,
)
from .netmodel import longest_chain
from .sequences import find_divider_free_cut


# -- the 1-bit echo candidate -------------------------------------------------


def echo_protocol(capacity: int = 1) -> ProtocolSpec:
    """Sender forwards each input once; receivers deliver whatever arrives.

    Every party remembers one bit. This is a bounded-memory protocol that a
    divergence witness is expected to break.
    """

    def on_sender(state, event, peers):
        if type(event) is ReadInput:
            x = event.value
            return Outcome(x, tuple((p, x) for p in peers))
        return Outcome(state)

    def on_receiver(state, event, sender):
        if type(event) is Receive and event.src == sender:
            return Outcome(event.msg, (), event.msg)
        return Outcome(state)

    return ProtocolSpec(
        name="echo",
        init_sender=lambda peers: 0,
        init_receiver=lambda: 0,
        on_sender=on_sender,
        on_receiver=on_receiver,
        wants_input=lambda state: True,
        state_bound=2,
        capacity=capacity,
        random_state=lambda rng, is_sender, peers, alphabet: rng.choice(alphabet),
        format_state=str,
        parse_state=lambda text, is_sender: int(text),
        params=(("capacity", capacity),),
    )


# -- snapshots and repeats --------------------------------------------------


@dataclass(frozen=True)
class Snapshot:
    step: int
    state: object  # SystemState before the sender's input read at ``step``
    cursor: int  # number of inputs read before this step
    value: int  # the value read at ``step``


def snapshot_stream(run: Run) -> list:
    """One snapshot per sender input read, in step order."""
    sender = run.setup.sender
    reads = [i for i, r in enumerate(run.steps) if r.party == sender and type(r.event) is ReadInput]
    if not reads:
        return []
    states = states_along(run)
    return [
        Snapshot(i, states[i], k, run.steps[i].event.value) for k, i in enumerate(reads)
    ]


def _exact_key(state) -> tuple:
    return (state.states, state.network, state.crashed, state.byzantine)


def iter_repeats(snapshots: list, mode: str, alphabet=(0, 1), start: int = 0,
                 horizon: Optional[int] = None, max_pairs: int = 1024) -> Iterator[tuple]:
    """Candidate triples of step indices, earliest first within each class.

    Snapshots at steps before ``start`` are ignored. ``horizon`` bounds the
    input reads used for the divider-free condition (default: all reads seen).
    At most ``max_pairs`` (i1, i2) pairs are examined per class.
    """
    snaps = [s for s in snapshots if s.step >= start]
    if not snaps:
        return
    reads = tuple(s.value for s in snapshots)
    horizon = len(reads) if horizon is None else min(horizon, len(reads))
    groups: dict = {}
    for s in snaps:
        key = s.state.configuration() if mode == "semi-bounded" else _exact_key(s.state)
        groups.setdefault(key, []).append(s)
    for members in groups.values():
        if len(members) < 3:
            continue
        if mode == "semi-bounded":
            chain_idx = longest_chain([m.state.matrix(alphabet) for m in members])
            chain = [members[i] for i in chain_idx]
        else:
            chain = members
        for ai, bi in islice(combinations(range(len(chain)), 2), max_pairs):
            a, b = chain[ai], chain[bi]
            if b.cursor >= horizon:
                continue
            r0 = find_divider_free_cut(reads, a.cursor, b.cursor, horizon)
            if r0 is None:
                continue
            c = next((m for m in chain[bi + 1:] if m.cursor >= r0), None)
            if c is not None:
                yield (a.step, b.step, c.step)


def find_repeat(snapshots: list, mode: str, alphabet=(0, 1), start: int = 0) -> Optional[tuple]:
    return next(iter_repeats(snapshots, mode, alphabet, start), None)


# -- swapping ---------------------------------------------------------------


def _piece(base: Run, a: int, b: int, start) -> Run:
    steps = tuple(replace(r, index=k) for k, r in enumerate(base.steps[a:b]))
    if steps and steps[0].faults:
        raise SpliceError("segment may not begin with a fault")
    return Run(base.setup, start, steps)


def build_swapped_runs(base: Run, i1: int, i2: int, i3: int, states=None) -> tuple:
    """``(R1 R2 R2 R3, R1 R2 R3 R2)`` for the cut points ``i1 < i2 < i3``."""
    if not i1 < i2:
        raise SpliceError("R2 must be nonempty")
    if not i2 < i3 <= len(base.steps):
        raise SpliceError("R3 must be nonempty and inside the run")
    if any(r.faults for r in base.steps[i1:i3]):
        raise SpliceError("segments R2 and R3 must be fault-free")
    if states is None:
        states = states_along(base)
    r1 = Run(base.setup, base.initial, base.steps[:i1])
    r2 = _piece(base, i1, i2, states[i1])
    r3 = _piece(base, i2, i3, states[i2])
    r5 = concat(concat(concat(r1, r2), r2), r3)
    r6 = concat(concat(concat(r1, r2), r3), r2)
    return r5, r6


# -- witnesses --------------------------------------------------------------


@dataclass
class Witness:
    r5: Run
    r6: Run
    final: object
    seq5: dict
    seq6: dict
    dormant: int
    triple: tuple = ()
    wake: Optional[Run] = None

    def first_difference(self) -> Optional[tuple]:
        """``(party, position)`` of the first differing delivery."""
        for p in sorted(self.seq5):
            a, b = self.seq5[p], self.seq6[p]
            if a != b:
                k = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
                return p, k
        return None

    def summary(self) -> str:
        setup = self.r5.setup
        fmt = setup.protocol.format_state
        init = self.r5.initial
        diff = self.first_difference()
        lines = [
            f"protocol={setup.protocol.name} n={setup.n} mode={setup.mode} dormant={self.dormant}",
            "initial_states=" + " ".join(fmt(s) for s in init.states),
            f"cut_steps={','.join(map(str, self.triple))}",
            f"r5_steps={len(self.r5)} r6_steps={len(self.r6)}",
        ]
        if diff is not None:
            p, k = diff
            lines.append(f"differ party={p} position={k}")
            lines.append("seq5=" + "".join(map(str, self.seq5[p])))
            lines.append("seq6=" + "".join(map(str, self.seq6[p])))
        if self.wake is not None:
            lines.append(f"wake_steps={len(self.wake)}")
        return "\n".join(lines) + "\n"


def verify_witness(w: Witness, shared_initial=None) -> bool:
    """Replay both runs and check the witness conditions."""
    start = shared_initial if shared_initial is not None else w.r5.initial
    try:
        f5, d5 = replay(w.r5, start)
        f6, d6 = replay(w.r6, start)
    except InfeasibleStep:
        return False
    if not same_state(f5, f6):
        return False
    if w.final is not None and not same_state(f5, w.final):
        return False
    if any(r.party == w.dormant for r in w.r5.steps + w.r6.steps):
        return False
    if d5 == d6:
        return False
    if w.wake is not None:
        try:
            replay(w.wake, f5)
        except Exception:
            return False
    return True


def _try_triple(base: Run, triple: tuple, dormant: int, states) -> Optional[Witness]:
    try:
        r5, r6 = build_swapped_runs(base, *triple, states=states)
    except SpliceError:
        return None
    f5, d5 = replay(r5)
    _, d6 = replay(r6)
    w = Witness(r5, r6, f5, d5, d6, dormant, triple)
    return w if verify_witness(w, base.initial) else None


def _dormant_party(setup: Setup) -> int:
    return max(setup.peers)


def _segments_disagree(base: Run, i1: int, i2: int, i3: int) -> bool:
    """Whether R1 R2 R2 R3 and R1 R2 R3 R2 can deliver differently.

    Replays reproduce the recorded deliveries, so the two orders differ
    exactly when some party's R2 and R3 deliveries do not commute.
    """
    n = base.setup.n
    d2 = [[] for _ in range(n)]
    d3 = [[] for _ in range(n)]
    for lo, hi, acc in ((i1, i2, d2), (i2, i3, d3)):
        for r in base.steps[lo:hi]:
            if r.delivered is not None:
                acc[r.party].append(r.delivered)
    return any(a + b != b + a for a, b in zip(d2, d3))


def _witness_from(base: Run, snaps: list, mode: str, dormant: int, tried: set,
                  max_tries: int, start: int = 0) -> Optional[Witness]:
    states = None
    tries = 0
    for scanned, triple in enumerate(iter_repeats(snaps, mode, base.setup.alphabet, start)):
        if triple in tried:
            continue
        tried.add(triple)
        if scanned >= 50 * max_tries:
            break
        if not _segments_disagree(base, *triple):
            continue
        if states is None:
            states = states_along(base)
        w = _try_triple(base, triple, dormant, states)
        if w is not None:
            return w
        tries += 1
        if tries >= max_tries:
            break
    return None


def search(candidate: ProtocolSpec, mode: str = "semi-bounded", horizon: int = 100_000,
           seed: int = 0, n: int = 3, capacity: int = 2,
           inputs: Optional[InputStream] = None, max_tries: int = 64) -> Optional[Witness]:
    """Drive ``candidate`` and return the first verified witness, or ``None``.

    ``horizon`` counts input reads. The run is extended in doubling chunks
    and searched after each one. Raises ``StateBoundExceeded`` when the
    candidate visits more states than it declares.
    """
    if horizon <= 0:
        return None
    setup = Setup(candidate, n, 0, capacity if mode == "fully-bounded" else None, "drop-new", (0, 1))
    dormant = _dormant_party(setup)
    inputs = inputs or InputStream.incremental()
    ex = Executor(Simulation(setup, inputs), SchedulerPolicy(seed, dormant=(dormant,)), track_states=True)
    snaps: list = []
    tried: set = set()
    target = 32
    while True:
        goal = min(target, horizon)
        budget = len(ex.steps) + 64 * goal * n + 1000
        while len(snaps) < goal and len(ex.steps) < budget:
            k = len(ex.steps)
            faults = ex.apply_faults(k)
            choice = ex.scheduler.choose(ex.state, inputs)
            if choice is None:
                break
            party, ev = choice
            if party == setup.sender and type(ev) is ReadInput:
                snaps.append(Snapshot(k, ex.state, len(snaps), ev.value))
            ex.do(party, ev, faults)
        w = _witness_from(ex.run(), snaps, mode, dormant, tried, max_tries)
        if w is not None:
            return w
        if len(snaps) >= horizon or len(snaps) < goal:
            return None
        target *= 2


# -- Byzantine sender -------------------------------------------------------


def byzantine_scenario(capacity: int = 1, n: int = 3, horizon: int = 20_000, seed: int = 0,
                       script: bool = True, value: int = 0, wake: int = 0,
                       max_tries: int = 256) -> Optional[Witness]:
    """Witness against SuRB when the sender is Byzantine.

    The Byzantine sender runs the honest code but chooses its own inputs: it
    keeps feeding ``x`` until every active honest receiver's current block of
    ``x`` deliveries is longer than its previous block of the other symbol,
    then switches. The resulting fully-bounded run is searched for a
    repeated system state. With ``script=False`` the sender is honest and
    reads ``value`` forever. ``horizon`` counts engine steps. ``wake`` appends
    that many fair steps, with the dormant party scheduled, after the common
    final state.
    """
    from .surb import surb_protocol

    if n < 2:
        raise ValueError("need at least two parties")
    setup = Setup(surb_protocol(capacity), n, 0, capacity, "drop-new", (0, 1))
    dormant = _dormant_party(setup)
    active = tuple(p for p in setup.peers if p != dormant)
    inputs = InputStream.repeat(value)
    faults = ((0, ByzantineAssume(setup.sender)),) if script else ()
    ex = Executor(Simulation(setup, inputs, faults), SchedulerPolicy(seed, dormant=(dormant,)))
    snaps: list = []
    blocks = {p: [None, 0, 0] for p in active}  # symbol, current length, previous length
    x = value
    for k in range(horizon):
        applied = ex.apply_faults(k)
        choice = ex.scheduler.choose(ex.state, inputs)
        if choice is None:
            break
        party, ev = choice
        if party == setup.sender and type(ev) is ReadInput:
            if script:
                ev = ReadInput(x)
            snaps.append(Snapshot(k, ex.state, len(snaps), ev.value))
        rec = ex.do(party, ev, applied)
        if rec.delivered is not None and party in blocks:
            b = blocks[party]
            if b[0] == rec.delivered:
                b[1] += 1
            else:
                b[0], b[2], b[1] = rec.delivered, b[1], 1
        if script and all(b[0] == x and b[1] > b[2] for b in blocks.values()):
            x = 1 - x
    base = ex.run()
    start = 1 if script else 0
    w = _witness_from(base, snaps, "fully-bounded", dormant, set(), max_tries, start)
    if w is not None and wake > 0:
        policy = SchedulerPolicy(seed + 1)
        wx = Executor(Simulation(setup, inputs, (), w.final), policy)
        wx.advance(wake)
        w.wake = wx.run()
        if not verify_witness(w, base.initial):
            return None
    return w


def write_witness(w: Witness, out_dir) -> None:
    import os

    from .trace import write_trace

    os.makedirs(out_dir, exist_ok=True)
    write_trace(w.r5, os.path.join(out_dir, "r5.trace"))
    write_trace(w.r6, os.path.join(out_dir, "r6.trace"))
    if w.wake is not None:
        write_trace(w.wake, os.path.join(out_dir, "wake.trace"))
    with open(os.path.join(out_dir, "witness.txt"), "w", encoding="utf-8") as fh:
        fh.write(w.summary())
