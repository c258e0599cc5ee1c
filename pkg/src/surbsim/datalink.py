"""Self-stabilizing data-link over a bounded lossy link.

The sender transmits each message ``c̄+1`` times; the receiver delivers a
message once it has seen ``c̄+1`` consecutive equal copies. After a transient
fault at most three deliveries per link are ghosts, and there are no
duplicates or reorderings. This module holds the two state machines and a
checker that classifies deliveries and evaluates that contract on a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .engine import ReadInput, Receive, Run, Transient


class DlSenderState(NamedTuple):
    current: Optional[int] = None
    remaining: int = 0


class DlReceiverState(NamedTuple):
    """``pending`` holds a delivery that was in progress when a fault hit."""

    last_message: Optional[int] = None
    counter: int = 0
    pending: Optional[int] = None


IDLE = DlSenderState()
FRESH = DlReceiverState()


def dl_send(msg: int, capacity: int, copies: Optional[int] = None) -> list:
    """The raw copies of one logical send."""
    return [msg] * (capacity + 1 if copies is None else copies)


def dl_sender_emit(state: DlSenderState) -> tuple:
    """One step of a sender that is partway through a send: ``(state, copy or None)``."""
    if state.remaining <= 0:
        return IDLE, None
    rem = state.remaining - 1
    return (DlSenderState(state.current, rem) if rem else IDLE), state.current


def dl_on_receive(state: DlReceiverState, msg: int, capacity: int,
                  threshold: Optional[int] = None) -> tuple:
    """Receiver transition on one raw copy: ``(state, delivered or None)``.

    A buffered ``pending`` delivery goes out first; if the copy completes a
    new delivery in the same step, that one is buffered in turn.
    """
    need = capacity + 1 if threshold is None else threshold
    out = state.pending
    if state.last_message is not None and msg == state.last_message:
        counter = state.counter + 1
        if counter >= need:
            if out is None:
                return FRESH, msg
            return DlReceiverState(None, 0, msg), out
        return DlReceiverState(msg, counter, None), out
    return DlReceiverState(msg, 1, None), out


def dl_flush(state: DlReceiverState) -> tuple:
    if state.pending is None:
        return state, None
    return state._replace(pending=None), state.pending


# -- contract checking ------------------------------------------------------


@dataclass(frozen=True)
class ContractParams:
    alpha: Optional[int] = None  # None: losses are unbounded
    beta: int = 0
    gamma: int = 3
    lam: int = 0
    min_block: int = 2


@dataclass(frozen=True)
class TaggedDelivery:
    step: int
    symbol: int
    tag: str  # real | ghost | duplicate | reordered
    send_step: Optional[int] = None


def last_transient(run: Run) -> int:
    """Position of the step carrying the last transient fault (0 if none)."""
    pos = 0
    for i, rec in enumerate(run.steps):
        if any(isinstance(f, Transient) for f in rec.faults):
            pos = i
    return pos


def logical_sends(run: Run, start: int = 0) -> list:
    """``(position, symbol)`` for every input the sender read at or after ``start``."""
    s = run.setup.sender
    return [
        (i, rec.event.value)
        for i, rec in enumerate(run.steps[start:], start)
        if rec.party == s and type(rec.event) is ReadInput
    ]


def _deliveries_after(run: Run, party: int, start: int) -> list:
    return [
        (i, rec.delivered)
        for i, rec in enumerate(run.steps[start:], start)
        if rec.party == party and rec.delivered is not None
    ]


def _max_matching(sends: list, dels: list) -> dict:
    """Maximum order-preserving matching; returns delivery index -> send index."""
    a, b = len(sends), len(dels)
    dp = [[0] * (b + 1) for _ in range(a + 1)]
    for i in range(a - 1, -1, -1):
        si, sm = sends[i]
        row, nxt = dp[i], dp[i + 1]
        for j in range(b - 1, -1, -1):
            best = nxt[j] if nxt[j] > row[j + 1] else row[j + 1]
            dj, dm = dels[j]
            if sm == dm and si < dj and nxt[j + 1] + 1 > best:
                best = nxt[j + 1] + 1
            row[j] = best
    match = {}
    i = j = 0
    while i < a and j < b:
        si, sm = sends[i]
        dj, dm = dels[j]
        if sm == dm and si < dj and dp[i][j] == dp[i + 1][j + 1] + 1:
            match[j] = i
            i += 1
            j += 1
        elif dp[i][j] == dp[i + 1][j]:
            i += 1
        else:
            j += 1
    return match


def classify_deliveries(run: Run, link: tuple, params: ContractParams = ContractParams()) -> list:
    """Tag every delivery on ``link`` made at or after the last transient fault.

    Deliveries are matched to logical sends by a maximum order-preserving
    matching (a send must precede its delivery). Matched deliveries are real.
    The first ``gamma`` unmatched deliveries are charged as ghosts; a later
    unmatched one is reordered if a same-symbol send that precedes it was left
    unmatched, a duplicate if its symbol was sent at all, and a ghost otherwise.
    """
    src, dst = link
    if src != run.setup.sender:
        raise ValueError(f"link {src}>{dst} does not start at the sender")
    start = last_transient(run)
    sends = logical_sends(run, start)
    dels = _deliveries_after(run, dst, start)
    match = _max_matching(sends, dels)
    used = set(match.values())
    out = []
    unmatched = 0
    for j, (pos, sym) in enumerate(dels):
        if j in match:
            out.append(TaggedDelivery(pos, sym, "real", sends[match[j]][0]))
            continue
        unmatched += 1
        if unmatched <= params.gamma:
            out.append(TaggedDelivery(pos, sym, "ghost"))
            continue
        free = [i for i, (sp, sm) in enumerate(sends) if sm == sym and sp < pos and i not in used]
        if free:
            out.append(TaggedDelivery(pos, sym, "reordered", sends[free[0]][0]))
        elif any(sm == sym and sp < pos for sp, sm in sends):
            out.append(TaggedDelivery(pos, sym, "duplicate"))
        else:
            out.append(TaggedDelivery(pos, sym, "ghost"))
    return out


def liveness_threshold(capacity: int, stale: Optional[int] = None) -> int:
    """Receives on a link that guarantee a delivery while one symbol is being repeated.

    ``stale`` bounds the copies in transit when the repetition starts (``c̄``
    on a bounded link). Without a delivery, each stale copy can follow a
    streak of at most ``c̄`` equal copies, and at most ``c̄`` more can follow
    the last one. One more receive than that forces a delivery.
    """
    s = capacity if stale is None else stale
    return (capacity + 1) * (s + 1)


@dataclass
class LinkReport:
    link: tuple
    tags: list = field(default_factory=list)
    liveness_failures: list = field(default_factory=list)  # (symbol, first send position)
    params: ContractParams = ContractParams()

    def count(self, tag: str) -> int:
        return sum(1 for t in self.tags if t.tag == tag)

    @property
    def ghosts(self) -> int:
        return self.count("ghost")

    @property
    def passed(self) -> bool:
        p = self.params
        return (
            self.ghosts <= p.gamma
            and self.count("duplicate") <= p.beta
            and self.count("reordered") <= p.lam
            and not self.liveness_failures
        )

    def lines(self) -> list:
        s, d = self.link
        verdict = lambda ok: "pass" if ok else "fail"
        p = self.params
        return [
            f"link {s}>{d} ghost: {verdict(self.ghosts <= p.gamma)} count={self.ghosts} bound={p.gamma}",
            f"link {s}>{d} duplicate: {verdict(self.count('duplicate') <= p.beta)} count={self.count('duplicate')}",
            f"link {s}>{d} reorder: {verdict(self.count('reordered') <= p.lam)} count={self.count('reordered')}",
            f"link {s}>{d} real: count={self.count('real')}",
            f"link {s}>{d} liveness: {verdict(not self.liveness_failures)} failures={len(self.liveness_failures)}",
        ]


@dataclass
class ContractReport:
    links: list

    @property
    def passed(self) -> bool:
        return all(lr.passed for lr in self.links)

    @property
    def max_ghosts(self) -> int:
        return max((lr.ghosts for lr in self.links), default=0)

    def text(self) -> str:
        out = [line for lr in self.links for line in lr.lines()]
        out.append(f"datalink contract: {'pass' if self.passed else 'fail'} max_ghost={self.max_ghosts}")
        return "\n".join(out)


def _liveness(run: Run, link: tuple, params: ContractParams) -> list:
    src, dst = link
    capacity = run.setup.protocol.capacity
    bounded = run.setup.capacity is not None
    start = last_transient(run)
    sends = logical_sends(run, start)
    # copies accepted on the link minus copies taken off it, from ``start``
    balance = [0] * (len(run.steps) + 1)
    for i, rec in enumerate(run.steps[start:], start):
        d = 0
        if rec.party == src:
            d += sum(1 for snd in rec.sends if snd.dst == dst and not (snd.lost and snd.evicted is None))
            d -= sum(1 for snd in rec.sends if snd.dst == dst and snd.lost and snd.evicted is not None)
        elif rec.party == dst and type(rec.event) is Receive and rec.event.src == src:
            d -= 1
        balance[i + 1] = balance[i] + d
    failures = []
    k = 0
    while k < len(sends):
        sym = sends[k][1]
        e = k
        while e < len(sends) and sends[e][1] == sym:
            e += 1
        if e - k >= params.min_block:
            lo = sends[k][0]
            hi = sends[e][0] if e < len(sends) else len(run.steps)
            stale = capacity if bounded else capacity + max(0, balance[lo])
            need = liveness_threshold(capacity, stale)
            receives = delivered = 0
            for rec in run.steps[lo:hi]:
                if rec.party != dst:
                    continue
                if type(rec.event) is Receive and rec.event.src == src:
                    receives += 1
                if rec.delivered == sym:
                    delivered += 1
            if receives >= need and not delivered:
                failures.append((sym, lo))
        k = e
    return failures


def check_contract(run: Run, params: ContractParams = ContractParams()) -> ContractReport:
    """Evaluate ghost, duplicate, reorder and liveness bounds on every sender link."""
    setup = run.setup
    reports = []
    for r in setup.peers:
        link = (setup.sender, r)
        lr = LinkReport(link, classify_deliveries(run, link, params), params=params)
        lr.liveness_failures = _liveness(run, link, params)
        reports.append(lr)
    return ContractReport(reports)


def worst_case_ghosts(capacity: int, protocol: str = "surb", horizon: int = 200, seed: int = 0):
    """Worst-case transient start that forces three ghost deliveries.

    The receiver has a buffered delivery of 0 and ``c̄`` credited copies of 0,
    the link holds ``c̄`` copies of 0, and the sender still owes ``c̄+1``
    copies of 0 from an interrupted send. Real input is ``1`` forever.
    """
    from .engine import InputStream, Transient
    from .scenario import Scenario
    from .surb import SurbSenderState

    c = capacity
    fault = Transient(
        overwrites=(
            (0, SurbSenderState((DlSenderState(0, c + 1),), 0)),
            (1, DlReceiverState(0, c, 0)),
        ),
        injections=(((0, 1), (0,) * c),),
    )
    script = [(1, "none")] + [(1, "recv")] * c + [(0, "none"), (1, "recv")] * (c + 1)
    return Scenario(
        n=2, capacity=c, mode="fully-bounded", protocol=protocol,
        inputs=InputStream.repeat(1), faults=((0, fault),),
        script=tuple(script), seed=seed, horizon=horizon,
    )
