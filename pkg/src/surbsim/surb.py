"""Suffix Reliable Broadcast over the data-link, and its two suffix conditions.

The sender reads an input value and hands it to one data-link sender per
receiver; each receiver surfaces data-link deliveries as broadcast
deliveries. Receivers never transmit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .datalink import (
    FRESH,
    IDLE,
    DlReceiverState,
    DlSenderState,
    dl_flush,
    dl_on_receive,
    dl_send,
    dl_sender_emit,
    last_transient,
)
from .engine import (
    ByzantineAssume,
    Crash,
    NoReceive,
    Outcome,
    ProtocolSpec,
    ReadInput,
    Receive,
    Run,
)
from .sequences import PreconditionError


class SurbSenderState(NamedTuple):
    links: tuple  # one DlSenderState per receiver, in peer order
    rr: int = 0  # next receiver whose unfinished send is advanced


def _fmt_opt(v) -> str:
    return "-" if v is None else str(v)


def _parse_opt(s: str):
    return None if s == "-" else int(s)


def format_state(state) -> str:
    if isinstance(state, SurbSenderState):
        return f"{state.rr}|" + ",".join(f"{_fmt_opt(l.current)}:{l.remaining}" for l in state.links)
    return f"{_fmt_opt(state.last_message)}/{state.counter}/{_fmt_opt(state.pending)}"


def parse_state(text: str, is_sender: bool):
    text = text.strip()
    if is_sender:
        rr, _, rest = text.partition("|")
        links = []
        for item in filter(None, rest.split(",")):
            cur, _, rem = item.partition(":")
            links.append(DlSenderState(_parse_opt(cur), int(rem)))
        return SurbSenderState(tuple(links), int(rr))
    last, counter, pending = text.split("/")
    return DlReceiverState(_parse_opt(last), int(counter), _parse_opt(pending))


def surb_protocol(capacity: int, *, copies: Optional[int] = None, threshold: Optional[int] = None,
                  redeliver: bool = False, name: str = "surb", max_parties: int = 4) -> ProtocolSpec:
    """SuRB for link capacity ``capacity``.

    ``copies`` and ``threshold`` override the send count (``c̄+1``) and the
    delivery threshold (``c̄+1``). ``redeliver`` makes receivers re-deliver
    their last message on idle steps; it exists only as a broken variant for
    testing the checkers.
    """
    c = capacity
    n_copies = c + 1 if copies is None else copies

    def init_sender(peers):
        return SurbSenderState((IDLE,) * len(peers), 0)

    def wants_input(state):
        return all(l.remaining == 0 for l in state.links)

    def on_sender(state, event, peers):
        if type(event) is ReadInput:
            v = event.value
            sends = tuple((p, m) for p in peers for m in dl_send(v, c, n_copies))
            return Outcome(SurbSenderState((IDLE,) * len(peers), state.rr), sends)
        # Between inputs the sender only finishes sends interrupted by a fault,
        # one copy per step, rotating over receivers.
        links = state.links
        k = len(links)
        for off in range(k):
            i = (state.rr + off) % k
            if links[i].remaining > 0:
                new, m = dl_sender_emit(links[i])
                links = links[:i] + (new,) + links[i + 1:]
                return Outcome(SurbSenderState(links, (i + 1) % k), ((peers[i], m),))
        return Outcome(state)

    def on_receiver(state, event, sender):
        if type(event) is Receive and event.src == sender:
            new, out = dl_on_receive(state, event.msg, c, threshold)
            return Outcome(new, (), out)
        new, out = dl_flush(state)
        if out is None and redeliver and type(event) is NoReceive and state.last_message is not None:
            out = state.last_message
        return Outcome(new, (), out)

    def random_state(rng: random.Random, is_sender: bool, peers, alphabet):
        if is_sender:
            links = tuple(
                IDLE if rng.random() < 0.5
                else DlSenderState(rng.choice(alphabet), rng.randint(1, n_copies))
                for _ in peers
            )
            return SurbSenderState(links, rng.randrange(len(peers)))
        last = None if rng.random() < 0.2 else rng.choice(alphabet)
        counter = 0 if last is None else (c if rng.random() < 0.5 else rng.randint(1, c))
        pending = rng.choice(alphabet) if rng.random() < 0.5 else None
        return DlReceiverState(last, counter, pending)

    sym = 3  # alphabet symbols plus "none", for a binary alphabet
    receiver_states = sym * (c + 2) * sym
    sender_states = (sym * (n_copies + 1)) ** (max_parties - 1) * (max_parties - 1)
    params = (("capacity", c),)
    if copies is not None:
        params += (("copies", copies),)
    return ProtocolSpec(
        name=name,
        init_sender=init_sender,
        init_receiver=lambda: FRESH,
        on_sender=on_sender,
        on_receiver=on_receiver,
        wants_input=wants_input,
        state_bound=max(receiver_states, sender_states),
        capacity=c,
        random_state=random_state,
        format_state=format_state,
        parse_state=parse_state,
        params=params,
    )


# -- suffix conditions ------------------------------------------------------


@dataclass
class SuffixReport:
    delivered: dict  # party -> delivered tuple (counted from the last transient fault)
    honest: tuple
    common_suffix: int
    window: int
    s1: Optional[bool] = None
    s2: Optional[bool] = None
    s2_window: Optional[bool] = None
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.s1 is not False and self.s2 is not False

    def text(self) -> str:
        lines = []
        for p in self.honest:
            d = self.delivered[p]
            shown = "".join(map(str, d[-40:]))
            lines.append(f"party {p} delivered={len(d)} tail={shown or '-'}")
        lines.append(f"common_suffix={self.common_suffix} window={self.window}")
        for name, v in (("S1", self.s1), ("S2", self.s2), ("S2-window", self.s2_window)):
            if v is not None:
                lines.append(f"{name}: {'pass' if v else 'fail'}")
        lines.extend(self.notes)
        return "\n".join(lines)


def honest_receivers(run: Run) -> tuple:
    """Receivers that are neither crashed nor Byzantine by the end of the run."""
    faulty = set()
    for rec in run.steps:
        for f in rec.faults:
            if isinstance(f, (Crash, ByzantineAssume)):
                faulty.add(f.party)
    return tuple(p for p in run.setup.peers if p not in faulty)


def _delivered_from(run: Run, start: int, upto: Optional[int] = None) -> dict:
    out = {p: [] for p in range(run.setup.n)}
    for rec in run.steps[start:upto]:
        if rec.delivered is not None:
            out[rec.party].append(rec.delivered)
    return {p: tuple(v) for p, v in out.items()}


def common_suffix_length(seqs) -> int:
    seqs = list(seqs)
    if not seqs:
        return 0
    k = 0
    shortest = min(len(s) for s in seqs)
    while k < shortest and len({s[len(s) - 1 - k] for s in seqs}) == 1:
        k += 1
    return k


def check_S2(run: Run, window: int = 8, value: Optional[int] = None) -> SuffixReport:
    """Every honest receiver's deliveries from its 4th onward equal the input value.

    Deliveries are counted from the last transient fault. ``value`` defaults
    to the single value the sender read; reading several distinct values
    without naming one is a precondition error.
    """
    for rec in run.steps:
        for f in rec.faults:
            if isinstance(f, ByzantineAssume) and f.party == run.setup.sender:
                raise PreconditionError("S2 is defined for an honest sender only")
    if value is None:
        seen = {rec.event.value for rec in run.steps
                if rec.party == run.setup.sender and type(rec.event) is ReadInput}
        if len(seen) > 1:
            raise PreconditionError("sender read several distinct values; pass value=")
        value = next(iter(seen), None)
    start = last_transient(run)
    delivered = _delivered_from(run, start)
    honest = honest_receivers(run)
    strict = all(all(m == value for m in delivered[p][3:]) for p in honest)
    windowed = all(
        all(m == value for m in delivered[p][len(delivered[p]) - min(window, max(0, len(delivered[p]) - 3)):])
        for p in honest
    )
    rep = SuffixReport(
        delivered, honest, common_suffix_length(delivered[p] for p in honest), window,
        s2=strict, s2_window=windowed,
    )
    rep.notes.append(f"value={value} counted_from_step={start}")
    return rep


def check_S1(run: Run, window: int = 8) -> SuffixReport:
    """If some honest receiver keeps delivering, all honest receivers agree on a suffix.

    Growth is judged by comparing delivery counts at half the run and at its
    end. When some receiver grows, the last ``min(window, fewest deliveries)``
    deliveries of all honest receivers must be identical and nonempty.
    """
    start = last_transient(run)
    honest = honest_receivers(run)
    delivered = _delivered_from(run, start)
    half = _delivered_from(run, start, start + (len(run.steps) - start) // 2)
    grows = any(len(delivered[p]) > len(half[p]) for p in honest)
    cs = common_suffix_length(delivered[p] for p in honest)
    rep = SuffixReport(delivered, honest, cs, window)
    if not grows:
        rep.s1 = True
        rep.notes.append("no honest receiver keeps delivering: vacuous pass")
        return rep
    w = min([window] + [len(delivered[p]) for p in honest])
    tails = {delivered[p][len(delivered[p]) - w:] for p in honest}
    rep.s1 = w >= 1 and len(tails) == 1
    return rep
