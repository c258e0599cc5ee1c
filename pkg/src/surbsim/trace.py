"""Canonical text traces: one line per step, plus a header and an end marker.

::

    # surbsim-trace v1
    # n=2 sender=0 capacity=1 mode=fully-bounded protocol=surb drop=drop-new alphabet=0,1
    step=0 party=0 ev=input:1 sends=1:1,1:1:lost deliver=- fault=-
    step=1 party=1 ev=recv:0>1:1 sends=- deliver=- fault=-
    # end steps=2

A send written ``dst:m:lost`` was dropped on a full link; ``dst:m:lost=x``
means the pending ``x`` was dropped to make room for ``m``. Optional
``snapshot=<k> ...`` lines carry the flattened network matrix after step k.
"""

from __future__ import annotations

from .engine import (
    NO_RECEIVE,
    ByzantineAssume,
    Crash,
    ReadInput,
    Receive,
    Run,
    Send,
    Setup,
    StepRecord,
    Transient,
    states_along,
)

MAGIC = "# surbsim-trace v1"


class TraceError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"trace line {line}: {message}")
        self.line = line


def _fmt_event(rec: StepRecord) -> str:
    ev = rec.event
    if type(ev) is Receive:
        return f"recv:{ev.src}>{rec.party}:{ev.msg}"
    if type(ev) is ReadInput:
        return f"input:{ev.value}"
    return "none"


def _fmt_send(s: Send) -> str:
    if not s.lost:
        return f"{s.dst}:{s.msg}"
    if s.evicted is None:
        return f"{s.dst}:{s.msg}:lost"
    return f"{s.dst}:{s.msg}:lost={s.evicted}"


def _fmt_fault(f) -> str:
    if isinstance(f, Crash):
        return f"crash:{f.party}"
    if isinstance(f, ByzantineAssume):
        return f"byz:{f.party}"
    if isinstance(f, Transient):
        return "transient"
    raise ValueError(f"unresolved fault {f!r} in a run")


def header(setup: Setup) -> str:
    proto = setup.protocol
    params = dict(proto.params)
    cap = params.get("capacity", proto.capacity)
    parts = [
        f"n={setup.n}", f"sender={setup.sender}", f"capacity={cap}", f"mode={setup.mode}",
        f"protocol={proto.name}", f"drop={setup.drop_policy}",
        "alphabet=" + ",".join(map(str, setup.alphabet)),
    ]
    if "copies" in params:
        parts.append(f"copies={params['copies']}")
    return "# " + " ".join(parts)


def format_step(rec: StepRecord) -> str:
    sends = ",".join(_fmt_send(s) for s in rec.sends) or "-"
    deliver = "-" if rec.delivered is None else str(rec.delivered)
    fault = "+".join(_fmt_fault(f) for f in rec.faults) or "-"
    return f"step={rec.index} party={rec.party} ev={_fmt_event(rec)} sends={sends} deliver={deliver} fault={fault}"


def format_trace(run: Run, snapshots: bool = False) -> str:
    lines = [MAGIC, header(run.setup)]
    mats = None
    if snapshots:
        mats = [s.matrix(run.setup.alphabet) for s in states_along(run)[1:]]
    for i, rec in enumerate(run.steps):
        lines.append(format_step(rec))
        if mats is not None:
            lines.append(f"snapshot={rec.index} " + ",".join(map(str, mats[i].flat)))
    lines.append(f"# end steps={len(run.steps)}")
    return "\n".join(lines) + "\n"


def write_trace(run: Run, path, snapshots: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(run, snapshots))


def _parse_header(line: str, lineno: int) -> Setup:
    from .scenario import ScenarioError, get_protocol

    if not line.startswith("# "):
        raise TraceError(lineno, "missing header line")
    fields = {}
    for tok in line[2:].split():
        k, sep, v = tok.partition("=")
        if not sep:
            raise TraceError(lineno, f"bad header token {tok!r}")
        fields[k] = v
    try:
        cap = int(fields["capacity"])
        copies = int(fields["copies"]) if "copies" in fields else None
        proto = get_protocol(fields["protocol"], cap, copies)
        return Setup(
            protocol=proto,
            n=int(fields["n"]),
            sender=int(fields["sender"]),
            capacity=cap if fields["mode"] == "fully-bounded" else None,
            drop_policy=fields["drop"],
            alphabet=tuple(int(v) for v in fields["alphabet"].split(",")),
        )
    except KeyError as exc:
        raise TraceError(lineno, f"header lacks {exc.args[0]}") from None
    except (ValueError, ScenarioError) as exc:
        raise TraceError(lineno, f"bad header: {exc}") from None


def _parse_event(text: str, party: int):
    if text == "none":
        return NO_RECEIVE
    kind, _, rest = text.partition(":")
    if kind == "input":
        return ReadInput(int(rest))
    if kind == "recv":
        link, _, m = rest.partition(":")
        src, _, dst = link.partition(">")
        if int(dst) != party:
            raise ValueError("receive on a link not ending at the stepping party")
        return Receive(int(src), int(m))
    raise ValueError(f"unknown event {text!r}")


def _parse_send(text: str) -> Send:
    parts = text.split(":")
    if len(parts) == 2:
        return Send(int(parts[0]), int(parts[1]))
    if len(parts) == 3 and parts[2] == "lost":
        return Send(int(parts[0]), int(parts[1]), True)
    if len(parts) == 3 and parts[2].startswith("lost="):
        return Send(int(parts[0]), int(parts[1]), True, int(parts[2][5:]))
    raise ValueError(f"bad send {text!r}")


def _parse_fault(text: str):
    kind, _, rest = text.partition(":")
    if kind == "crash":
        return Crash(int(rest))
    if kind == "byz":
        return ByzantineAssume(int(rest))
    if kind == "transient" and not rest:
        return Transient(opaque=True)
    raise ValueError(f"bad fault {text!r}")


_FIELDS = ("step", "party", "ev", "sends", "deliver", "fault")


def parse_step(line: str, lineno: int) -> StepRecord:
    toks = line.split(" ")
    if len(toks) != len(_FIELDS):
        raise TraceError(lineno, f"expected {len(_FIELDS)} fields, got {len(toks)}")
    vals = {}
    for tok, name in zip(toks, _FIELDS):
        k, sep, v = tok.partition("=")
        if k != name or not sep:
            raise TraceError(lineno, f"expected field {name!r}, got {tok!r}")
        vals[k] = v
    try:
        party = int(vals["party"])
        return StepRecord(
            index=int(vals["step"]),
            party=party,
            event=_parse_event(vals["ev"], party),
            sends=() if vals["sends"] == "-" else tuple(_parse_send(s) for s in vals["sends"].split(",")),
            delivered=None if vals["deliver"] == "-" else int(vals["deliver"]),
            faults=() if vals["fault"] == "-" else tuple(_parse_fault(f) for f in vals["fault"].split("+")),
        )
    except ValueError as exc:
        raise TraceError(lineno, str(exc)) from None


def parse_trace(text: str) -> Run:
    """Read a trace back as a :class:`Run` without an initial state."""
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        raise TraceError(1, "not a surbsim trace")
    if len(lines) < 2:
        raise TraceError(2, "missing header line")
    setup = _parse_header(lines[1], 2)
    steps = []
    ended = False
    for lineno, line in enumerate(lines[2:], 3):
        if ended:
            raise TraceError(lineno, "content after end marker")
        if line.startswith("# end steps="):
            try:
                declared = int(line[len("# end steps="):])
            except ValueError:
                raise TraceError(lineno, "bad end marker") from None
            if declared != len(steps):
                raise TraceError(lineno, f"end marker declares {declared} steps, found {len(steps)}")
            ended = True
        elif line.startswith("snapshot="):
            head, _, body = line.partition(" ")
            try:
                k = int(head[len("snapshot="):])
                [int(v) for v in body.split(",") if v]
            except ValueError:
                raise TraceError(lineno, "bad snapshot line") from None
            if not steps or steps[-1].index != k:
                raise TraceError(lineno, "snapshot does not follow its step")
        else:
            rec = parse_step(line, lineno)
            if rec.index != len(steps):
                raise TraceError(lineno, f"expected step {len(steps)}, got {rec.index}")
            if not 0 <= rec.party < setup.n:
                raise TraceError(lineno, f"party {rec.party} out of range")
            steps.append(rec)
    if not ended:
        raise TraceError(len(lines) + 1, "trace is truncated (no end marker)")
    return Run(setup, None, tuple(steps))


def read_trace(path) -> Run:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())
