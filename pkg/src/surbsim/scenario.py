"""Scenarios: the protocol registry and the line-oriented scenario file format.

A scenario file is a list of ``key=value`` lines. ``fault=`` may repeat;
blank lines and ``#`` comments are ignored. Example::

    n=3
    capacity=2
    mode=fully-bounded
    protocol=surb
    input=repeat:1
    fault=0:transient:random
    fault=40:crash:2
    seed=7
    horizon=400
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import (
    DROP_POLICIES,
    MODES,
    ByzantineAssume,
    Crash,
    InputStream,
    ProtocolSpec,
    RandomTransient,
    SchedulerPolicy,
    Setup,
    Simulation,
    Transient,
)


class ScenarioError(ValueError):
    def __init__(self, field_name: str, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{field_name}: {message}")
        self.field = field_name
        self.line = line


# -- protocol registry ------------------------------------------------------


def _surb(capacity, copies):
    from .surb import surb_protocol
    return surb_protocol(capacity, copies=copies)


def _surb_offbyone(capacity, copies):
    from .surb import surb_protocol
    return surb_protocol(capacity, copies=copies, threshold=capacity, name="surb-offbyone")


def _surb_redeliver(capacity, copies):
    from .surb import surb_protocol
    return surb_protocol(capacity, copies=copies, redeliver=True, name="surb-redeliver")


def _echo(capacity, copies):
    from .divergence import echo_protocol
    return echo_protocol(capacity)


PROTOCOLS: dict[str, Callable[[int, Optional[int]], ProtocolSpec]] = {
    "surb": _surb,
    "surb-offbyone": _surb_offbyone,
    "surb-redeliver": _surb_redeliver,
    "echo": _echo,
}


def get_protocol(name: str, capacity: int, copies: Optional[int] = None) -> ProtocolSpec:
    try:
        factory = PROTOCOLS[name]
    except KeyError:
        raise ScenarioError("protocol", f"unknown protocol {name!r}") from None
    return factory(capacity, copies)


# -- scenario ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    n: int = 2
    capacity: int = 1
    mode: str = "fully-bounded"
    alphabet: tuple = (0, 1)
    protocol: str = "surb"
    inputs: InputStream = field(default_factory=lambda: InputStream.repeat(0))
    faults: tuple = ()  # (step index, fault)
    script: tuple = ()  # (party, selector) scheduling prefix
    seed: int = 0
    fairness: Optional[int] = None
    drop_policy: str = "drop-new"
    horizon: int = 100
    sender: int = 0
    dormant: tuple = ()
    copies: Optional[int] = None

    def __post_init__(self):
        if self.n < 2:
            raise ScenarioError("n", f"need at least 2 parties, got {self.n}")
        if self.capacity < 1:
            raise ScenarioError("capacity", "link capacity must be at least 1")
        if self.mode not in MODES:
            raise ScenarioError("mode", f"unknown mode {self.mode!r}")
        if not self.alphabet:
            raise ScenarioError("alphabet", "alphabet must be nonempty")
        if self.protocol not in PROTOCOLS:
            raise ScenarioError("protocol", f"unknown protocol {self.protocol!r}")
        if self.drop_policy not in DROP_POLICIES:
            raise ScenarioError("drop_policy", f"unknown drop policy {self.drop_policy!r}")
        if not 0 <= self.sender < self.n:
            raise ScenarioError("sender", f"sender {self.sender} out of range")
        if self.horizon < 0:
            raise ScenarioError("horizon", "horizon must be nonnegative")
        if self.fairness is not None and self.fairness < 1:
            raise ScenarioError("fairness", "fairness window must be positive")
        if self.inputs.kind != "incremental":
            bad = [v for v in self.inputs.values if v not in self.alphabet]
            if bad:
                raise ScenarioError("input", f"value {bad[0]} is not in the alphabet")
        for p in self.dormant:
            if not 0 <= p < self.n or p == self.sender:
                raise ScenarioError("dormant", f"invalid dormant party {p}")
        for k, f in self.faults:
            if k < 0:
                raise ScenarioError("fault", "fault index must be nonnegative")
            parties = [getattr(f, "party", None)]
            if isinstance(f, Transient):
                parties = [p for p, _ in f.overwrites]
                for (s, d), content in f.injections:
                    if not (0 <= s < self.n and 0 <= d < self.n and s != d):
                        raise ScenarioError("fault", f"invalid link {s}>{d}")
                    if len(content) > self.capacity:
                        raise ScenarioError("fault", f"injection on {s}>{d} exceeds capacity")
            if isinstance(f, RandomTransient):
                parties = list(f.parties or ())
            for p in parties:
                if p is not None and not 0 <= p < self.n:
                    raise ScenarioError("fault", f"party {p} out of range")

    def protocol_spec(self) -> ProtocolSpec:
        return get_protocol(self.protocol, self.capacity, self.copies)

    def setup(self) -> Setup:
        return Setup(
            protocol=self.protocol_spec(),
            n=self.n,
            sender=self.sender,
            capacity=self.capacity if self.mode == "fully-bounded" else None,
            drop_policy=self.drop_policy,
            alphabet=tuple(self.alphabet),
        )

    def simulation(self) -> Simulation:
        return Simulation(self.setup(), self.inputs, tuple(self.faults))

    def policy(self) -> SchedulerPolicy:
        return SchedulerPolicy(self.seed, self.fairness, tuple(self.script), tuple(self.dormant))


# -- file format ------------------------------------------------------------

_KEYS = (
    "n", "capacity", "mode", "alphabet", "protocol", "input", "seed", "fairness",
    "drop_policy", "horizon", "sender", "dormant", "copies", "script", "fault",
)


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def format_fault(k: int, f, proto: ProtocolSpec) -> str:
    if isinstance(f, Crash):
        return f"{k}:crash:{f.party}"
    if isinstance(f, ByzantineAssume):
        if f.script is not None or f.rewrite:
            raise ScenarioError("fault", "scripted Byzantine behaviour cannot be written to a file")
        return f"{k}:byz:{f.party}"
    if isinstance(f, RandomTransient):
        if f.parties is None:
            return f"{k}:transient:random"
        return f"{k}:transient:random:" + ",".join(map(str, f.parties))
    if isinstance(f, Transient):
        items = [f"state.{p}={proto.format_state(st)}" for p, st in f.overwrites]
        items += [
            f"link.{s}>{d}=" + ",".join(map(str, content)) for (s, d), content in f.injections
        ]
        return f"{k}:transient:" + ";".join(items)
    raise ScenarioError("fault", f"cannot serialize fault {f!r}")


def parse_fault(text: str, proto: ProtocolSpec, sender: int, line: Optional[int] = None):
    try:
        k_text, kind, rest = (text.split(":", 2) + ["", ""])[:3]
        k = int(k_text)
        if kind == "crash":
            return k, Crash(int(rest))
        if kind == "byz":
            return k, ByzantineAssume(int(rest))
        if kind == "transient":
            if rest == "random":
                return k, RandomTransient()
            if rest.startswith("random:"):
                return k, RandomTransient(_ints(rest[len("random:"):]))
            overwrites, injections = [], []
            for item in filter(None, rest.split(";")):
                key, _, val = item.partition("=")
                if key.startswith("state."):
                    p = int(key[len("state."):])
                    if proto.parse_state is None:
                        raise ValueError(f"protocol {proto.name} has no state syntax")
                    overwrites.append((p, proto.parse_state(val, p == sender)))
                elif key.startswith("link."):
                    s, _, d = key[len("link."):].partition(">")
                    injections.append(((int(s), int(d)), _ints(val)))
                else:
                    raise ValueError(f"unknown transient item {key!r}")
            return k, Transient(tuple(overwrites), tuple(injections))
        raise ValueError(f"unknown fault kind {kind!r}")
    except ScenarioError:
        raise
    except (ValueError, IndexError) as exc:
        raise ScenarioError("fault", f"cannot parse {text!r}: {exc}", line) from None


def parse_scenario(text: str) -> Scenario:
    values: dict = {}
    faults: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "schedule":
            key = "script"
        if not sep or key not in _KEYS:
            raise ScenarioError(key or "?", f"unrecognized line {raw!r}", lineno)
        if key == "fault":
            faults.append((val, lineno))
            continue
        if key in values:
            raise ScenarioError(key, "given twice", lineno)
        values[key] = (val, lineno)

    kwargs: dict = {}

    def conv(key, fn):
        if key in values:
            val, lineno = values[key]
            try:
                kwargs[key] = fn(val)
            except (ValueError, IndexError) as exc:
                raise ScenarioError(key, f"bad value {val!r}: {exc}", lineno) from None

    for key in ("n", "capacity", "seed", "horizon", "sender"):
        conv(key, int)
    conv("fairness", lambda v: None if v in ("", "default") else int(v))
    conv("copies", lambda v: None if v in ("", "default") else int(v))
    conv("mode", str)
    conv("protocol", str)
    conv("drop_policy", str)
    conv("alphabet", _ints)
    conv("dormant", _ints)
    if "input" in values:
        val, lineno = values["input"]
        try:
            kwargs["inputs"] = InputStream.parse(val)
        except ValueError as exc:
            raise ScenarioError("input", str(exc), lineno) from None
    if "script" in values:
        val, lineno = values["script"]
        entries = []
        for item in filter(None, (x.strip() for x in val.split(","))):
            p, _, sel = item.partition(":")
            try:
                entries.append((int(p), sel or "none"))
            except ValueError:
                raise ScenarioError("script", f"bad entry {item!r}", lineno) from None
        kwargs["script"] = tuple(entries)

    try:
        proto = get_protocol(kwargs.get("protocol", "surb"), kwargs.get("capacity", 1), kwargs.get("copies"))
    except ScenarioError as exc:
        raise ScenarioError("protocol", str(exc), values.get("protocol", ("", None))[1]) from None
    sender = kwargs.get("sender", 0)
    kwargs["faults"] = tuple(parse_fault(t, proto, sender, ln) for t, ln in faults)
    try:
        return Scenario(**kwargs)
    except ScenarioError as exc:
        line = values.get(exc.field, (None, None))[1]
        if exc.field == "input":
            line = values.get("input", (None, None))[1]
        if line is None and exc.field == "fault" and faults:
            line = faults[0][1]
        raise ScenarioError(exc.field, str(exc).split(": ", 1)[-1], line) from None


def serialize_scenario(sc: Scenario) -> str:
    proto = sc.protocol_spec()
    lines = [
        f"n={sc.n}",
        f"capacity={sc.capacity}",
        f"mode={sc.mode}",
        "alphabet=" + ",".join(map(str, sc.alphabet)),
        f"protocol={sc.protocol}",
        f"input={sc.inputs}",
        f"seed={sc.seed}",
        f"drop_policy={sc.drop_policy}",
        f"horizon={sc.horizon}",
        f"sender={sc.sender}",
    ]
    if sc.fairness is not None:
        lines.append(f"fairness={sc.fairness}")
    if sc.copies is not None:
        lines.append(f"copies={sc.copies}")
    if sc.dormant:
        lines.append("dormant=" + ",".join(map(str, sc.dormant)))
    if sc.script:
        lines.append("script=" + ",".join(f"{p}:{sel}" for p, sel in sc.script))
    for k, f in sc.faults:
        lines.append("fault=" + format_fault(k, f, proto))
    return "\n".join(lines) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
