"""A small corpus of recorded runs shared by the engine and acceptance tests."""

from functools import lru_cache

from surbsim.engine import Crash, InputStream
from surbsim.scenario import Scenario
from surbsim.trace import format_trace, parse_trace
from dataclasses import replace


def _scenarios():
    out = []
    for seed in range(6):
        for proto in ("surb", "echo"):
            for n in (2, 3):
                out.append(Scenario(
                    n=n, capacity=2, mode="semi-bounded", protocol=proto,
                    inputs=InputStream.incremental() if seed % 2 else InputStream.repeat(1),
                    faults=((15, Crash(n - 1)),) if seed == 5 else (),
                    seed=seed, horizon=160,
                ))
        out.append(Scenario(
            n=3, capacity=1 + seed % 3, mode="fully-bounded", protocol="surb",
            inputs=InputStream.incremental(), drop_policy=("drop-new", "drop-oldest", "drop-seeded-random")[seed % 3],
            seed=seed, horizon=200,
        ))
    return out


@lru_cache(maxsize=None)
def corpus():
    """``(scenario, trace text, run)`` triples; runs are parsed back from their traces."""
    from surbsim.engine import execute

    items = []
    for sc in _scenarios():
        text = format_trace(execute(sc))
        run = parse_trace(text)
        run = replace(run, initial=sc.setup().initial_state())
        items.append((sc, text, run))
    return tuple(items)


def contract_run(c, n, policy, seed, horizon=300):
    """One honest run with a seeded random transient fault somewhere in the first 40 steps.

    The input is a random sequence of short constant blocks, so both repeated
    and alternating sends occur.
    """
    import random

    from surbsim.engine import RandomTransient, execute

    rng = random.Random(f"contract:{seed}")
    values = []
    while len(values) < horizon // 3:
        values += [rng.randint(0, 1)] * rng.randint(1, 4)
    k = rng.randint(0, 40)
    sc = Scenario(n=n, capacity=c, drop_policy=policy, inputs=InputStream.explicit(values),
                  faults=((k, RandomTransient()),), seed=seed, horizon=horizon)
    return execute(sc)
