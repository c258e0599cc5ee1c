import random
from dataclasses import replace

import pytest

from corpus import corpus
from replay_props import commutation, delta_invariance, exact_recurrence, monotone_refeasibility
from oracles import recount_network
from surbsim.datalink import DlSenderState
from surbsim.divergence import echo_protocol
from surbsim.engine import (
    NO_RECEIVE,
    Crash,
    RandomTransient,
    EngineError,
    Executor,
    InfeasibleStep,
    InputStream,
    ReadInput,
    Receive,
    Run,
    SchedulerPolicy,
    Send,
    Setup,
    Simulation,
    Splice,
    SpliceError,
    StateBoundExceeded,
    Transient,
    apply_fault,
    concat,
    default_fairness,
    deliveries,
    execute,
    final_state,
    replay,
    segment,
    states_along,
    step,
)
from surbsim.scenario import Scenario
from surbsim.surb import SurbSenderState, surb_protocol
from surbsim.trace import format_trace


def surb_setup(c=2, n=3, bounded=False, policy="drop-new"):
    return Setup(surb_protocol(c), n, 0, c if bounded else None, policy)


class TestStep:
    def test_noreceive_identity(self):
        setup = Setup(echo_protocol(1), 2)
        sys = setup.initial_state()
        new, rec = step(setup, sys, 1, NO_RECEIVE)
        assert new == sys
        assert rec.sends == () and rec.delivered is None

    def test_read_input_sends_copies_to_every_peer(self):
        setup = surb_setup(c=2)
        new, rec = step(setup, setup.initial_state(), 0, ReadInput(1), inputs=InputStream.repeat(1))
        assert new.network[setup.link_index[(0, 1)]] == (1, 1, 1)
        assert new.network[setup.link_index[(0, 2)]] == (1, 1, 1)
        assert new.cursor == 1
        assert len(rec.sends) == 6 and not any(s.lost for s in rec.sends)

    def test_receive_removes_message(self):
        setup = surb_setup(c=1, n=2)
        sys, _ = step(setup, setup.initial_state(), 0, ReadInput(0))
        sys, rec = step(setup, sys, 1, Receive(0, 0))
        assert sys.network[0] == (0,)
        assert rec.delivered is None
        sys, rec = step(setup, sys, 1, Receive(0, 0))
        assert sys.network[0] == () and rec.delivered == 0

    def test_full_link_drop_new(self):
        setup = surb_setup(c=1, n=2, bounded=True)
        sys, rec = step(setup, setup.initial_state(), 0, ReadInput(1))
        assert rec.sends == (Send(1, 1), Send(1, 1, True, None))
        assert sys.network[0] == (1,)

    def test_full_link_drop_oldest(self):
        setup = surb_setup(c=1, n=2, bounded=True, policy="drop-oldest")
        sys = replace(setup.initial_state(), network=((0,), ()))
        sys, rec = step(setup, sys, 0, ReadInput(1))
        assert rec.sends == (Send(1, 1, True, 0), Send(1, 1, True, 1))
        assert sys.network[0] == (1,)

    def test_seeded_random_needs_rng_and_respects_capacity(self):
        setup = surb_setup(c=2, n=2, bounded=True, policy="drop-seeded-random")
        sys = replace(setup.initial_state(), network=((0, 0), ()))
        with pytest.raises(EngineError):
            step(setup, sys, 0, ReadInput(1))
        new, rec = step(setup, sys, 0, ReadInput(1), rng=random.Random(3))
        assert len(new.network[0]) == 2
        assert all(s.lost for s in rec.sends)

    @pytest.mark.parametrize("party,event,sys_change,reason", [
        (1, Receive(0, 1), {}, "not pending"),
        (1, ReadInput(0), {}, "not the sender"),
        (1, NO_RECEIVE, {"crashed": frozenset({1})}, "crashed"),
        (5, NO_RECEIVE, {}, "no party"),
    ])
    def test_infeasible(self, party, event, sys_change, reason):
        setup = surb_setup(c=1, n=2)
        sys = replace(setup.initial_state(), **sys_change)
        with pytest.raises(InfeasibleStep, match=reason) as info:
            step(setup, sys, party, event, index=7)
        assert info.value.index == 7

    def test_input_checks(self):
        setup = surb_setup(c=1, n=2)
        sys = setup.initial_state()
        with pytest.raises(InfeasibleStep, match="exhausted"):
            step(setup, sys, 0, ReadInput(0), inputs=InputStream.explicit([]))
        with pytest.raises(InfeasibleStep, match="top of the stream"):
            step(setup, sys, 0, ReadInput(0), inputs=InputStream.repeat(1))
        busy = replace(sys, states=(SurbSenderState((DlSenderState(0, 2),)), sys.states[1]))
        with pytest.raises(InfeasibleStep, match="not ready"):
            step(setup, busy, 0, ReadInput(0))


class TestExecute:
    def test_horizon_zero(self):
        run = execute(Scenario(horizon=0))
        assert len(run) == 0 and deliveries(run, 1) == ()

    def test_deterministic(self):
        sc = Scenario(n=3, capacity=2, inputs=InputStream.incremental(), seed=11, horizon=300,
                      drop_policy="drop-seeded-random", faults=((5, RandomTransient()),))
        assert format_trace(execute(sc)) == format_trace(execute(sc))
        other = format_trace(execute(replace(sc, seed=12)))
        assert other != format_trace(execute(sc))

    @pytest.mark.parametrize("policy", ["drop-new", "drop-oldest", "drop-seeded-random"])
    def test_capacity_never_exceeded(self, policy):
        for seed in range(5):
            sc = Scenario(n=3, capacity=2, drop_policy=policy, inputs=InputStream.incremental(),
                          seed=seed, horizon=300)
            run = execute(sc)
            for s in states_along(run, sc.setup().initial_state()):
                assert all(len(lk) <= 2 for lk in s.network)
            assert any(snd.lost for r in run.steps for snd in r.sends)

    def test_lost_flag_only_when_bounded(self):
        run = execute(Scenario(n=3, capacity=1, mode="semi-bounded", seed=2, horizon=300))
        assert not any(snd.lost for r in run.steps for snd in r.sends)

    def test_crash_semantics(self):
        for k in (0, 10, 50):
            run = execute(Scenario(n=3, capacity=1, faults=((k, Crash(2)),), seed=k, horizon=200))
            assert all(r.party != 2 for r in run.steps[k:])
        run = execute(Scenario(n=3, faults=((0, Crash(1)),), horizon=100))
        assert deliveries(run, 1) == ()

    def test_all_crashed_halts(self):
        faults = tuple((0, Crash(p)) for p in range(2))
        assert len(execute(Scenario(faults=faults, horizon=50))) == 0

    def test_matrix_matches_recount(self):
        for seed in range(6):
            sc = Scenario(n=3, capacity=2, drop_policy=("drop-new", "drop-oldest", "drop-seeded-random")[seed % 3],
                          inputs=InputStream.incremental(), seed=seed, horizon=250)
            run = execute(sc)
            net = final_state(run).network
            got = {}
            for (s, d), lk in zip(run.setup.links, net):
                for m in lk:
                    got[(s, d, m)] = got.get((s, d, m), 0) + 1
            assert got == recount_network(run, 3)

    def test_scripted_prefix(self):
        sc = Scenario(n=2, capacity=1, mode="semi-bounded", inputs=InputStream.repeat(1),
                      script=((0, "input"), (1, "recv"), (1, "recv:0:1")), horizon=3)
        run = execute(sc)
        assert [type(r.event).__name__ for r in run.steps] == ["ReadInput", "Receive", "Receive"]

    def test_state_bound_enforced(self):
        proto = replace(echo_protocol(1), state_bound=1)
        ex = Executor(Simulation(Setup(proto, 2), InputStream.incremental()), SchedulerPolicy(0),
                      track_states=True)
        with pytest.raises(StateBoundExceeded):
            ex.advance(200)


def _max_missed(run, start):
    """Oracle: the most scheduling opportunities any message sat through unreceived."""
    setup = run.setup
    pending = {lk: [[m, 0] for m in content] for lk, content in zip(setup.links, start.network)}
    worst = 0
    for rec in run.steps:
        if type(rec.event) is Receive:
            lk = (rec.event.src, rec.party)
            q = pending[lk]
            k = next(i for i, e in enumerate(q) if e[0] == rec.event.msg)
            q.pop(k)
        for (s, d), q in pending.items():
            if d == rec.party:
                for e in q:
                    e[1] += 1
                    worst = max(worst, e[1])
        for snd in rec.sends:
            q = pending[(rec.party, snd.dst)]
            if snd.lost and snd.evicted is None:
                continue
            if snd.lost:
                q.pop(next(i for i, e in enumerate(q) if e[0] == snd.evicted))
            q.append([snd.msg, 0])
    return worst


class TestFairness:
    @pytest.mark.parametrize("c,k", [(1, 3), (3, 5), (3, 8), (2, 16)])
    def test_window_respected(self, c, k):
        for seed in range(10):
            sc = Scenario(n=3, capacity=c, fairness=k, inputs=InputStream.incremental(),
                          seed=seed, horizon=600)
            run = execute(sc)
            assert _max_missed(run, sc.setup().initial_state()) < k

    def test_semi_bounded_echo(self):
        # unbounded links: the guarantee needs fewer than K messages pending
        sc = Scenario(n=3, capacity=1, mode="semi-bounded", protocol="echo",
                      inputs=InputStream.incremental(), seed=4, horizon=2000)
        run = execute(sc)
        k = default_fairness(sc.setup())
        start = sc.setup().initial_state()
        assert max(len(lk) for s in states_along(run, start) for lk in s.network) < k
        assert _max_missed(run, start) < k

    def test_dormant_party_never_scheduled(self):
        run = execute(Scenario(n=3, dormant=(2,), horizon=300))
        assert all(r.party != 2 for r in run.steps)


class TestReplay:
    def test_reproduces_recorded_outcome(self):
        for sc, _, run in corpus():
            ex = Executor(sc.simulation(), sc.policy())
            ex.advance(sc.horizon)
            fin, dels = replay(run)
            assert fin.canonical() == ex.state.canonical()
            for p in range(sc.n):
                assert dels[p] == deliveries(run, p)

    def test_empty_network_infeasible_at_first_receive(self):
        sc = Scenario(n=2, capacity=1, seed=1, horizon=60)
        run = execute(sc)
        first = next(i for i, r in enumerate(run.steps) if type(r.event) is Receive)
        tail = segment(run, first, len(run))
        empty = replace(tail.initial, network=((),) * len(tail.initial.network))
        with pytest.raises(InfeasibleStep) as info:
            replay(tail, empty)
        assert info.value.index == 0

    def test_tampered_record_detected(self):
        run = execute(Scenario(n=2, capacity=1, seed=3, horizon=50))
        k = next(i for i, r in enumerate(run.steps) if r.delivered is not None)
        bad = replace(run.steps[k], delivered=1 - run.steps[k].delivered)
        tampered = replace(run, steps=run.steps[:k] + (bad,) + run.steps[k + 1:])
        with pytest.raises(InfeasibleStep) as info:
            replay(tampered)
        assert info.value.index == k

    def test_segment_and_concat_roundtrip(self):
        run = execute(Scenario(n=3, capacity=2, inputs=InputStream.incremental(), seed=9, horizon=120))
        a, b = segment(run, 0, 50), segment(run, 50, 120)
        joined = concat(a, b)
        assert joined.steps == run.steps
        assert final_state(joined).canonical() == final_state(run).canonical()

    def test_concat_with_empty_is_identity(self):
        run = execute(Scenario(seed=1, horizon=40))
        empty = Run(run.setup, final_state(run), ())
        assert concat(run, empty).steps == run.steps


class TestConcatErrors:
    def _runs(self):
        run = execute(Scenario(n=3, capacity=2, inputs=InputStream.repeat(1), seed=4, horizon=80))
        return run, segment(run, 40, 80)

    def test_non_sender_mismatch_named(self):
        run, tail = self._runs()
        states = list(tail.initial.states)
        states[1] = states[1]._replace(counter=states[1].counter + 7)
        bad = replace(tail, initial=replace(tail.initial, states=tuple(states)))
        head = segment(run, 0, 40)
        with pytest.raises(SpliceError, match="party 1"):
            concat(head, bad, Splice.TRANSIENT)

    def test_matrix_entry_named(self):
        run, tail = self._runs()
        head = segment(run, 0, 40)
        net = list(tail.initial.network)
        net[0] = net[0] + (0,) * 5
        bad = replace(tail, initial=replace(tail.initial, network=tuple(net)))
        with pytest.raises(SpliceError, match="network entry .*link 0>1"):
            concat(head, bad)

    @pytest.mark.parametrize("splice,fault", [(Splice.TRANSIENT, Transient), (Splice.BYZANTINE_SENDER, object)])
    def test_sender_splice_inserts_fault(self, splice, fault):
        run, tail = self._runs()
        head = segment(run, 0, 40)
        states = list(tail.initial.states)
        states[0] = SurbSenderState((DlSenderState(1, 1), DlSenderState()), 0)
        other = replace(tail, initial=replace(tail.initial, states=tuple(states)))
        with pytest.raises(SpliceError):
            concat(head, other, Splice.MATCHING)
        try:
            out = concat(head, other, splice)
        except SpliceError as exc:
            # the new sender state may make the recorded tail infeasible
            assert "infeasible" in str(exc)
            return
        inserted = out.steps[40].faults[0]
        assert isinstance(inserted, fault)
        assert len(out) == len(run)


class TestApplyFault:
    def test_injection_bound(self):
        setup = surb_setup(c=1, n=2, bounded=True)
        with pytest.raises(EngineError, match="exceeds"):
            apply_fault(setup, setup.initial_state(), Transient(injections=(((0, 1), (0, 0)),)))

    def test_opaque_rejected(self):
        setup = surb_setup(c=1, n=2)
        with pytest.raises(EngineError):
            apply_fault(setup, setup.initial_state(), Transient(opaque=True))

    def test_transient_keeps_input_cursor(self):
        setup = surb_setup(c=1, n=2)
        sys = replace(setup.initial_state(), cursor=9)
        out = apply_fault(setup, sys, Transient(injections=(((0, 1), (1,)),)))
        assert out.cursor == 9 and out.network[0] == (1,)


class TestReplayProperties:
    """Exercise each property on the shared corpus; every check must be non-vacuous."""

    @pytest.fixture(scope="class")
    @classmethod
    def semi(cls):
        return [run for sc, _, run in corpus() if sc.mode == "semi-bounded"][:8]

    @pytest.fixture(scope="class")
    @classmethod
    def full(cls):
        return [run for sc, _, run in corpus() if sc.mode == "fully-bounded"]

    def test_delta_invariance(self, semi):
        res = [delta_invariance(r, max_pairs=10) for r in semi]
        assert sum(c for c, _ in res) > 0 and sum(f for _, f in res) == 0

    def test_monotone_refeasibility(self, semi):
        res = [monotone_refeasibility(r, max_pairs=10) for r in semi]
        assert sum(c for c, _ in res) > 0 and sum(f for _, f in res) == 0

    def test_commutation(self, semi, full):
        res = [commutation(r, max_triples=10) for r in semi]
        res += [commutation(r, exact=True, max_triples=10) for r in full]
        assert sum(c for c, _ in res) > 0 and sum(f for _, f in res) == 0

    def test_exact_recurrence(self, full):
        res = [exact_recurrence(r, max_pairs=10) for r in full]
        assert sum(c for c, _ in res) > 0 and sum(f for _, f in res) == 0
