import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from corpus import contract_run
from oracles import alg2_receiver
from surbsim.datalink import (
    FRESH,
    IDLE,
    ContractParams,
    DlReceiverState,
    DlSenderState,
    check_contract,
    worst_case_ghosts,
    classify_deliveries,
    dl_flush,
    dl_on_receive,
    dl_send,
    dl_sender_emit,
    liveness_threshold,
)
from surbsim.engine import InputStream, execute
from surbsim.scenario import Scenario


def feed(stream, capacity, state=FRESH, threshold=None):
    out = []
    for m in stream:
        state, d = dl_on_receive(state, m, capacity, threshold)
        if d is not None:
            out.append(d)
    return state, out


class TestStateMachines:
    def test_dl_send(self):
        assert dl_send(1, 2) == [1, 1, 1]
        assert dl_send(0, 1, copies=3) == [0, 0, 0]

    def test_sender_emit(self):
        st, m = dl_sender_emit(DlSenderState(1, 2))
        assert (st, m) == (DlSenderState(1, 1), 1)
        st, m = dl_sender_emit(st)
        assert (st, m) == (IDLE, 1)
        assert dl_sender_emit(IDLE) == (IDLE, None)

    @pytest.mark.parametrize("stream,c,expected", [
        ("11", 1, [1]),
        ("1011", 1, [1]),
        ("111", 2, [1]),
        ("110111", 2, [1]),
        ("000000", 2, [0, 0]),
        ("0101", 1, []),
    ])
    def test_examples(self, stream, c, expected):
        assert feed([int(x) for x in stream], c)[1] == expected

    @given(st.lists(st.integers(0, 1), max_size=40), st.integers(1, 3))
    def test_matches_plain_receiver_loop(self, stream, c):
        assert feed(stream, c)[1] == alg2_receiver(stream, c)

    @given(st.lists(st.integers(0, 1), max_size=40), st.integers(1, 3))
    def test_threshold_override_matches_oracle(self, stream, c):
        assert feed(stream, c, threshold=c)[1] == alg2_receiver(stream, c, threshold=c)

    def test_pending_slot_goes_out_first(self):
        st, d = dl_on_receive(DlReceiverState(1, 1, 0), 1, 1)
        assert d == 0 and st == DlReceiverState(None, 0, 1)
        st, d = dl_flush(st)
        assert d == 1 and st == FRESH
        assert dl_flush(FRESH) == (FRESH, None)

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=30), st.integers(1, 3))
    def test_exact_copies_deliver_once(self, prefix, c):
        # after any garbage, c+1 fresh equal copies preceded by a different symbol
        # produce exactly one delivery of that symbol from the copies
        state, _ = feed(prefix, c)
        state, _ = dl_flush(state)
        m = 1 - prefix[-1]
        state, out = feed([m] * (c + 1), c, state)
        assert out[-1:] == [m]


class TestWorstCaseGhosts:
    @pytest.mark.parametrize("c", [1, 2, 3])
    def test_exactly_three_ghosts(self, c):
        run = execute(worst_case_ghosts(c))
        rep = check_contract(run)
        assert rep.passed
        assert rep.max_ghosts == 3
        tags = [t.tag for t in classify_deliveries(run, (0, 1))]
        assert tags[:3] == ["ghost"] * 3
        assert "real" in tags[3:] and set(tags[3:]) == {"real"}

    @pytest.mark.parametrize("c", [2, 3])
    def test_offbyone_mutant_detected(self, c):
        run = execute(worst_case_ghosts(c, protocol="surb-offbyone"))
        rep = check_contract(run)
        assert rep.max_ghosts >= 4 and not rep.passed
        assert "datalink contract: fail" in rep.text()

    def test_offbyone_equivalent_at_capacity_one(self):
        # with threshold c = 1 the "else" branch already counts one copy, so the
        # mutant's behaviour on any stream equals the correct receiver's
        rng = random.Random(0)
        for _ in range(200):
            stream = [rng.randint(0, 1) for _ in range(30)]
            assert feed(stream, 1, threshold=1) == feed(stream, 1)

    def test_report_text(self):
        text = check_contract(execute(worst_case_ghosts(2))).text()
        assert "link 0>1 ghost: pass count=3 bound=3" in text
        assert text.endswith("datalink contract: pass max_ghost=3")


def sweep_run(c, n, policy, seed, horizon=300):
    return contract_run(c, n, policy, seed, horizon)


class TestContract:
    @pytest.mark.parametrize("c", [1, 2, 3])
    @pytest.mark.parametrize("policy", ["drop-new", "drop-oldest", "drop-seeded-random"])
    def test_seed_sweep(self, c, policy):
        for seed in range(15):
            rep = check_contract(sweep_run(c, 3, policy, seed))
            assert rep.passed, rep.text()
            assert rep.max_ghosts <= 3

    def test_fault_free_all_real(self):
        for seed in range(10):
            run = execute(Scenario(n=3, capacity=2, inputs=InputStream.incremental(), seed=seed, horizon=300))
            for link in ((0, 1), (0, 2)):
                assert {t.tag for t in classify_deliveries(run, link)} <= {"real"}

    def test_real_deliveries_follow_their_sends(self):
        for seed in range(10):
            run = sweep_run(2, 2, "drop-oldest", seed)
            reals = [t for t in classify_deliveries(run, (0, 1)) if t.tag == "real"]
            assert all(t.send_step < t.step for t in reals)
            assert [t.send_step for t in reals] == sorted(t.send_step for t in reals)

    def test_only_sender_links(self):
        run = execute(Scenario(n=3, horizon=10))
        with pytest.raises(ValueError):
            classify_deliveries(run, (1, 2))

    def test_liveness_threshold(self):
        assert liveness_threshold(1) == 4
        assert liveness_threshold(2, stale=5) == 18

    def test_liveness_holds_at_two_horizons(self):
        # a longer horizon only adds blocks; both must be clean
        for seed in range(8):
            for h in (300, 600):
                run = sweep_run(2, 2, "drop-new", seed, horizon=h)
                rep = check_contract(run)
                assert all(not lr.liveness_failures for lr in rep.links)

    def test_liveness_detects_a_silent_receiver(self):
        # a receiver that never delivers violates liveness once the sender repeats
        run = execute(Scenario(n=2, capacity=1, inputs=InputStream.repeat(1), seed=0, horizon=400))
        muted = replace(run, steps=tuple(replace(r, delivered=None) for r in run.steps))
        rep = check_contract(muted)
        assert rep.links[0].liveness_failures
        assert not rep.passed

    def test_duplicate_tag(self):
        # four copies at c=1 complete two deliveries from one logical send
        run = execute(Scenario(n=2, capacity=1, mode="semi-bounded", copies=4,
                               inputs=InputStream.explicit([0]),
                               script=((0, "input"),) + ((1, "recv"),) * 4, horizon=5))
        tags = [t.tag for t in classify_deliveries(run, (0, 1), ContractParams(gamma=0))]
        assert tags == ["real", "duplicate"]
        assert not check_contract(run, ContractParams(gamma=0)).passed

    def test_reorder_tag(self):
        run = execute(Scenario(n=2, capacity=1, mode="semi-bounded", inputs=InputStream.explicit([0, 1]),
                               script=((0, "input"), (0, "input"), (1, "recv:0:1"), (1, "recv:0:1"),
                                       (1, "recv:0:0"), (1, "recv:0:0")), horizon=6))
        tags = [t.tag for t in classify_deliveries(run, (0, 1), ContractParams(gamma=0))]
        assert tags == ["real", "reordered"]
