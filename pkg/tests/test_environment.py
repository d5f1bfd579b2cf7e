import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exitbandit.environment import (
    ExitOutcome,
    ExitProfile,
    ReplayEnvironment,
    SampleBatch,
    SyntheticEnvironment,
    TraceFormatError,
    TraceRecord,
    TraceTooShortError,
    arm_mean_rewards,
    batch_to_records,
    compute_reward,
    exit_indices,
    format_record,
    lambda_from_epsilon,
    load_trace,
    records_to_batch,
    resolve_arms,
    resolve_exit,
    samples_from_units,
    synth_sample,
    synth_samples,
    write_trace,
)
from exitbandit.numerics import RngStream

NOISELESS = ExitProfile(confidence_noise_sd=0.0, gating_noise_sd=0.0)
COARSE = [0.5, 0.6, 0.7, 0.8, 0.9]


def one(conf, gating=None, correct=None, profile=ExitProfile()):
    L = len(conf)
    return SampleBatch(
        confidence=np.array([conf], float),
        correct=np.array([correct or [True] * L]),
        gating=np.array([gating or [0.1] * L], float),
        latency_ms=np.array([profile.latency_ms]),
        energy_units=np.array([profile.energy_units]),
    )


class TestProfile:
    def test_defaults(self):
        p = ExitProfile()
        assert p.num_exits == 4
        assert p.latency_ms == (1, 2, 3.5, 5) and p.energy_units == (1, 2.2, 3.8, 6)

    @pytest.mark.parametrize("kw", [
        {"confidence_gain": (0.6,), "accuracy_ceiling": (0.7,), "latency_ms": (1,), "energy_units": (1,)},
        {"confidence_gain": (0.8, 0.6, 0.9, 0.97)},
        {"accuracy_ceiling": (0.7, 0.85, 0.92)},
        {"latency_ms": (1, 1, 2, 3)},
        {"energy_units": (0, 1, 2, 3)},
        {"confidence_noise_sd": -0.1},
        {"accuracy_ceiling": (0.9, 0.8, 0.92, 0.95)},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExitProfile(**kw)


class TestSynth:
    def test_noiseless_matches_formula(self):
        b = synth_samples(NOISELESS, RngStream.from_seed(11), 200)
        g, a = np.array(NOISELESS.confidence_gain), np.array(NOISELESS.accuracy_ceiling)
        np.testing.assert_array_equal(b.confidence, np.clip(g * (1 - b.difficulty)[:, None], 0, 1))
        np.testing.assert_allclose(b.gating, 1 - a * b.confidence, atol=1e-15)

    def test_noiseless_extremes(self):
        g, a = np.array(NOISELESS.confidence_gain), np.array(NOISELESS.accuracy_ceiling)
        u = np.full((2, 13), 0.5)
        u[0, 0], u[1, 0] = 0.0, 1.0
        u[:, 2::3] = 0.0  # smallest possible correctness draw
        b = samples_from_units(NOISELESS, u)
        np.testing.assert_array_equal(b.confidence[0], g)
        np.testing.assert_allclose(b.gating[0], 1 - a * g, atol=1e-15)
        np.testing.assert_array_equal(b.confidence[1], np.zeros(4))
        assert not b.correct[1].any()
        np.testing.assert_array_equal(b.gating[1], np.ones(4))

    def test_draw_order_and_consumption(self):
        L = NOISELESS.num_exits
        rng = RngStream.from_seed(3)
        s = synth_sample(ExitProfile(), rng)
        ref = RngStream.from_seed(3)
        u = [ref.next_unit() for _ in range(1 + 3 * L)]
        assert rng.state == ref.state
        assert s.difficulty[0] == u[0]
        correct_u = np.array(u[2::3])
        np.testing.assert_array_equal(s.correct[0], correct_u < np.array(ExitProfile().accuracy_ceiling) * s.confidence[0])

    def test_batch_equals_repeated_single(self):
        a = RngStream.from_seed(8)
        b = RngStream.from_seed(8)
        batch = synth_samples(ExitProfile(), a, 5)
        for i in range(5):
            s = synth_sample(ExitProfile(), b)
            np.testing.assert_allclose(s.confidence[0], batch.confidence[i], atol=1e-15)
            np.testing.assert_array_equal(s.correct[0], batch.correct[i])

    def test_mean_confidence_noiseless(self):
        b = synth_samples(NOISELESS, RngStream.from_seed(2), 100_000)
        np.testing.assert_allclose(b.confidence.mean(axis=0), np.array(NOISELESS.confidence_gain) / 2, atol=0.005)

    def test_ranges(self):
        b = synth_samples(ExitProfile(confidence_noise_sd=0.5, gating_noise_sd=0.5), RngStream.from_seed(4), 5000)
        for arr in (b.confidence, b.gating):
            assert arr.min() >= 0 and arr.max() <= 1


class TestResolve:
    def test_example(self):
        assert resolve_exit(one([0.55, 0.72, 0.88, 0.99]), 0.7).exit_index == 2

    def test_theta_zero(self):
        assert resolve_exit(one([0.0, 0.1, 0.2, 0.3]), 0.0).exit_index == 1

    def test_fallthrough(self):
        o = resolve_exit(one([0.5, 0.6, 0.7, 0.9], gating=[0.1, 0.2, 0.3, 0.4]), 1.0)
        assert o.exit_index == 4
        assert (o.confidence, o.gating, o.latency_ms, o.energy_units) == (0.9, 0.4, 5.0, 6.0)

    def test_bad_theta(self):
        with pytest.raises(ValueError):
            resolve_exit(one([0.5] * 4), 1.1)

    @settings(max_examples=200)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_theta(self, conf, t1, t2):
        lo, hi = sorted((t1, t2))
        assert exit_indices(np.array(conf), lo)[0] <= exit_indices(np.array(conf), hi)[0]


class TestReward:
    def out(self, C, G, e):
        return ExitOutcome(exit_index=e, confidence=C, gating=G, correct=True, latency_ms=1, energy_units=1)

    def test_example(self):
        r, c = compute_reward(self.out(0.9, 0.2, 2), 0.0025, "UCB1", 4)
        assert r == pytest.approx(0.715, abs=1e-12) and c == 0.5

    def test_unreliable(self):
        assert compute_reward(self.out(0.9, 1.0, 3), 0.0025, "UCB-V", 4)[0] == 0.0

    def test_bwk(self):
        r, c = compute_reward(self.out(0.9, 0.2, 2), 0.0025, "UCB-BwK", 4)
        assert r == pytest.approx(0.72, abs=1e-12) and c == 0.5

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 8), st.floats(0, 1),
           st.sampled_from(["UCB1", "UCB-BwK"]))
    def test_range(self, C, G, e, lam, kind):
        r, c = compute_reward(self.out(C, G, e), lam, kind, 8)
        assert 0 <= r <= 1 and 0 < c <= 1

    def test_lambda(self):
        assert lambda_from_epsilon(0.01, 4) == 0.0025
        assert lambda_from_epsilon(0.01, 3) == pytest.approx(0.0033333333333333335)
        assert lambda_from_epsilon(0.0, 4) == 0.0
        with pytest.raises(ValueError):
            lambda_from_epsilon(-1, 4)

    def test_vector_matches_scalar(self):
        b = synth_samples(ExitProfile(), RngStream.from_seed(6), 300)
        for kind in ("UCB1", "UCB-BwK"):
            out = resolve_arms(b, COARSE, 0.0025, kind)
            for k, theta in enumerate(COARSE):
                for i in range(0, 300, 37):
                    o = resolve_exit(b, theta, row=i)
                    r, c = compute_reward(o, 0.0025, kind, 4)
                    assert (out.reward[k, i], out.cost[k, i], out.exit_index[k, i]) == (r, c, o.exit_index)


class TestTraceIO:
    def test_empty(self, tmp_path):
        f = tmp_path / "e.jsonl"
        f.write_text("")
        assert load_trace(f) == []

    def test_inconsistent_L(self, tmp_path):
        f = tmp_path / "t.jsonl"
        f.write_text(
            '{"sample_id":0,"conf":[0.1,0.2,0.3,0.4],"correct":[true,true,true,true],"gating":[0,0,0,0]}\n'
            '{"sample_id":1,"conf":[0.1,0.2,0.3],"correct":[true,true,true],"gating":[0,0,0]}\n'
        )
        with pytest.raises(TraceFormatError, match="line 2.*conf"):
            load_trace(f)

    @pytest.mark.parametrize("line,match", [
        ('{"sample_id":0,"conf":[1.5,0.2],"correct":[true,true],"gating":[0,0]}', "outside"),
        ('{"sample_id":0,"conf":[0.5,0.2],"correct":[1,true],"gating":[0,0]}', "correct"),
        ('{"sample_id":0,"conf":[0.5,0.2],"gating":[0,0]}', "missing field 'correct'"),
        ('{"sample_id":"a","conf":[0.5,0.2],"correct":[true,true],"gating":[0,0]}', "sample_id"),
        ('not json', "line 1"),
        ('{"sample_id":0,"conf":[0.5,0.2],"correct":[true,true],"gating":[0,0],"x":1}', "unknown"),
    ])
    def test_malformed(self, tmp_path, line, match):
        f = tmp_path / "bad.jsonl"
        f.write_text(line + "\n")
        with pytest.raises(TraceFormatError, match=match):
            load_trace(f)

    def test_round_trip_bytes(self, tmp_path):
        b = synth_samples(ExitProfile(), RngStream.from_seed(1), 50)
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_trace(batch_to_records(b), f1)
        write_trace(load_trace(f1), f2)
        assert f1.read_bytes() == f2.read_bytes()
        assert f1.read_bytes().endswith(b"\n") and b"\r" not in f1.read_bytes()

    def test_replay_exact_values(self, tmp_path):
        b = synth_samples(ExitProfile(), RngStream.from_seed(1), 20)
        f = tmp_path / "a.jsonl"
        write_trace(batch_to_records(b, with_costs=False), f)
        rb = records_to_batch(load_trace(f), ExitProfile())
        np.testing.assert_array_equal(rb.confidence, b.confidence)
        np.testing.assert_array_equal(rb.gating, b.gating)
        np.testing.assert_array_equal(rb.latency_ms, b.latency_ms)

    def test_missing_costs_need_profile(self):
        recs = [TraceRecord(0, [0.1, 0.2, 0.3], [True] * 3, [0.0] * 3)]
        with pytest.raises(ValueError):
            records_to_batch(recs, ExitProfile())
        assert records_to_batch(recs, ExitProfile(
            confidence_gain=(0.5, 0.6, 0.7), accuracy_ceiling=(0.5, 0.6, 0.7),
            latency_ms=(1, 2, 3), energy_units=(1, 2, 3))).latency_ms.shape == (1, 3)

    def test_format_field_order(self):
        rec = TraceRecord(3, [0.5], [False], [0.25], [1.0], [2.0])
        assert format_record(rec) == '{"sample_id":3,"conf":[0.5],"correct":[false],"gating":[0.25],"latency_ms":[1.0],"energy":[2.0]}'


class TestReplayAndOracle:
    def test_replay_consumes_no_rng_and_is_deterministic(self):
        b = synth_samples(ExitProfile(), RngStream.from_seed(1), 30)
        env = ReplayEnvironment(b)
        rng = RngStream.from_seed(5)
        state = rng.state
        d1, d2 = env.draw(30, rng), env.draw(30, rng)
        assert rng.state == state
        np.testing.assert_array_equal(d1.confidence, d2.confidence)

    def test_too_short(self):
        env = ReplayEnvironment(synth_samples(ExitProfile(), RngStream.from_seed(1), 10))
        with pytest.raises(TraceTooShortError, match="at most 10"):
            env.draw(11)

    def test_noiseless_oracle_matches_analytic(self):
        # with no noise the per-sample reward is a function of d only; the oracle must
        # equal the mean of that function over the very same d values
        env = SyntheticEnvironment(NOISELESS)
        n = 2000
        mu = arm_mean_rewards(env, COARSE, n, RngStream.from_seed(9), 0.0025, "UCB1")
        d = synth_samples(NOISELESS, RngStream.from_seed(9), n).difficulty
        g, a = np.array(NOISELESS.confidence_gain), np.array(NOISELESS.accuracy_ceiling)
        for k, theta in enumerate(COARSE):
            vals = []
            for di in d:
                c = np.clip(g * (1 - di), 0, 1)
                e = next((l + 1 for l in range(4) if c[l] >= theta), 4)
                G = np.clip(1 - a[e - 1] * c[e - 1], 0, 1)
                vals.append(min(max(c[e - 1] * (1 - G) - 0.0025 * e, 0), 1))
            assert mu[k] == pytest.approx(np.mean(vals), abs=1e-12)

    def test_replay_oracle_brute_force(self):
        b = synth_samples(ExitProfile(), RngStream.from_seed(12), 100)
        env = ReplayEnvironment(b)
        for kind in ("UCB1", "UCB-BwK"):
            mu = arm_mean_rewards(env, COARSE, 1, None, 0.0025, kind)
            for k, theta in enumerate(COARSE):
                rs, cs = [], []
                for i in range(100):
                    r, c = compute_reward(resolve_exit(b, theta, row=i), 0.0025, kind, 4)
                    rs.append(r)
                    cs.append(c)
                expected = np.mean(rs) / np.mean(cs) if kind == "UCB-BwK" else np.mean(rs)
                assert mu[k] == pytest.approx(expected, abs=1e-12)

    def test_common_random_numbers(self):
        b = synth_samples(ExitProfile(), RngStream.from_seed(12), 500)
        out = resolve_arms(b, COARSE, 0.0025, "UCB1")
        # arms that exit at the same place on a sample see the identical reward
        same = out.exit_index[0] == out.exit_index[-1]
        np.testing.assert_array_equal(out.reward[0][same], out.reward[-1][same])

    def test_cost_monotone_in_theta(self):
        b = synth_samples(ExitProfile(), RngStream.from_seed(13), 5000)
        out = resolve_arms(b, COARSE, 0.0025, "UCB1")
        assert np.all(np.diff(out.exit_index, axis=0) >= 0)
        assert np.all(np.diff(out.cost.mean(axis=1)) >= 0)
