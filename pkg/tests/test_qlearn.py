import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aquarl import qlearn
from aquarl.errors import ConfigError, NonFinite
from aquarl.mdp import TabularMDP
from conftest import ExploringStarts, random_dag_mdp

CFG = qlearn.TrainConfig()
# 0.9 / e, 30-digit mpmath value
EPS_AT_T = 0.331091497054298097604535910641


class TestSchedule:
    def test_examples(self):
        assert qlearn.epsilon_schedule(0, CFG) == pytest.approx(0.9, rel=1e-12)
        assert qlearn.epsilon_schedule(6000, CFG) == pytest.approx(EPS_AT_T, rel=1e-6)
        assert qlearn.epsilon_schedule(10**7, CFG) == pytest.approx(0.0, abs=1e-300)

    def test_non_increasing_and_bounded(self):
        eps = [qlearn.epsilon_schedule(i, CFG) for i in range(30000)]
        assert all(b <= a for a, b in zip(eps, eps[1:]))
        assert all(0.0 <= e <= 0.9 for e in eps)

    def test_sustained(self):
        cfg = qlearn.TrainConfig(t_epsilon=math.inf, epsilon0=1.0)
        assert qlearn.epsilon_schedule(10**9, cfg) == 1.0

    def test_rejects_negative_episode(self):
        with pytest.raises(ValueError):
            qlearn.epsilon_schedule(-1, CFG)


class TestTDUpdate:
    def test_zero_table(self):
        q = qlearn.QTable.zeros(3, 2)
        assert qlearn.td_update(q, 0, 1, -0.5, 2, CFG) == pytest.approx(-0.05, rel=1e-9)

    def test_hand_example(self):
        q = qlearn.QTable.zeros(2, 2)
        q.values[0, 0] = -1.0
        q.values[1] = [-0.2, -0.7]
        cfg = qlearn.TrainConfig(alpha=0.5, gamma=0.8)
        assert qlearn.td_update(q, 0, 0, -0.1, 1, cfg) == pytest.approx(-0.63, rel=1e-9)

    @pytest.mark.parametrize("terminal", [None, -1])
    def test_terminal_fixed_point(self, terminal):
        q = qlearn.QTable.zeros(2, 2)
        q.values[1] = 5.0  # must be ignored
        assert qlearn.td_update(q, 0, 0, 0.0, terminal, CFG) == 0.0

    @given(st.integers(0, 4), st.integers(0, 2), st.floats(-10, 10), st.integers(-1, 4))
    def test_touches_one_entry(self, s, a, r, s2):
        rng = np.random.default_rng(0)
        q = qlearn.QTable(rng.normal(size=(5, 3)))
        before = q.values.copy()
        qlearn.td_update(q, s, a, r, s2, CFG)
        changed = np.argwhere(before != q.values)
        assert len(changed) <= 1
        if len(changed):
            assert tuple(changed[0]) == (s, a)

    def test_non_finite(self):
        q = qlearn.QTable.zeros(2, 1)
        with pytest.raises(NonFinite):
            qlearn.td_update(q, 0, 0, math.nan, 1, CFG)


class TestOracle:
    def test_terminal_only(self):
        mdp = TabularMDP(np.full((3, 2), -1), np.zeros((3, 2)))
        assert np.all(qlearn.value_iteration_oracle(mdp, 0.8).values == 0)

    def test_two_step_chain(self):
        mdp = TabularMDP(np.array([[1], [-1]]), np.array([[-1.0], [0.0]]))
        q = qlearn.value_iteration_oracle(mdp, 0.5).values
        assert q[0, 0] == pytest.approx(-1.0, rel=1e-9)

    def test_backward_induction(self):
        # 0 -a0-> 1 -> terminal ; 0 -a1-> terminal
        mdp = TabularMDP(np.array([[1, -1], [-1, -1]]),
                         np.array([[-0.1, -1.0], [-0.5, -2.0]]))
        q = qlearn.value_iteration_oracle(mdp, 0.8).values
        assert q[1].tolist() == pytest.approx([-0.5, -2.0])
        assert q[0].tolist() == pytest.approx([-0.1 + 0.8 * -0.5, -1.0])


class TestTrain:
    def test_single_state_single_action(self):
        mdp = TabularMDP(np.array([[-1]]), np.array([[-1.0]]))
        res = qlearn.train(mdp, qlearn.TrainConfig(gamma=0.0, alpha=0.5, max_episodes=200,
                                                   stop_patience=0))
        assert res.q.values[0, 0] == pytest.approx(-1.0, abs=1e-9)
        assert res.policy.tolist() == [0]

    def test_three_state_chain_matches_oracle(self):
        mdp = TabularMDP(np.array([[1, -1], [2, -1], [-1, -1]]),
                         np.array([[-0.2, -1.0], [-0.3, -0.1], [-0.4, -0.9]]))
        cfg = qlearn.TrainConfig(alpha=1.0, alpha_decay=0.4, epsilon0=1.0, t_epsilon=math.inf,
                                 stop_patience=0, max_episodes=3000)
        res = qlearn.train(ExploringStarts(mdp, 1), cfg)
        oracle = qlearn.value_iteration_oracle(mdp, cfg.gamma).values
        assert np.max(np.abs(res.q.values - oracle)) < 1e-3

    def test_seeded_reproducible(self):
        mdp = random_dag_mdp(np.random.default_rng(5), 12, 3)
        cfg = qlearn.TrainConfig(max_episodes=300, seed=9)
        a, b = qlearn.train(mdp, cfg), qlearn.train(mdp, cfg)
        assert np.array_equal(a.q.values, b.q.values)
        assert a.log.returns == b.log.returns

    def test_stops_on_stable_policy(self):
        mdp = TabularMDP(np.array([[-1, -1]]), np.array([[-1.0, -0.1]]))
        res = qlearn.train(mdp, qlearn.TrainConfig(stop_patience=5, max_episodes=1000))
        assert res.converged and res.episodes < 1000
        assert res.policy.tolist() == [1]
        assert res.log.policy_changes[-5:] == [0] * 5

    def test_no_convergence_flag(self):
        mdp = random_dag_mdp(np.random.default_rng(3), 20, 4)
        res = qlearn.train(mdp, qlearn.TrainConfig(max_episodes=1))
        assert res.no_convergence and res.episodes == 1

    def test_log_lengths(self):
        mdp = random_dag_mdp(np.random.default_rng(2), 10, 2)
        res = qlearn.train(mdp, qlearn.TrainConfig(max_episodes=50, stop_patience=0))
        assert len(res.log) == len(res.log.epsilons) == len(res.log.policy_changes) == 50
        assert res.log.epsilons[0] == pytest.approx(0.9)

    def test_rejects_bad_config(self):
        with pytest.raises(ConfigError):
            qlearn.TrainConfig(alpha=0.0)
        with pytest.raises(ConfigError):
            qlearn.TrainConfig(gamma=1.5)


class TestPolicy:
    def test_ties_pick_lowest_index(self):
        q = qlearn.QTable(np.array([[0.0, 0.0, -1.0], [-2.0, -1.0, -1.0]]))
        assert q.greedy().tolist() == [0, 1]

    @given(st.floats(-5, 5), st.floats(0.1, 10))
    def test_argmax_invariant_to_affine_rescale(self, shift, scale):
        values = np.random.default_rng(4).normal(size=(6, 4))
        a = qlearn.QTable(values).greedy()
        b = qlearn.QTable(values * scale + shift).greedy()
        assert np.array_equal(a, b)

    def test_rollout_return_equals_oracle(self):
        for k in range(5):
            mdp = random_dag_mdp(np.random.default_rng(40 + k), 15, 3)
            q = qlearn.value_iteration_oracle(mdp, 0.8)
            ep = qlearn.rollout(q.greedy(), mdp, 0.8)
            assert ep.discounted_return == pytest.approx(q.values[0].max(), rel=1e-9)


class TestQTableIO:
    def test_round_trip_exact(self, tmp_path):
        q = qlearn.QTable(np.random.default_rng(0).normal(size=(7, 3)) / 3)
        q.to_csv(tmp_path / "q.csv")
        back = qlearn.QTable.from_csv(tmp_path / "q.csv")
        assert np.array_equal(back.values, q.values)

    def test_header(self):
        buf = io.StringIO()
        qlearn.QTable.zeros(2, 2).write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("# aquarl-qtable/1")
        assert lines[1] == "state,action,value"

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.csv").write_text("state,action,value\n0,0,1\n")
        with pytest.raises(ConfigError):
            qlearn.QTable.from_csv(tmp_path / "x.csv")


def test_moving_average():
    log = qlearn.TrainingLog(returns=[1.0, 2.0, 3.0, 4.0])
    assert log.moving_average(2).tolist() == [1.5, 2.5, 3.5]
    assert log.moving_average(10).size == 0
