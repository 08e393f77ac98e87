import numpy as np
import pytest

import pushpull as pp
from pushpull.gossip import enumerate_events

from conftest import four_ring_chord, star_graphs


def ring4():
    return pp.Digraph.from_edges(4, [(1, 2), (2, 3), (3, 4), (4, 1)])


class TestSampling:
    def test_pure_in_seed_and_tick(self):
        g = four_ring_chord()
        a = pp.sample_event(g, g, 0.5, seed=3, k=10)
        b = pp.sample_event(g, g, 0.5, seed=3, k=10)
        c = pp.sample_event(g, g, 0.5, seed=3, k=11)
        assert a == b
        assert (a.i, a.j, a.l) != (c.i, c.j, c.l) or True  # ticks are independent draws

    def test_single_agent_network_has_no_targets(self):
        g = pp.Digraph(1, frozenset())
        ev = pp.sample_event(g, g, 0.5, seed=0, k=0)
        assert ev.i == 1 and ev.j is None and ev.l is None

    def test_agent_without_out_neighbors_gets_no_pull_target(self):
        pull, push = star_graphs()
        # Leaf 2 has no out-neighbors in the pull star.
        for k in range(200):
            ev = pp.sample_event(pull, push, 0.5, seed=1, k=k)
            if ev.i == 2:
                assert ev.j is None
                assert ev.l == 1
                break
        else:
            pytest.fail("agent 2 never woke in 200 ticks")

    def test_wakeup_frequencies_are_uniform(self):
        g = ring4()
        counts = np.zeros(4)
        trials = 100_000
        for k in range(trials):
            counts[pp.sample_event(g, g, 0.5, seed=7, k=k).i - 1] += 1
        freqs = counts / trials
        assert np.abs(freqs - 0.25).max() <= 0.01

    def test_gamma_validated(self):
        with pytest.raises(ValueError):
            pp.GossipEvent(i=1, j=None, l=None, gamma=1.0)


class TestEventMatrices:
    def test_reference_event(self):
        ev = pp.GossipEvent(i=1, j=2, l=3, gamma=0.5)
        mats = pp.event_matrices(ev, 4)
        expected_r = np.eye(4)
        expected_r[1] = [0.5, 0.5, 0.0, 0.0]
        assert np.array_equal(mats.R, expected_r)
        assert np.array_equal(mats.C[:, 0], np.array([0.5, 0.0, 0.5, 0.0]))
        assert np.array_equal(np.diag(mats.Q), np.array([1.0, 1.0, 1.0, 0.0]))

    def test_stochasticity_is_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            i = int(rng.integers(n)) + 1
            j = int(rng.integers(n)) + 1
            l = int(rng.integers(n)) + 1
            ev = pp.GossipEvent(
                i=i,
                j=None if j == i else j,
                l=None if l == i else l,
                gamma=float(rng.uniform(1e-6, 1 - 1e-6)),
            )
            mats = pp.event_matrices(ev, n)
            assert np.all(mats.R.sum(axis=1) == 1.0)
            assert np.all(mats.C.sum(axis=0) == 1.0)

    def test_shared_target_participates_once(self):
        ev = pp.GossipEvent(i=1, j=3, l=3, gamma=0.25)
        mats = pp.event_matrices(ev, 4)
        assert np.count_nonzero(np.diag(mats.Q)) == 2
        assert np.all(np.diag(mats.Q) <= 1.0)

    def test_absent_targets_leave_identity(self):
        ev = pp.GossipEvent(i=2, j=None, l=None, gamma=0.5)
        mats = pp.event_matrices(ev, 3)
        assert np.array_equal(mats.R, np.eye(3))
        assert np.array_equal(mats.C, np.eye(3))
        assert np.array_equal(np.diag(mats.Q), np.array([0.0, 1.0, 0.0]))


class TestGossipStep:
    def _setup(self, n=4, seed=0):
        obj = pp.random_quadratic_set(n, 2, seed=seed)
        rng = np.random.default_rng(seed + 100)
        x0 = rng.standard_normal((n, 2))
        return obj, pp.init(obj, x0)

    def test_matches_matrix_form(self):
        # The in-place update must equal the dense tick recursion exactly.
        obj, state = self._setup()
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        rng = np.random.default_rng(3)
        for trial in range(200):
            n = 4
            i = int(rng.integers(n)) + 1
            j = int(rng.integers(n)) + 1
            l = int(rng.integers(n)) + 1
            ev = pp.GossipEvent(
                i=i,
                j=None if j == i else j,
                l=None if l == i else l,
                gamma=0.4,
            )
            mats = pp.event_matrices(ev, n)
            new = pp.gossip_step(state, ev, profile, obj, mode="restricted")
            x_ref = mats.R @ state.x - 0.1 * mats.Q @ state.y
            y_ref = mats.C @ state.y + obj.stacked_gradient(x_ref) - obj.stacked_gradient(state.x)
            assert np.allclose(new.x, x_ref, atol=1e-14)
            assert np.allclose(new.y, y_ref, atol=1e-14)
            state = new

    def test_isolated_wakeup_is_local_descent(self):
        obj, state = self._setup()
        ev = pp.GossipEvent(i=2, j=None, l=None, gamma=0.5)
        profile = pp.StepsizeProfile.uniform(4, 0.2)
        new = pp.gossip_step(state, ev, profile, obj)
        expected_x1 = state.x[1] - 0.2 * state.y[1]
        assert np.allclose(new.x[1], expected_x1)
        for a in (0, 2, 3):
            assert np.array_equal(new.x[a], state.x[a])
            assert np.array_equal(new.y[a], state.y[a])

    def test_untouched_agents_do_not_move(self):
        obj, state = self._setup()
        ev = pp.GossipEvent(i=1, j=2, l=3, gamma=0.5)
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        new = pp.gossip_step(state, ev, profile, obj)
        assert np.array_equal(new.x[3], state.x[3])
        assert np.array_equal(new.y[3], state.y[3])
        for a in (0, 1, 2):
            assert not np.array_equal(new.x[a], state.x[a])

    def test_restricted_mode_requires_common_stepsize(self):
        obj, state = self._setup()
        ev = pp.GossipEvent(i=1, j=2, l=3, gamma=0.5)
        profile = pp.StepsizeProfile(np.array([0.1, 0.2, 0.1, 0.1]))
        with pytest.raises(ValueError):
            pp.gossip_step(state, ev, profile, obj, mode="restricted")

    def test_general_mode_doubles_shared_target_step(self):
        obj, state = self._setup()
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        ev = pp.GossipEvent(i=1, j=3, l=3, gamma=0.5)
        restricted = pp.gossip_step(state, ev, profile, obj, mode="restricted")
        general = pp.gossip_step(state, ev, profile, obj, mode="general")
        gap = general.x[2] - restricted.x[2]
        assert np.allclose(gap, -0.1 * state.y[2], atol=1e-14)

    def test_tracking_identity_over_many_ticks(self):
        g = four_ring_chord()
        obj, state = self._setup()
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        worst = 0.0
        for k in range(2000):
            ev = pp.sample_event(g, g, 0.5, seed=5, k=k)
            state = pp.gossip_step(state, ev, profile, obj)
            worst = max(worst, pp.tracking_defect(state, obj))
        assert worst <= 1e-9


class TestGossipAll:
    def test_degree_one_matches_single_neighbor_general_step(self):
        g = ring4()  # every agent has exactly one out-neighbor
        obj = pp.random_quadratic_set(4, 2, seed=1)
        state = pp.init(obj, np.random.default_rng(1).standard_normal((4, 2)))
        profile = pp.StepsizeProfile.uniform(4, 0.15)
        ev = pp.GossipEvent(i=2, j=3, l=3, gamma=0.3)
        a = pp.gossip_all_step(state, 2, 0.3, profile, obj, g, g)
        b = pp.gossip_step(state, ev, profile, obj, mode="general")
        assert np.allclose(a.x, b.x, atol=1e-15)
        assert np.allclose(a.y, b.y, atol=1e-15)

    def test_distinct_protocol_graphs(self):
        g_pull = ring4()
        g_push = pp.Digraph.from_edges(4, [(1, 3), (2, 4), (3, 1), (4, 2)])
        obj = pp.random_quadratic_set(4, 1, seed=2)
        state = pp.init(obj, np.ones((4, 1)))
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        ev = pp.GossipEvent(i=1, j=2, l=3, gamma=0.2)
        a = pp.gossip_all_step(state, 1, 0.2, profile, obj, g_pull, g_push)
        b = pp.gossip_step(state, ev, profile, obj, mode="general")
        assert np.allclose(a.x, b.x, atol=1e-15)
        assert np.allclose(a.y, b.y, atol=1e-15)

    def test_broadcast_scales_sender_tracker(self):
        pull, _ = star_graphs()  # center 1 has three out-neighbors here
        obj = pp.random_quadratic_set(4, 1, seed=3)
        state = pp.init(obj, np.zeros((4, 1)))
        profile = pp.StepsizeProfile.uniform(4, 0.0)  # isolate the tracker push
        new = pp.gossip_all_step(state, 1, 0.2, profile, obj, pull, pull)
        # Center keeps 1 - 3 * 0.2 of its tracker before gradient correction;
        # x is unchanged at zero stepsize so there is no correction at all.
        assert np.allclose(new.y[0], (1 - 0.6) * state.y[0])
        for leaf in (1, 2, 3):
            assert np.allclose(new.y[leaf], state.y[leaf] + 0.2 * state.y[0])
        assert np.allclose(new.y.sum(axis=0), state.y.sum(axis=0), atol=1e-14)

    def test_mass_split_guard(self):
        pull, _ = star_graphs()
        obj = pp.random_quadratic_set(4, 1, seed=4)
        state = pp.init(obj, np.zeros((4, 1)))
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        with pytest.raises(ValueError):
            pp.gossip_all_step(state, 1, 0.34, profile, obj, pull, pull)

    def test_tracking_identity(self):
        g = four_ring_chord()
        obj = pp.random_quadratic_set(4, 2, seed=5)
        state = pp.init(obj, np.ones((4, 2)))
        profile = pp.StepsizeProfile.uniform(4, 0.1)
        rng = np.random.default_rng(6)
        for _ in range(1000):
            i = int(rng.integers(4)) + 1
            state = pp.gossip_all_step(state, i, 0.2, profile, obj, g, g)
        assert pp.tracking_defect(state, obj) <= 1e-9


class TestExpectations:
    def test_probabilities_sum_to_one(self):
        g = four_ring_chord()
        outcomes = enumerate_events(g, g)
        assert abs(sum(p for p, *_ in outcomes) - 1.0) < 1e-12

    def test_generators_annihilate_their_null_vectors(self):
        g = four_ring_chord()
        exp = pp.expected_matrices(g, g, gamma=0.4)
        assert np.allclose(exp.T_bar @ np.ones(4), 0.0, atol=1e-14)
        assert np.allclose(np.ones(4) @ exp.E_bar, 0.0, atol=1e-14)
        assert np.allclose(exp.u_bar @ exp.T_bar, 0.0, atol=1e-12)
        assert np.allclose(exp.E_bar @ exp.v_bar, 0.0, atol=1e-12)

    def test_expected_matrices_are_stochastic(self):
        g = four_ring_chord()
        exp = pp.expected_matrices(g, g, gamma=0.4)
        assert np.allclose(exp.R_bar.sum(axis=1), 1.0, atol=1e-14)
        assert np.allclose(exp.C_bar.sum(axis=0), 1.0, atol=1e-14)

    def test_spectrum_confined_to_shifted_disc(self):
        for g in (four_ring_chord(), pp.random_strongly_connected(6, 14, seed=8)):
            exp = pp.expected_matrices(g, g, gamma=0.3)
            for gen in (exp.T_bar, exp.E_bar):
                eigs = np.linalg.eigvals(gen)
                zero_count = int(np.sum(np.abs(eigs) < 1e-10))
                assert zero_count == 1
                others = eigs[np.abs(eigs) >= 1e-10]
                assert np.all(np.abs(1.0 + others) < 1.0)

    def test_eta_positive(self):
        g = four_ring_chord()
        exp = pp.expected_matrices(g, g, gamma=0.3)
        assert exp.eta > 0

    def test_monte_carlo_agreement_lite(self):
        g = ring4()
        gamma = 0.5
        exp = pp.expected_matrices(g, g, gamma)
        trials = 20_000
        acc = np.zeros((4, 4))
        for k in range(trials):
            ev = pp.sample_event(g, g, gamma, seed=11, k=k)
            acc += pp.event_matrices(ev, 4).R
        emp = acc / trials
        # Every entry deviates from the identity by gamma times a Bernoulli.
        probs = np.clip(np.abs(exp.R_bar - np.eye(4)) / gamma, 0.0, 1.0)
        se = gamma * np.sqrt(probs * (1 - probs) / trials)
        assert np.all(np.abs(emp - exp.R_bar) <= 3 * se + 1e-12)


class TestRunGossip:
    def test_deterministic_traces(self, tmp_path):
        g = four_ring_chord()
        obj = pp.random_quadratic_set(4, 2, seed=9)
        t1 = pp.run_gossip(obj, g, g, alpha=0.2, gamma=0.5, budget=300, seed=4)
        t2 = pp.run_gossip(obj, g, g, alpha=0.2, gamma=0.5, budget=300, seed=4)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        t1.to_csv(p1)
        t2.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seeds_differ(self):
        g = four_ring_chord()
        obj = pp.random_quadratic_set(4, 2, seed=9)
        t1 = pp.run_gossip(obj, g, g, alpha=0.2, gamma=0.5, budget=200, seed=4)
        t2 = pp.run_gossip(obj, g, g, alpha=0.2, gamma=0.5, budget=200, seed=5)
        assert not np.array_equal(t1.residual, t2.residual)

    def test_converges_in_mean_on_ring(self):
        g = ring4()
        obj = pp.random_quadratic_set(4, 1, seed=10)
        mean_sq, traces = pp.run_gossip_ensemble(
            obj, g, g, alpha=0.3, gamma=0.5, budget=2500, seeds=range(8)
        )
        assert mean_sq[-1] < 1e-3 * mean_sq[0]
        for t in traces:
            assert t.identity_defect.max() <= 1e-9

    def test_event_log_collected(self):
        g = ring4()
        obj = pp.random_quadratic_set(4, 1, seed=11)
        tr = pp.run_gossip(
            obj, g, g, alpha=0.2, gamma=0.5, budget=50, seed=0, collect_events=True
        )
        events = tr.metadata["events"]
        assert len(events) == 50
        ks, iis, js, ls = zip(*events)
        assert list(ks) == list(range(50))
        assert all(1 <= i <= 4 for i in iis)

    def test_broadcast_mode_runs(self):
        g = four_ring_chord()
        obj = pp.random_quadratic_set(4, 1, seed=12)
        tr = pp.run_gossip(
            obj, g, g, alpha=0.2, gamma=0.2, budget=2000, seed=1, mode="all"
        )
        assert tr.final_residual < 1e-4
        assert tr.identity_defect.max() <= 1e-9
