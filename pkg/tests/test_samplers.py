import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler_lab.analysis import fit_power_law
from sampler_lab.distributions import GaussianMixture, UnimodalGaussian, generate_patchy_environment, log_density
from sampler_lab.samplers import (
    NEIGHBORS_ONLY,
    RANDOM_PAIRS,
    ProposalSpec,
    TemperatureLadder,
    _swap_pairs,
    initial_point,
    levy_proposal,
    read_trace_csv,
    run_ds,
    run_mc3,
    run_rwm,
    rwm_step,
    swap_acceptance,
    write_trace_csv,
)

STD = UnimodalGaussian([0.0], 1.0)


class ScriptedRng:
    """Feeds fixed normals and uniforms to a single Metropolis step."""

    def __init__(self, normals, uniform):
        self.normals = np.asarray(normals, dtype=float)
        self.uniform = uniform

    def standard_normal(self, n):
        assert n == self.normals.size
        return self.normals.copy()

    def random(self):
        return self.uniform


@pytest.mark.parametrize("T, prob", [(1.0, math.exp(-2.0)), (4.0, math.exp(-0.5))])
def test_forced_proposal_acceptance_probability(T, prob):
    # x=0 -> x'=2 under N(0,1): ratio e^{-2}, tempered e^{-2/T}
    prop = ProposalSpec.gaussian(1.0)
    below, acc = rwm_step(STD, [0.0], prop, T, ScriptedRng([2.0], prob * (1 - 1e-9)))
    assert acc and below[0] == 2.0
    above, acc = rwm_step(STD, [0.0], prop, T, ScriptedRng([2.0], prob * (1 + 1e-9)))
    assert not acc and above[0] == 0.0


def test_uphill_proposal_always_accepted():
    x, acc = rwm_step(STD, [2.0], ProposalSpec.gaussian(1.0), 1.0, ScriptedRng([-2.0], 0.999999999))
    assert acc and x[0] == 0.0


def test_rwm_step_rejects_bad_temperature():
    with pytest.raises(ValueError):
        rwm_step(STD, [0.0], ProposalSpec.gaussian(), 0.5, np.random.default_rng(0))


def test_proposal_and_ladder_validation():
    with pytest.raises(ValueError):
        ProposalSpec.gaussian(0.0)
    with pytest.raises(ValueError):
        ProposalSpec.levy(1.0, 0.1, 10)
    with pytest.raises(ValueError):
        ProposalSpec.levy(2.0, 5, 1)
    with pytest.raises(ValueError):
        TemperatureLadder((2.0, 4.0))
    with pytest.raises(ValueError):
        TemperatureLadder((1.0, 3.0, 2.0))
    assert TemperatureLadder.geometric(8).temps == tuple(2.0**i for i in range(8))
    assert TemperatureLadder.geometric(2).temps == (1.0, 2.0)


def test_run_ds_properties():
    env = generate_patchy_environment(15, 9, 2, np.random.default_rng(0))
    a = run_ds(env, 100, np.random.default_rng(1))
    b = run_ds(env, 100, np.random.default_rng(1))
    assert np.array_equal(a.positions, b.positions)
    assert a.positions.shape == (100, 2)
    assert a.accept_count.sum() == 0 and a.swap_attempts == 0 and a.swap_accepts == 0
    with pytest.raises(ValueError):
        run_ds(env, 0, np.random.default_rng(1))


def test_levy_lengths_within_truncation():
    rng = np.random.default_rng(2)
    x = np.zeros(2)
    lengths = [np.linalg.norm(levy_proposal(x, 1.7, 0.5, 20.0, rng)) for _ in range(5000)]
    assert min(lengths) >= 0.5 - 1e-12 and max(lengths) <= 20.0 + 1e-12


def test_levy_lengths_recover_exponent():
    rng = np.random.default_rng(3)
    x = np.zeros(2)
    lengths = np.array([np.linalg.norm(levy_proposal(x, 2.0, 0.1, 100.0, rng)) for _ in range(100_000)])
    assert fit_power_law(lengths).mu_hat == pytest.approx(2.0, abs=0.1)


def test_levy_directions_are_isotropic():
    rng = np.random.default_rng(4)
    x = np.zeros(2)
    dirs = []
    for _ in range(100_000):
        step = levy_proposal(x, 2.0, 1.0, 2.0, rng)
        dirs.append(step / np.linalg.norm(step))
    assert np.all(np.abs(np.mean(dirs, axis=0)) < 0.01)


def test_run_rwm_starts_at_x0_and_repeats_rejections():
    env = generate_patchy_environment(15, 9, 2, np.random.default_rng(0))
    x0 = initial_point(env)
    tr = run_rwm(env, 500, x0, ProposalSpec.gaussian(1.0), np.random.default_rng(5))
    assert np.array_equal(tr.positions[0], x0)
    rejected = np.flatnonzero(~tr.accepted[1:, 0]) + 1
    assert rejected.size > 0
    assert np.all(tr.positions[rejected] == tr.positions[rejected - 1])
    assert tr.accept_count[0] == tr.accepted[:, 0].sum() <= len(tr)
    with pytest.raises(ValueError):
        run_rwm(env, 0, x0, ProposalSpec.gaussian(), np.random.default_rng(5))


def test_initial_point_is_mode_nearest_origin():
    env = GaussianMixture(np.array([[5.0, 5.0], [-1.0, 0.5], [0.0, 3.0]]))
    assert np.array_equal(initial_point(env), [-1.0, 0.5])
    assert np.array_equal(initial_point(UnimodalGaussian([2.0], 3.0)), [2.0])
    assert np.array_equal(initial_point(env, [1.0, 1.0]), [1.0, 1.0])


def test_tiny_proposal_is_nearly_always_accepted():
    g = UnimodalGaussian([0.0], 3.0)
    tr = run_rwm(g, 2000, [0.0], ProposalSpec.gaussian(1e-4), np.random.default_rng(6))
    assert tr.acceptance_rate[0] > 0.99


def test_rwm_stationary_moments():
    g = UnimodalGaussian([0.0], 3.0)
    tr = run_rwm(g, 100_000, [0.0], ProposalSpec.gaussian(1.0), np.random.default_rng(7))
    x = tr.positions[:, 0]
    assert abs(x.mean()) < 0.1
    assert abs(x.std() - 3.0) < 0.15


def test_swap_acceptance_values():
    assert swap_acceptance(STD, [1.3], [1.3], 1.0, 4.0) == 1.0
    assert swap_acceptance(STD, [0.0], [2.0], 3.0, 3.0) == 1.0
    assert swap_acceptance(STD, [0.0], [2.0], 1.0, 4.0) == pytest.approx(math.exp(-1.5), abs=1e-15)
    assert swap_acceptance(STD, [0.0], [2.0], 1.0, 4.0) == pytest.approx(0.2231, abs=1e-4)
    with pytest.raises(ValueError):
        swap_acceptance(STD, [0.0], [1.0], 0.5, 1.0)


@settings(max_examples=200)
@given(
    st.floats(-20, 20),
    st.floats(-20, 20),
    st.floats(1, 100),
    st.floats(1, 100),
)
def test_swap_pairwise_metropolis_property(xi, xj, Ti, Tj):
    a = swap_acceptance(STD, [xi], [xj], Ti, Tj)
    b = swap_acceptance(STD, [xj], [xi], Ti, Tj)
    assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
    assert a == 1.0 or b == 1.0


def test_swap_no_overflow_for_huge_log_densities():
    # log pi ~ -1e6 at x ~ 1414
    x_far = math.sqrt(2e6)
    assert log_density(STD, [x_far]) == pytest.approx(-1e6, rel=1e-5)
    for xi, xj in [([0.0], [x_far]), ([x_far], [0.0])]:
        p = swap_acceptance(STD, xi, xj, 1.0, 1000.0)
        assert 0.0 <= p <= 1.0 and math.isfinite(p)


def test_swap_pairs_policies():
    rng = np.random.default_rng(0)
    for M in (2, 3, 7, 8):
        pairs = _swap_pairs(M, RANDOM_PAIRS, rng)
        assert len(pairs) == M // 2
        used = [c for p in pairs for c in p]
        assert len(set(used)) == len(used)
        for i, j in _swap_pairs(M, NEIGHBORS_ONLY, rng):
            assert j == i + 1
    seen = {p for _ in range(50) for p in _swap_pairs(8, NEIGHBORS_ONLY, rng)}
    assert seen == {(i, i + 1) for i in range(7)}


@pytest.mark.parametrize("seed", range(5))
def test_mc3_with_one_chain_is_rwm(seed):
    env = generate_patchy_environment(15, 9, 2, np.random.default_rng(seed))
    x0 = initial_point(env)
    prop = ProposalSpec.gaussian(1.0)
    a = run_rwm(env, 400, x0, prop, np.random.default_rng(seed + 100))
    b = run_mc3(env, 400, 1, TemperatureLadder((1.0,)), prop, RANDOM_PAIRS, x0, np.random.default_rng(seed + 100))
    assert np.array_equal(a.positions, b.positions)
    assert b.swap_attempts == 0


def test_mc3_trace_invariants_and_determinism():
    env = generate_patchy_environment(15, 9, 2, np.random.default_rng(1))
    ladder = TemperatureLadder.geometric(8)
    args = (env, 300, 8, ladder, ProposalSpec.gaussian(1.0), RANDOM_PAIRS, initial_point(env))
    a = run_mc3(*args, np.random.default_rng(9), keep_all_chains=True)
    b = run_mc3(*args, np.random.default_rng(9))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.all_chains[:, 0], a.positions)
    assert a.swap_attempts == 299 * 4
    assert 0 < a.swap_accepts <= a.swap_attempts
    assert np.all(a.accept_count <= len(a))
    # hot chains accept more often
    assert a.acceptance_rate[-1] > a.acceptance_rate[0]


def test_mc3_rejects_bad_ladder():
    env = generate_patchy_environment(3, 4, 2, np.random.default_rng(1))
    with pytest.raises(ValueError):
        run_mc3(env, 10, 3, TemperatureLadder.geometric(2), ProposalSpec.gaussian(), RANDOM_PAIRS, [0, 0], np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_mc3(env, 10, 0, TemperatureLadder.geometric(1), ProposalSpec.gaussian(), RANDOM_PAIRS, [0, 0], np.random.default_rng(0))
    with pytest.raises(ValueError):
        run_mc3(env, 10, 2, TemperatureLadder.geometric(2), ProposalSpec.gaussian(), "ring", [0, 0], np.random.default_rng(0))


@pytest.mark.parametrize("policy", [RANDOM_PAIRS, NEIGHBORS_ONLY])
def test_mc3_cold_chain_targets_bimodal_mixture(policy):
    # modes at -4 and +4: plain RwM started in one mode rarely crosses, MC3 should balance them
    mix = GaussianMixture(np.array([[-4.0], [4.0]]))
    tr = run_mc3(mix, 20_000, 4, TemperatureLadder.geometric(4, 3.0), ProposalSpec.gaussian(1.0), policy, [-4.0], np.random.default_rng(1))
    x = tr.positions[:, 0]
    assert abs((x > 0).mean() - 0.5) < 0.1
    assert abs(x.var() - 17.0) < 2.0  # var = 1 + 16


def test_trace_csv_round_trip(tmp_path):
    env = generate_patchy_environment(5, 4, 2, np.random.default_rng(2))
    tr = run_mc3(env, 50, 3, TemperatureLadder.geometric(3), ProposalSpec.gaussian(), RANDOM_PAIRS, initial_point(env), np.random.default_rng(3), keep_all_chains=True)
    p = tmp_path / "trace.csv"
    write_trace_csv(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,chain,dim0,dim1,accepted,swapped"
    assert len(lines) == 51
    assert np.array_equal(read_trace_csv(p), tr.positions)
    write_trace_csv(tr, p, full_chains=True)
    assert len(p.read_text().splitlines()) == 1 + 50 * 3
    assert np.array_equal(read_trace_csv(p, chain=2), tr.all_chains[:, 2])
