"""Factor-graph models: structure, coupling fits, sampling, metrics."""

import json
import math
import types

import numpy as np
import pytest

from lace.dist import ProbDist, xor_convolve
from lace.models import (
    COUPLING_SYSTEM_CONDITION,
    CouplingSet,
    FactorGraph,
    Model,
    blanket_search,
    build_model,
    conditional_entropy,
    cov_bound_check,
    cov_diff_norm,
    estimate_couplings,
    fit_model,
    jsd,
    model_dist,
    model_from_json,
    model_log_prob,
    model_to_json,
    sample_model,
)
from lace.protocol import ShotRecord, derive_rng
from lace.sim import NoiseConfig
from lace.surface import build_layout


def grid(rows, cols):
    return types.SimpleNamespace(rows=rows, cols=cols)


def tvd(a, b):
    return 0.5 * float(np.abs(a.values - b.values).sum())


# ---------------------------------------------------------------------------
# structure


def test_stock_model_counts_on_4x5():
    lay = build_layout(4, 5)
    iid = build_model("iid", lay)
    ind = build_model("ind", lay)
    ising = build_model("ising", lay)
    cg1d = build_model("cg1d", lay)
    assert iid.parameter_count == 1
    assert ind.parameter_count == 20 and len(ind.factors) == 20
    assert len(ising.factors) == 31 and ising.parameter_count == 124
    assert len(cg1d.factors) == 4 and cg1d.parameter_count == 1024
    assert all(len(f) == 8 for f in cg1d.factors)
    assert all(len(f) == 2 for f in ising.factors)


def test_ising_factors_are_lattice_pairs():
    g = build_model("ising", grid(4, 5))
    for a, b in g.factors:
        ra, ca = divmod(a, 5)
        rb, cb = divmod(b, 5)
        assert abs(ra - rb) + abs(ca - cb) == 1
    assert len(set(g.factors)) == 31


def test_ising_cliques_and_blankets():
    g = build_model("ising", grid(3, 3))
    cliques = g.cliques()
    assert sum(len(c) == 1 for c in cliques) == 9
    assert sum(len(c) == 2 for c in cliques) == 12
    # center site 4 touches sites 1, 3, 5, 7
    assert g.blanket((4,)) == (1, 3, 5, 7)
    assert g.blanket((1, 4)) == (0, 2, 3, 5, 7)


def test_cg1d_chains_along_shorter_axis():
    g = build_model("cg1d", grid(2, 3))
    assert g.factors == ((0, 3, 1, 4), (1, 4, 2, 5))
    tall = build_model("cg1d", grid(3, 2))
    assert tall.factors == ((0, 1, 2, 3), (2, 3, 4, 5))


def test_cg1d_rejects_wide_lines():
    with pytest.raises(ValueError):
        build_model("cg1d", grid(5, 5))


def test_graph_validation():
    with pytest.raises(ValueError):
        build_model("bogus", grid(2, 2))
    with pytest.raises(ValueError):
        FactorGraph(kind="custom", variables=(0, 2), factors=((0,),))
    with pytest.raises(ValueError):
        FactorGraph(kind="custom", variables=tuple(range(9)), factors=(tuple(range(9)),))
    with pytest.raises(ValueError):
        FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1), (1, 0)))


def test_condition_number_closed_form():
    lower = np.array([[1.0, 0.0], [1.0, 1.0]])
    system = lower.copy()
    for k in range(1, 5):
        assert np.linalg.cond(system, 2) == pytest.approx(
            COUPLING_SYSTEM_CONDITION**k, rel=1e-12
        )
        system = np.kron(system, lower)


# ---------------------------------------------------------------------------
# coupling estimation


def test_single_bit_coupling_value():
    g = FactorGraph(kind="ind", variables=(0,), factors=((0,),))
    cpl = estimate_couplings(g, ProbDist.from_marginals([0.1]))
    assert cpl.couplings[(0,)] == pytest.approx(math.log(9.0), abs=1e-12)
    assert cpl.smoothed == ()


def test_independent_pair_coupling_is_zero():
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    cpl = estimate_couplings(g, ProbDist.from_marginals([0.1, 0.2]))
    assert abs(cpl.couplings[(0, 1)]) <= 1e-12
    assert cpl.couplings[(0,)] == pytest.approx(math.log(9.0), abs=1e-12)
    assert cpl.couplings[(1,)] == pytest.approx(math.log(4.0), abs=1e-12)


@pytest.mark.parametrize("kind", ["iid", "ind", "ising", "cg1d"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hammersley_clifford_round_trip(kind, seed):
    # an in-model source must be reproduced exactly from its own fit
    g = build_model(kind, grid(2, 3))
    rng = derive_rng(40, seed)
    if kind == "cg1d":
        tables = []
        for _ in g.factors:
            t = rng.random(16) + 0.2
            tables.append(t / t.sum())
        # consistent chain: overwrite so adjacent tables share line marginals
        truth = model_dist(g, CouplingSet(kind="cg1d", couplings={}, tables=tuple(tables)))
    else:
        couplings = {
            c: (2.0 + rng.normal(0, 0.3) if len(c) == 1 else rng.normal(0, 0.6))
            for c in g.cliques()
        }
        if kind == "iid":
            couplings = {c: 2.0 for c in couplings}
        truth = model_dist(g, CouplingSet(kind=kind, couplings=couplings))
    refit = estimate_couplings(g, truth)
    assert tvd(model_dist(g, refit), truth) <= 1e-9
    assert refit.smoothed == ()


def test_ising_couplings_recovered_exactly():
    g = build_model("ising", grid(2, 3))
    rng = derive_rng(41, 0)
    couplings = {c: (2.2 if len(c) == 1 else float(rng.normal(-0.5, 0.5))) for c in g.cliques()}
    refit = estimate_couplings(g, model_dist(g, CouplingSet(kind="ising", couplings=couplings)))
    for c, j in couplings.items():
        assert refit.couplings[c] == pytest.approx(j, abs=1e-9)


def test_estimation_from_records_matches_empirical_dist():
    words = derive_rng(42, 0).integers(0, 4, size=6000).astype(np.uint64)
    recs = [ShotRecord(sequence_id=0, m=1, n_sites=2, words=words)]
    emp = np.bincount(words.astype(int), minlength=4) / len(words)
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    via_records = estimate_couplings(g, recs)
    via_dist = estimate_couplings(g, ProbDist(2, emp))
    for c in via_dist.couplings:
        assert via_records.couplings[c] == pytest.approx(via_dist.couplings[c], abs=1e-12)


def test_smoothing_flags_zero_cells():
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    cpl = estimate_couplings(g, ProbDist(2, np.array([0.7, 0.3, 0.0, 0.0])))
    assert (1,) in cpl.smoothed and (0, 1) in cpl.smoothed
    assert all(np.isfinite(j) for j in cpl.couplings.values())


def test_smoothing_uses_counts_for_records():
    # 200 shots, word 3 never seen: zero cells get half a count
    words = np.array([0] * 150 + [1] * 30 + [2] * 20, dtype=np.uint64)
    recs = [ShotRecord(sequence_id=0, m=1, n_sites=2, words=words)]
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    cpl = estimate_couplings(g, recs)
    assert (0, 1) in cpl.smoothed
    assert np.isfinite(cpl.couplings[(0, 1)])


def test_estimation_validation():
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    with pytest.raises(ValueError):
        estimate_couplings(g, ProbDist.from_marginals([0.1, 0.1, 0.1]))
    with pytest.raises(ValueError):
        estimate_couplings(g, [])


# ---------------------------------------------------------------------------
# evaluation


def test_log_prob_zero_word_is_zero():
    for kind in ("iid", "ind", "ising", "cg1d"):
        g = build_model(kind, grid(2, 2))
        fit = estimate_couplings(g, ProbDist.from_marginals([0.1, 0.15, 0.2, 0.05]))
        assert model_log_prob(g, fit, 0) == 0.0


def test_log_prob_single_bit():
    g = FactorGraph(kind="ind", variables=(0,), factors=((0,),))
    cpl = estimate_couplings(g, ProbDist.from_marginals([0.1]))
    assert model_log_prob(g, cpl, 1) == pytest.approx(math.log(9.0), abs=1e-12)


def test_log_prob_matches_brute_force_chain():
    g = FactorGraph(kind="custom", variables=(0, 1, 2), factors=((0, 1), (1, 2)))
    couplings = {
        (0,): 2.0, (1,): 1.5, (2,): 2.5, (0, 1): -0.8, (1, 2): 0.4,
    }
    cs = CouplingSet(kind="custom", couplings=couplings)
    dist = model_dist(g, cs)
    for x in range(8):
        expected = -math.log(dist.values[x]) + math.log(dist.values[0])
        assert model_log_prob(g, cs, x) == pytest.approx(expected, abs=1e-9)


def test_log_prob_missing_clique():
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    with pytest.raises(KeyError):
        model_log_prob(g, CouplingSet(kind="custom", couplings={(0,): 1.0}), 1)


def test_model_dist_iid_product_form():
    q = 0.1
    g = build_model("iid", grid(1, 2))
    dist = model_dist(g, estimate_couplings(g, ProbDist.from_marginals([q, q])))
    expected = [(1 - q) ** 2, q * (1 - q), q * (1 - q), q**2]
    assert np.allclose(dist.values, expected, atol=1e-12)


def test_model_dist_zero_couplings_uniform():
    g = build_model("ind", grid(1, 2))
    dist = model_dist(g, CouplingSet(kind="ind", couplings={(0,): 0.0, (1,): 0.0}))
    assert np.allclose(dist.values, 0.25, atol=1e-15)


def test_bundle_forms_agree():
    g = build_model("ising", grid(2, 2))
    m = fit_model(g, ProbDist.from_marginals([0.1, 0.12, 0.08, 0.14]))
    assert isinstance(m, Model)
    assert model_dist(m) == model_dist(m.graph, m.couplings)
    assert model_log_prob(m, 3) == model_log_prob(m.graph, m.couplings, 3)


# ---------------------------------------------------------------------------
# sampling


def test_sampling_rate_zero_proxy():
    g = build_model("ind", grid(1, 2))
    cs = CouplingSet(kind="ind", couplings={(0,): 50.0, (1,): 50.0})
    words = sample_model(g, cs, 500, derive_rng(50, 0))
    assert (words == 0).all()


def test_sampling_ind_rates_within_3_sigma():
    rates = np.array([0.08, 0.152, 0.132, 0.105, 0.087, 0.15])
    g = build_model("ind", grid(2, 3))
    cs = CouplingSet(
        kind="ind",
        couplings={(v,): float(np.log((1 - rates[v]) / rates[v])) for v in g.variables},
    )
    count = 20_000
    words = sample_model(g, cs, count, derive_rng(50, 1))
    for v in g.variables:
        emp = float(((words >> np.uint64(v)) & np.uint64(1)).mean())
        sigma = math.sqrt(rates[v] * (1 - rates[v]) / count)
        assert abs(emp - rates[v]) <= 3 * sigma


def ising_3x3_fixture():
    g = build_model("ising", grid(3, 3))
    rng = np.random.default_rng(5)
    couplings = {
        c: (2.4 if len(c) == 1 else float(rng.normal(-0.7, 0.3))) for c in g.cliques()
    }
    return g, CouplingSet(kind="ising", couplings=couplings)


def test_gibbs_sampler_matches_exact_dist():
    g, cs = ising_3x3_fixture()
    exact = model_dist(g, cs)
    words = sample_model(g, cs, 100_000, derive_rng(31, 0))
    emp = np.bincount(words.astype(int), minlength=512) / len(words)
    assert 0.5 * np.abs(emp - exact.values).sum() <= 0.02


def test_gibbs_stationarity_two_site():
    g = FactorGraph(kind="custom", variables=(0, 1), factors=((0, 1),))
    cs = CouplingSet(kind="custom", couplings={(0,): 1.2, (1,): 0.9, (0, 1): -1.1})
    exact = model_dist(g, cs)
    words = sample_model(g, cs, 60_000, derive_rng(33, 0))
    for b in (0, 1):
        sel = ((words >> np.uint64(1)) & np.uint64(1)) == b
        emp = float(((words[sel] & np.uint64(1)) == 1).mean())
        true = exact.values[1 + 2 * b] / (exact.values[2 * b] + exact.values[1 + 2 * b])
        sigma = math.sqrt(true * (1 - true) / int(sel.sum()))
        assert abs(emp - true) <= 3 * sigma


def test_chain_sampler_matches_exact_dist():
    g = build_model("cg1d", grid(3, 3))
    seed_model, seed_cs = ising_3x3_fixture()
    fit = estimate_couplings(g, model_dist(seed_model, seed_cs))
    exact = model_dist(g, fit)
    words = sample_model(g, fit, 100_000, derive_rng(32, 0))
    emp = np.bincount(words.astype(int), minlength=512) / len(words)
    assert 0.5 * np.abs(emp - exact.values).sum() <= 0.02


# ---------------------------------------------------------------------------
# metrics


def test_jsd_basics():
    p = ProbDist.from_marginals([0.1, 0.2])
    assert jsd(p, p) == pytest.approx(0.0, abs=1e-15)
    assert jsd(ProbDist.delta(1, 0), ProbDist.delta(1, 1)) == pytest.approx(
        math.log(2.0), abs=1e-12
    )
    with pytest.raises(ValueError):
        jsd(p, ProbDist.from_marginals([0.1]))


def test_jsd_frozen_example():
    p = ProbDist(1, np.array([0.9, 0.1]))
    q = ProbDist(1, np.array([0.5, 0.5]))
    assert jsd(p, q) == pytest.approx(0.10174922507919676, abs=1e-12)
    assert jsd(q, p) == pytest.approx(jsd(p, q), abs=1e-15)


def test_jsd_bounded_and_nonnegative():
    rng = derive_rng(60, 0)
    for _ in range(20):
        a = rng.random(8) + 1e-3
        b = rng.random(8) + 1e-3
        val = jsd(ProbDist(3, a / a.sum()), ProbDist(3, b / b.sum()))
        assert 0.0 <= val <= math.log(2.0) + 1e-12


def test_cov_diff_norm_basics():
    p = ProbDist(1, np.array([1.0, 0.0]))
    q = ProbDist(1, np.array([0.9, 0.1]))
    assert cov_diff_norm(p, p) == pytest.approx(0.0, abs=1e-15)
    assert cov_diff_norm(p, q) == pytest.approx(0.09, abs=1e-12)
    assert cov_diff_norm(q, p) == pytest.approx(0.09, abs=1e-12)


def test_model_chain_norm_ordering():
    # richer structures track the truth's covariance at least as well
    base = ProbDist.from_marginals(
        [0.05, 0.12, 0.07, 0.15, 0.06, 0.1, 0.08, 0.13, 0.09]
    )
    burst = np.zeros(512)
    burst[0] = 0.82
    burst[0b000000011] = 0.07
    burst[0b000011000] = 0.05
    burst[0b110000000] = 0.04
    burst[0b001000001] = 0.02
    truth = xor_convolve(base, ProbDist(9, burst))
    norms = []
    for kind in ("iid", "ind", "ising", "cg1d"):
        g = build_model(kind, grid(3, 3))
        norms.append(cov_diff_norm(truth, model_dist(g, estimate_couplings(g, truth))))
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))
    assert norms[0] > norms[-1]


def test_cov_bound_identical():
    p = ProbDist.from_marginals([0.1, 0.2])
    lhs, rhs, holds = cov_bound_check(p, p)
    assert lhs == pytest.approx(0.0, abs=1e-15)
    assert rhs == 0.0
    assert holds


def test_cov_bound_tightness_example():
    p = ProbDist(1, np.array([1.0, 0.0]))
    q = ProbDist(1, np.array([0.9, 0.1]))
    lhs, rhs, holds = cov_bound_check(p, q)
    assert lhs == pytest.approx(0.09, abs=1e-12)
    assert rhs == pytest.approx(0.09975, abs=1e-12)
    assert holds


def test_cov_bound_random_pairs():
    rng = derive_rng(61, 0)
    for trial in range(2000):
        n = 8 if trial % 100 == 0 else int(rng.integers(1, 7))
        a = rng.random(1 << n) ** 3
        b = rng.random(1 << n) ** 3
        _, _, holds = cov_bound_check(
            ProbDist(n, a / a.sum()), ProbDist(n, b / b.sum())
        )
        assert holds


def test_moment_blind_spot_of_covariance():
    # even-parity mixture vs uniform: identical first and second moments,
    # but half the mass sits on different words
    even = np.array([w for w in range(16) if bin(w).count("1") % 2 == 0])
    p_vals = np.zeros(16)
    p_vals[even] = 1.0 / 8.0
    p = ProbDist(4, p_vals)
    q = ProbDist(4, np.full(16, 1.0 / 16.0))
    assert cov_diff_norm(p, q) <= 1e-12
    assert 0.5 * np.abs(p.values - q.values).sum() == pytest.approx(0.5, abs=1e-15)
    assert np.allclose(p.marginal_rates(), q.marginal_rates(), atol=1e-15)


def test_conditional_entropy_basics():
    ind = ProbDist.from_marginals([0.1, 0.3])
    h1 = conditional_entropy(ind, 1)
    assert conditional_entropy(ind, 1, (0,)) == pytest.approx(h1, abs=1e-12)
    locked = ProbDist(2, np.array([0.6, 0.0, 0.0, 0.4]))
    assert conditional_entropy(locked, 1, (0,)) == pytest.approx(0.0, abs=1e-12)


def test_conditional_entropy_frozen_example():
    dist = ProbDist(2, np.array([0.85, 0.05, 0.05, 0.05]))
    assert conditional_entropy(dist, 1, (0,)) == pytest.approx(
        0.2624179577147591, abs=1e-10
    )


def test_conditioning_never_raises_entropy():
    rng = derive_rng(62, 0)
    for _ in range(10):
        raw = rng.random(16) + 1e-3
        dist = ProbDist(4, raw / raw.sum())
        for target in range(4):
            h = conditional_entropy(dist, target)
            for other in range(4):
                if other != target:
                    assert conditional_entropy(dist, target, (other,)) <= h + 1e-12


def test_blanket_search_recovers_ising_neighbors():
    g, cs = ising_3x3_fixture()
    exact = model_dist(g, cs)
    hits = 0
    for target in range(9):
        neighbors = tuple(
            sorted({s for f in g.factors if target in f for s in f} - {target})
        )
        best, _ = blanket_search(exact, target, len(neighbors))
        hits += best == neighbors
    assert hits >= 8


def test_blanket_search_tie_break_and_errors():
    ind = ProbDist.from_marginals([0.1, 0.2, 0.3, 0.25])
    best, ce = blanket_search(ind, 2, 2)
    assert best == (0, 1)  # all subsets tie; lexicographically first wins
    assert ce == pytest.approx(conditional_entropy(ind, 2), abs=1e-12)
    with pytest.raises(ValueError):
        blanket_search(ind, 0, 4)


# ---------------------------------------------------------------------------
# persistence


def test_model_json_round_trip():
    g = build_model("ising", grid(2, 3))
    rng = derive_rng(63, 0)
    src = ProbDist(6, (lambda v: v / v.sum())(rng.random(64) + 0.1))
    m = fit_model(g, src)
    loaded = model_from_json(model_to_json(m))
    assert loaded.graph == m.graph
    assert set(loaded.couplings.couplings) == set(m.couplings.couplings)
    for c, j in m.couplings.couplings.items():
        assert loaded.couplings.couplings[c] == pytest.approx(j, abs=1e-12)
    assert tvd(model_dist(loaded), model_dist(m)) <= 1e-12


def test_cg1d_json_round_trip():
    g = build_model("cg1d", grid(2, 3))
    seed_g, seed_cs = ising_3x3_fixture()
    src = ProbDist.from_marginals([0.05, 0.1, 0.08, 0.12, 0.06, 0.09])
    m = fit_model(g, src)
    loaded = model_from_json(model_to_json(m))
    assert len(loaded.couplings.tables) == len(m.couplings.tables)
    for a, b in zip(loaded.couplings.tables, m.couplings.tables):
        assert np.allclose(a, b, atol=0)
    assert tvd(model_dist(loaded), model_dist(m)) <= 1e-15


def test_noise_config_accepts_model_payload():
    g = build_model("ind", grid(1, 2))
    m = fit_model(g, ProbDist.from_marginals([0.1, 0.2]))
    payload = {
        "mode": "effective",
        "spam": {"prep": 0.0, "meas": 0.0},
        "effective": {"model": json.loads(model_to_json(m))},
    }
    cfg = NoiseConfig.from_json(json.dumps(payload))
    assert tvd(cfg.effective_dist, model_dist(m)) <= 1e-12
