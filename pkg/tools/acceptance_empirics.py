"""Scratch measurements used to size the acceptance tests."""

import json
import time
from pathlib import Path

import numpy as np

from lace.counterfactual import build_family
from lace.decoder import (
    DecoderPrior,
    logical_error_rate,
    mps_decode,
    sample_error,
)
from lace.dist import ProbDist
from lace.models import blanket_search, build_model, fit_model
from lace.protocol import derive_rng
from lace.sim import NoiseConfig
from lace.surface import build_layout, logical_class, syndrome

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "lace" / "configs"


def crit8_chi8_vs_exact_5x5():
    t0 = time.time()
    layout = build_layout(5, 5)
    prior = DecoderPrior(0.1)
    source = ProbDist.from_marginals(np.full(25, 0.1))
    rng = derive_rng(8080, 0)
    agree = 0
    total = 1000
    seen = {}
    for _ in range(total):
        err = sample_error(source, rng)
        s = syndrome(layout, err)
        if s not in seen:
            a, _ = mps_decode(layout, s, prior, chi=8)
            b, _ = mps_decode(layout, s, prior, chi=32)
            seen[s] = (logical_class(layout, a.compose(b)) == "I")
        agree += seen[s]
    print(f"crit8: chi8 vs chi32 on 5x5 agree {agree}/{total} "
          f"unique={len(seen)} in {time.time()-t0:.1f}s")


def crit9_distance_scaling():
    t0 = time.time()
    rates = {}
    for d in (3, 5):
        layout = build_layout(d, d)
        source = ProbDist.from_marginals(np.full(d * d, 0.05))
        method = "bruteforce" if d == 3 else "mps"
        est = logical_error_rate(
            layout, source, n_samples=2000, repeats=10,
            rng=derive_rng(9090, d), method=method, chi=8,
        )
        rates[d] = est
        print(f"crit9 d={d}: rate={est.rate:.5f} interval={est.interval}")
    sep = rates[3].interval[0] - rates[5].interval[1]
    print(f"crit9: separation={sep:.5f} (need > 0) in {time.time()-t0:.1f}s")


def crit10_divergence():
    t0 = time.time()
    layout = build_layout(3, 3)
    grid = type("G", (), {"rows": 3, "cols": 3})()
    truth = NoiseConfig.from_json((CONFIGS / "correlated.json").read_text()).effective_dist
    family = build_family(truth)
    means = {t: float(np.mean(family.member(t).marginal_rates())) for t in family.t_values}
    print("crit10 marginal means:", {t: round(v, 4) for t, v in means.items()})
    t_star = min(family.t_values, key=lambda t: abs(means[t] - 0.03))
    print("crit10 t* =", t_star)
    for t in (1.0, t_star):
        member = family.member(t)
        sources = {"full": member}
        for kind in ("iid", "ind", "ising", "cg1d"):
            sources[kind] = fit_model(build_model(kind, grid), member)
        out = {}
        for mi, (name, src) in enumerate(sources.items()):
            est = logical_error_rate(
                layout, src, n_samples=10_000, repeats=10,
                rng=derive_rng(1010, int(t * 10000), mi), method="bruteforce",
            )
            sig = float(np.std(est.per_repeat, ddof=1) / np.sqrt(est.repeats))
            out[name] = (est.rate, sig)
            print(f"crit10 t={t}: {name:5s} rate={est.rate:.5f} sigma={sig:.5f}")
        full_r, full_s = out["full"]
        for name, (r, s) in out.items():
            comb = 2 * np.hypot(s, full_s)
            print(f"   {name:5s} delta={r - full_r:+.5f} vs 2sig_comb={comb:.5f}")
    print(f"crit10 elapsed {time.time()-t0:.1f}s")


def crit11_blankets():
    t0 = time.time()
    truth_cfg = NoiseConfig.from_json((CONFIGS / "paper_like.json").read_text())
    dist = truth_cfg.effective_dist
    rows, cols = 4, 5
    hits = 0
    for q in range(rows * cols):
        r, c = divmod(q, cols)
        nbrs = sorted(
            rr * cols + cc
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1))
            if 0 <= rr < rows and 0 <= cc < cols
        )
        found, ce = blanket_search(dist, q, len(nbrs))
        ok = tuple(found) == tuple(nbrs)
        hits += ok
        print(f"crit11 q={q}: true={nbrs} found={list(found)} ok={ok}")
    print(f"crit11: {hits}/20 in {time.time()-t0:.1f}s")


if __name__ == "__main__":
    import sys

    globals()[f"crit{sys.argv[1]}"]() if len(sys.argv) > 1 else None
