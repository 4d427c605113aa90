"""End-to-end walkthrough on the bundled 3x3 correlated truth.

Simulates randomized stabilizer-prep sequences, learns the averaged
channel, fits the four factor-graph models, extrapolates a lower-noise
family, and compares logical error rates of the learned distribution
against each model at two noise scales.
"""

from pathlib import Path

import numpy as np

from lace.counterfactual import build_family
from lace.decoder import logical_error_rate
from lace.estimation import empirical_dists, fit_decays
from lace.models import KINDS, build_model, cov_diff_norm, fit_model, jsd, model_dist
from lace.protocol import derive_rng, desk_scale_plan
from lace.sim import NoiseConfig, effective_truth, simulate_plan
from lace.surface import build_layout

CONFIG = Path(__file__).resolve().parents[1] / "src" / "lace" / "configs" / "correlated.json"


def main():
    layout = build_layout(3, 3)
    noise = NoiseConfig.from_json(CONFIG.read_text())
    truth = effective_truth(noise, layout).dist

    plan = desk_scale_plan(77)
    print(f"simulating {plan.total_sequences()} sequences x {plan.shots} shots ...")
    records = simulate_plan(plan, layout, noise)

    channel = fit_decays(empirical_dists(records))
    rates = (1.0 - np.array([channel.diagnostics.f[(1 << q) - 1]
                             for q in range(layout.n_data)])) / 2.0
    err = np.abs(rates - truth.marginal_rates()).max()
    print(f"learned per-qubit rates, worst error vs truth: {err:.4f}")

    models = {}
    print(f"{'model':<6} {'params':>6} {'jsd':>9} {'cov_diff':>9}")
    for kind in (k for k in KINDS if k != "custom"):
        fit = fit_model(build_model(kind, layout), channel.distribution)
        models[kind] = model_dist(fit)
        print(f"{kind:<6} {fit.graph.parameter_count:>6} "
              f"{jsd(channel.distribution, models[kind]):>9.5f} "
              f"{cov_diff_norm(channel.distribution, models[kind]):>9.5f}")

    family = build_family(channel.distribution, t_values=(1.0, 0.25))
    for t in family.t_values:
        member = family.member(t)
        print(f"\nt={t}: mean physical rate {member.marginal_rates().mean():.4f}")
        sources = {"full": member}
        sources.update((k, model_dist(fit_model(build_model(k, layout), member)))
                       for k in models)
        for name, source in sources.items():
            est = logical_error_rate(layout, source, n_samples=4000, repeats=5,
                                     rng=derive_rng(7, int(t * 100)),
                                     method="bruteforce")
            lo, hi = est.interval
            print(f"  {name:<6} logical rate {est.rate:.4f}  [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
