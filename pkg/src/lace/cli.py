"""Command-line pipeline driver.

Each subcommand reads and writes the file formats owned by the library
modules, so any stage can be re-run from its inputs.  Every invocation
writes a run manifest (command, input digest, seed, versions, timing)
beside its primary output.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .counterfactual import (
    DEFAULT_T_GRID,
    build_family,
    family_load,
    family_save,
    weight_histogram,
    weight_histograms_to_csv,
)
from .decoder import (
    DegenerateContractionError,
    REPORT_CONTEXT_POINT,
    logical_error_rate,
    results_to_csv,
    source_average_rate,
)
from .dist import DegenerateEventError, ProbDist
from .estimation import (
    bootstrap,
    channel_load,
    channel_save,
    correlation_matrix,
    empirical_dists,
    fit_decays,
    qubit_error_rates,
)
from .models import build_model, fit_model, cov_diff_norm, jsd, model_dist, model_from_json, model_to_json
from .protocol import (
    ExperimentPlan,
    ProtocolStructureError,
    derive_rng,
    desk_scale_plan,
    paper_scale_plan,
    plan_experiment,
    read_shot_records,
    write_shot_records,
)
from .sim import NoiseConfig, simulate_plan
from .surface import CodeLayout, build_layout

CONFIG_EXIT = 2
DATA_EXIT = 3
NUMERIC_EXIT = 4


class CliError(Exception):
    def __init__(self, exit_code, message):
        super().__init__(message)
        self.exit_code = exit_code


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("LACE_THREADS", "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(CONFIG_EXIT, f"LACE_THREADS is not an integer: {env!r}")
    return 1


def _read_text(path):
    p = Path(path)
    if not p.exists():
        raise CliError(DATA_EXIT, f"missing input file: {path}")
    return p.read_text()


def _read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(DATA_EXIT, f"malformed JSON in {path}: {exc}")


def _read_dist(path):
    """Dense distribution from .dist bytes, a channel base, or ProbDist JSON."""
    p = Path(path)
    if p.is_dir():
        raise CliError(DATA_EXIT, f"expected a file, got directory: {path}")
    if p.suffix == ".dist":
        if not p.exists():
            raise CliError(DATA_EXIT, f"missing input file: {path}")
        return ProbDist.from_bytes(p.read_bytes())
    if Path(str(p) + ".dist").exists():
        return ProbDist.from_bytes(Path(str(p) + ".dist").read_bytes())
    return ProbDist.from_json(_read_text(path))


def _read_channel_source(path):
    """LearnedChannel when the sidecar files exist, else the bare distribution."""
    if Path(str(path) + ".json").exists() and Path(str(path) + ".fits.npz").exists():
        return channel_load(path)
    return _read_dist(path)


def _load_layout(args):
    if getattr(args, "layout", None):
        return CodeLayout.from_json(_read_text(args.layout))
    return build_layout(args.rows, args.cols)


def _digest(paths):
    sha = hashlib.sha256()
    for path in sorted(str(p) for p in paths):
        p = Path(path)
        sha.update(path.encode())
        if p.is_dir():
            for sub in sorted(p.rglob("*")):
                if sub.is_file():
                    sha.update(str(sub).encode())
                    sha.update(sub.read_bytes())
        elif p.exists():
            sha.update(p.read_bytes())
    return sha.hexdigest()


def _write_manifest(out, command, args, inputs, outputs, seed, t0):
    manifest = {
        "command": command,
        "argv": list(args),
        "config_digest": _digest(inputs),
        "seed": seed,
        "version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": round(time.time() - t0, 3),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# subcommands


def _cmd_plan(args, argv, t0):
    if args.preset == "desk":
        plan = desk_scale_plan(args.seed)
    elif args.preset == "paper-scale":
        plan = paper_scale_plan(args.seed)
    else:
        try:
            m_grid = tuple(int(m) for m in args.m_grid.split(","))
        except ValueError:
            raise CliError(CONFIG_EXIT, f"bad --m-grid: {args.m_grid!r}")
        plan = plan_experiment(m_grid, args.sequences_per_m, args.shots, args.seed)
    Path(args.out).write_text(plan.to_json())
    _write_manifest(args.out, "plan", argv, [], [args.out], args.seed, t0)
    return 0


def _cmd_simulate(args, argv, t0):
    noise = NoiseConfig.from_json(_read_text(args.config))
    plan = ExperimentPlan.from_json(_read_text(args.plan))
    plan = dataclasses.replace(plan, master_seed=args.seed)
    layout = _load_layout(args)
    records = simulate_plan(plan, layout, noise, threads=_threads(args))
    write_shot_records(args.out, records)
    inputs = [args.config, args.plan] + ([args.layout] if args.layout else [])
    _write_manifest(args.out, "simulate", argv, inputs, [args.out], args.seed, t0)
    return 0


def _cmd_estimate(args, argv, t0):
    records = read_shot_records(args.shots)
    subset = None
    if args.subset:
        try:
            subset = tuple(int(s) for s in args.subset.split(","))
        except ValueError:
            raise CliError(CONFIG_EXIT, f"bad --subset: {args.subset!r}")
    dists = empirical_dists(records, subset=subset)
    channel = fit_decays(dists)
    channel_save(channel, args.out)
    rates = qubit_error_rates(channel)
    rates_path = Path(str(args.out) + ".rates.csv")
    rates_path.write_text(
        "qubit,per_round_rate\n"
        + "".join("%d,%.12g\n" % (q, r) for q, r in enumerate(rates))
    )
    corr_path = Path(str(args.out) + ".correlation.csv")
    corr_path.write_text(correlation_matrix(channel).to_csv())
    outputs = [
        str(args.out) + ".dist",
        str(args.out) + ".fits.npz",
        str(args.out) + ".json",
        str(rates_path),
        str(corr_path),
    ]
    if args.bootstrap:
        if args.seed is None:
            raise CliError(CONFIG_EXIT, "--bootstrap requires --seed")
        result = bootstrap(
            records, args.bootstrap, n_boot=args.n_boot, rng=derive_rng(args.seed)
        )
        boot_path = Path(str(args.out) + f".boot.{args.bootstrap}.json")
        boot_path.write_text(
            json.dumps(
                {
                    "tag": result.tag,
                    "point": np.asarray(result.point).tolist(),
                    "low": np.asarray(result.low).tolist(),
                    "high": np.asarray(result.high).tolist(),
                    "n_boot": args.n_boot,
                },
                indent=2,
            )
        )
        outputs.append(str(boot_path))
    _write_manifest(args.out, "estimate", argv, [args.shots], outputs, args.seed, t0)
    return 0


def _cmd_fit_model(args, argv, t0):
    dist = _read_dist(args.channel)
    layout = _load_layout(args)
    if layout.n_data != dist.n:
        raise CliError(
            CONFIG_EXIT,
            f"grid has {layout.n_data} data sites but distribution covers {dist.n}",
        )
    model = fit_model(build_model(args.kind, layout), dist)
    Path(args.out).write_text(model_to_json(model))
    inputs = [args.channel] + ([args.layout] if args.layout else [])
    _write_manifest(args.out, "fit-model", argv, inputs, [args.out], None, t0)
    return 0


def _cmd_metrics(args, argv, t0):
    dist = _read_dist(args.dist)
    rows = []
    for path in args.models.split(","):
        model = model_from_json(_read_text(path))
        fitted = model_dist(model)
        rows.append(
            {
                "model": path,
                "kind": model.graph.kind,
                "parameters": model.graph.parameter_count,
                "jsd": jsd(dist, fitted),
                "cov_diff_norm": cov_diff_norm(dist, fitted),
            }
        )
    Path(args.out).write_text(json.dumps(rows, indent=2))
    _write_manifest(
        args.out, "metrics", argv, [args.dist] + args.models.split(","), [args.out], None, t0
    )
    return 0


def _cmd_extrapolate(args, argv, t0):
    source = _read_channel_source(args.channel)
    try:
        t_values = tuple(float(t) for t in args.t_grid.split(","))
    except ValueError:
        raise CliError(CONFIG_EXIT, f"bad --t-grid: {args.t_grid!r}")
    family = build_family(source, t_values)
    family_save(family, args.out)
    histograms = {t: weight_histogram(family.members[t]) for t in family.t_values}
    (Path(args.out) / "weights.csv").write_text(weight_histograms_to_csv(histograms))
    _write_manifest(args.out, "extrapolate", argv, [args.channel], [args.out], None, t0)
    return 0


def _cmd_decode(args, argv, t0):
    family = family_load(args.family)
    layout = _load_layout(args)
    if layout.n_data != family.n:
        raise CliError(
            CONFIG_EXIT,
            f"grid has {layout.n_data} data sites but family covers {family.n}",
        )
    kinds = args.models.split(",")
    for kind in kinds:
        if kind not in ("full", "iid", "ind", "ising", "cg1d"):
            raise CliError(CONFIG_EXIT, f"unknown model kind {kind!r}")
    rows = []
    for ti, t in enumerate(family.t_values):
        member = family.members[t]
        for mi, kind in enumerate(kinds):
            if kind == "full":
                source = member
            else:
                source = fit_model(build_model(kind, layout), member)
            est = logical_error_rate(
                layout,
                source,
                n_samples=args.samples,
                repeats=args.repeats,
                rng=derive_rng(args.seed, ti, mi),
                method=args.method,
                chi=args.chi,
                prior=args.prior,
            )
            spread = np.std(est.per_repeat, ddof=1) if args.repeats > 1 else 0.0
            rows.append(
                {
                    "source": args.source_id or str(args.family),
                    "model": kind,
                    "t": t,
                    "physical_rate": source_average_rate(source),
                    "logical_rate": est.rate,
                    "two_sigma": 2.0 * float(spread) / np.sqrt(args.repeats),
                }
            )
    Path(args.out).write_text(results_to_csv(rows))
    inputs = [args.family] + ([args.layout] if args.layout else [])
    _write_manifest(args.out, "decode", argv, inputs, [args.out], args.seed, t0)
    return 0


def _cmd_report(args, argv, t0):
    import csv
    import io

    text = _read_text(args.decode)
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        for key in ("t", "physical_rate", "logical_rate", "two_sigma"):
            row[key] = float(row[key])
    by_t = {}
    for row in rows:
        by_t.setdefault("%g" % row["t"], {})[row["model"]] = {
            "physical_rate": row["physical_rate"],
            "logical_rate": row["logical_rate"],
            "two_sigma": row["two_sigma"],
        }
    report = {"context": REPORT_CONTEXT_POINT, "rows": rows, "by_t": by_t}
    if args.metrics:
        report["metrics"] = _read_json(args.metrics)
    if args.family:
        report["family"] = _read_json(Path(args.family) / "manifest.json")
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    inputs = [args.decode]
    if args.metrics:
        inputs.append(args.metrics)
    if args.family:
        inputs.append(args.family)
    _write_manifest(args.out, "report", argv, inputs, [args.out], None, t0)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_grid_args(sub, need_layout=True):
    sub.add_argument("--rows", type=int, default=4)
    sub.add_argument("--cols", type=int, default=5)
    if need_layout:
        sub.add_argument("--layout", help="layout JSON overriding --rows/--cols")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lace",
        description="Learn, model, extrapolate, and decode correlated grid noise.",
    )
    parser.add_argument("--version", action="version", version=f"lace {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("plan", help="write an experiment plan JSON")
    p.add_argument("--preset", choices=["desk", "paper-scale"])
    p.add_argument("--m-grid", default="0,1,2,3,4,6,8")
    p.add_argument("--sequences-per-m", type=int, default=30)
    p.add_argument("--shots", type=int, default=2000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(run=_cmd_plan)

    p = subs.add_parser("simulate", help="run a plan against a noise config")
    p.add_argument("--config", required=True, help="noise config JSON")
    p.add_argument("--plan", required=True, help="experiment plan JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="shot archive path")
    _add_grid_args(p)
    p.set_defaults(run=_cmd_simulate)

    p = subs.add_parser("estimate", help="fit the averaged channel from shots")
    p.add_argument("shots", help="shot archive from simulate")
    p.add_argument("--subset", help="comma-separated site subset")
    p.add_argument("--bootstrap", help="resampling tag (qubit_rates, ...)")
    p.add_argument("--n-boot", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="channel base path")
    p.set_defaults(run=_cmd_estimate)

    p = subs.add_parser("fit-model", help="fit a factor-graph model to a channel")
    p.add_argument("channel", help="channel base, .dist file, or dist JSON")
    p.add_argument("--kind", required=True, choices=["iid", "ind", "ising", "cg1d"])
    p.add_argument("--out", required=True)
    _add_grid_args(p)
    p.set_defaults(run=_cmd_fit_model)

    p = subs.add_parser("metrics", help="model-vs-distribution divergence table")
    p.add_argument("--dist", required=True)
    p.add_argument("--models", required=True, help="comma-separated model JSONs")
    p.add_argument("--out", required=True)
    p.set_defaults(run=_cmd_metrics)

    p = subs.add_parser("extrapolate", help="build the lower-noise channel family")
    p.add_argument("channel", help="channel base or .dist file")
    p.add_argument("--t-grid", default=",".join("%g" % t for t in DEFAULT_T_GRID))
    p.add_argument("--out", required=True, help="family output directory")
    p.set_defaults(run=_cmd_extrapolate)

    p = subs.add_parser("decode", help="logical error rates per (t, model)")
    p.add_argument("--family", required=True, help="family directory")
    p.add_argument("--models", default="iid,ind,ising,cg1d,full")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--method", choices=["mps", "bruteforce"], default="mps")
    p.add_argument("--chi", type=int, default=8)
    p.add_argument("--prior", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--source-id")
    p.add_argument("--out", required=True, help="results CSV path")
    _add_grid_args(p)
    p.set_defaults(run=_cmd_decode)

    p = subs.add_parser("report", help="aggregate decode results into JSON")
    p.add_argument("--decode", required=True, help="results CSV from decode")
    p.add_argument("--metrics", help="metrics JSON to merge")
    p.add_argument("--family", help="family directory to merge projection stats")
    p.add_argument("--out", required=True)
    p.set_defaults(run=_cmd_report)

    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.time()
    try:
        return args.run(args, argv, t0)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (ProtocolStructureError, json.JSONDecodeError) as exc:
        print(f"error: malformed input data: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (
        DegenerateContractionError,
        DegenerateEventError,
        FloatingPointError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return CONFIG_EXIT


if __name__ == "__main__":
    sys.exit(main())
