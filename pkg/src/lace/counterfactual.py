"""One-parameter family of reduced-noise channels via eigenvalue powers.

A locally averaged channel with eigenvalue vector lam generates a continuous
family lam**t = exp(t*log(lam)); t = 1 is the measured channel, t = 0 the
identity, t = 1/2 a single preparation round (half of one block).  Powers
multiply under composition, so the family is a semigroup under XOR
convolution.  Nonpositive eigenvalues have no real log; they are floored at
1e-12 with a loud warning, and any negative entries produced by the inverse
transform are removed by simplex projection, with both events counted.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dist import EigenvalueVector, ProbDist, project_simplex, wht_forward, wht_inverse

EIGENVALUE_FLOOR = 1e-12

# sweeps the bundled synthetic channel from its base rate to well below 0.03
DEFAULT_T_GRID = (1.0, 0.75, 0.5, 0.375, 0.25, 0.1875, 0.125)


@dataclass(frozen=True)
class ProjectionStats:
    t: float
    floored: int  # eigenvalues raised to the floor before the log
    negatives: int  # negative entries zeroed by the simplex projection
    negative_mass: float


def _source_eigenvalues(source):
    if isinstance(source, EigenvalueVector):
        return source
    if isinstance(source, ProbDist):
        return wht_forward(source)
    eigs = getattr(source, "eigenvalues", None)
    if isinstance(eigs, EigenvalueVector):
        return eigs
    raise TypeError("source must be an EigenvalueVector, ProbDist, or learned channel")


def interpolate_raw(source, t):
    """Unprojected probability vector of the t-power channel."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    eigs = _source_eigenvalues(source)
    lam = eigs.values
    floored = int(np.count_nonzero(lam < EIGENVALUE_FLOOR))
    if floored:
        warnings.warn(
            f"{floored} eigenvalue(s) <= 0 floored at {EIGENVALUE_FLOOR}; "
            "the channel is not divisible and the family is approximate",
            stacklevel=2,
        )
        lam = np.maximum(lam, EIGENVALUE_FLOOR)
    powered = np.exp(t * np.log(lam))
    return wht_inverse(EigenvalueVector(eigs.n, powered)), floored


def interpolate_with_stats(source, t):
    vector, floored = interpolate_raw(source, t)
    negatives = int(np.count_nonzero(vector < 0))
    negative_mass = float(-vector[vector < 0].sum())
    dist = project_simplex(vector)
    return dist, ProjectionStats(
        t=float(t), floored=floored, negatives=negatives, negative_mass=negative_mass
    )


def interpolate(source, t):
    """Simplex-projected distribution of the t-power channel."""
    return interpolate_with_stats(source, t)[0]


@dataclass(frozen=True)
class ChannelFamily:
    n: int
    t_values: tuple
    members: dict  # t -> ProbDist
    projection_log: dict  # t -> ProjectionStats

    def member(self, t):
        return self.members[float(t)]


def build_family(source, t_values=DEFAULT_T_GRID):
    eigs = _source_eigenvalues(source)
    members = {}
    log = {}
    for t in t_values:
        dist, stats = interpolate_with_stats(eigs, t)
        members[float(t)] = dist
        log[float(t)] = stats
    return ChannelFamily(
        n=eigs.n, t_values=tuple(float(t) for t in t_values), members=members, projection_log=log
    )


def family_save(family, directory):
    """Manifest JSON plus one binary distribution file per t."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"n": family.n, "members": []}
    for i, t in enumerate(family.t_values):
        name = f"t_{i:02d}.dist"
        (directory / name).write_bytes(family.members[t].to_bytes())
        stats = family.projection_log[t]
        manifest["members"].append(
            {
                "t": t,
                "file": name,
                "floored": stats.floored,
                "negatives": stats.negatives,
                "negative_mass": stats.negative_mass,
            }
        )
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def family_load(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    members = {}
    log = {}
    t_values = []
    for entry in manifest["members"]:
        t = float(entry["t"])
        t_values.append(t)
        members[t] = ProbDist.from_bytes((directory / entry["file"]).read_bytes())
        log[t] = ProjectionStats(
            t=t,
            floored=entry["floored"],
            negatives=entry["negatives"],
            negative_mass=entry["negative_mass"],
        )
    return ChannelFamily(
        n=manifest["n"], t_values=tuple(t_values), members=members, projection_log=log
    )


def _popcounts(n):
    idx = np.arange(1 << n, dtype=np.uint32)
    counts = np.zeros(1 << n, dtype=np.uint8)
    for k in range(n):
        counts += ((idx >> k) & 1).astype(np.uint8)
    return counts


def weight_histogram(dist):
    """Total probability per error weight (popcount); length n+1."""
    return np.bincount(_popcounts(dist.n), weights=dist.values, minlength=dist.n + 1)


def weight_histograms_to_csv(histograms):
    """histograms: map t -> per-weight mass array; rows are weights."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    ts = sorted(histograms)
    writer.writerow(["weight"] + [f"t={t:g}" for t in ts])
    n_rows = max(len(histograms[t]) for t in ts)
    for w in range(n_rows):
        writer.writerow([w] + [f"{histograms[t][w]:.12g}" for t in ts])
    return buf.getvalue()
