"""From shot records to the learned locally averaged channel.

Pipeline: per-m empirical distributions over indicator words, transform to
eigenvalue vectors, fit every index to A * f**m (log-domain weighted init,
Gauss-Newton polish on the original scale), then inverse-transform the
fitted decays [1, f_1, ...] and project onto the simplex.  The amplitude A
absorbs preparation and measurement errors; the decay f is the per-block
channel eigenvalue.  Per-round quantities use the half-power channel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .counterfactual import interpolate
from .dist import (
    MAX_SITES,
    EigenvalueVector,
    ProbDist,
    project_simplex,
    wht_forward,
    wht_inverse,
)

LAMBDA_FLOOR = 1e-6


@dataclass(frozen=True)
class DecayFit:
    index: int
    A: float
    f: float
    residual: float
    points_used: int
    clamped: bool


@dataclass(frozen=True, eq=False)
class FitDiagnostics:
    """Per-index fit results for indices 1..2**n-1 (arrays, index-1-based)."""

    A: np.ndarray
    f: np.ndarray
    residual: np.ndarray
    points_used: np.ndarray
    clamped: np.ndarray

    def fit(self, index):
        i = index - 1
        if index < 1 or i >= len(self.f):
            raise IndexError("diagnostics cover indices 1..2**n-1")
        return DecayFit(
            index=index,
            A=float(self.A[i]),
            f=float(self.f[i]),
            residual=float(self.residual[i]),
            points_used=int(self.points_used[i]),
            clamped=bool(self.clamped[i]),
        )

    def summary(self):
        return {
            "indices": int(len(self.f)),
            "clamped": int(self.clamped.sum()),
            "unrecoverable": int((self.points_used < 2).sum()),
            "residual_max": float(self.residual.max(initial=0.0)),
            "residual_mean": float(self.residual.mean()) if len(self.residual) else 0.0,
        }


@dataclass(frozen=True, eq=False)
class LearnedChannel:
    n: int
    eigenvalues: EigenvalueVector  # entry 0 is exactly 1
    distribution: ProbDist
    diagnostics: FitDiagnostics

    def fit(self, index):
        return self.diagnostics.fit(index)


def empirical_dists(records, subset=None):
    """Per-m normalized histograms of (optionally marginalized) words."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    n_sites = records[0].n_sites
    if any(rec.n_sites != n_sites for rec in records):
        raise ValueError("records disagree on word width")
    subset = tuple(range(n_sites)) if subset is None else tuple(int(s) for s in subset)
    if not subset or len(set(subset)) != len(subset):
        raise ValueError("subset must be non-empty and distinct")
    if any(not 0 <= s < n_sites for s in subset):
        raise ValueError("subset site outside record width")
    if len(subset) > MAX_SITES:
        raise ValueError(f"subset larger than {MAX_SITES} sites")
    k = len(subset)
    counts = {}
    totals = {}
    for rec in records:
        acc = np.zeros(len(rec.words), dtype=np.int64)
        for j, s in enumerate(subset):
            acc |= (((rec.words >> np.uint64(s)) & np.uint64(1)) << np.uint64(j)).astype(
                np.int64
            )
        c = counts.setdefault(rec.m, np.zeros(1 << k, dtype=np.int64))
        c += np.bincount(acc, minlength=1 << k)
        totals[rec.m] = totals.get(rec.m, 0) + len(rec.words)
    return {
        m: ProbDist(k, counts[m] / totals[m]) for m in sorted(counts)
    }


def _fit_decay_core(ms, lam, iters=40):
    """Fit lam[p, k] ~ A_k * f_k**ms[p]; returns per-k arrays."""
    m_col = np.asarray(ms, dtype=float)[:, None]
    usable = lam > LAMBDA_FLOOR
    w = usable.astype(float)
    points = usable.sum(axis=0)

    safe = np.clip(lam, LAMBDA_FLOOR, None)
    logs = np.log(safe)
    wt = w * safe**2
    sw = wt.sum(axis=0)
    swm = (wt * m_col).sum(axis=0)
    swmm = (wt * m_col**2).sum(axis=0)
    swl = (wt * logs).sum(axis=0)
    swml = (wt * m_col * logs).sum(axis=0)
    det = sw * swmm - swm**2
    ok = (points >= 2) & (det > 1e-30)
    det_safe = np.where(ok, det, 1.0)
    log_f = (sw * swml - swm * swl) / det_safe
    log_a = (swl * swmm - swm * swml) / det_safe
    f = np.exp(np.clip(log_f, -700.0, 5.0))
    A = np.exp(np.clip(log_a, -700.0, 5.0))

    for _ in range(iters):
        fm = np.power(f[None, :], m_col)
        r = (A[None, :] * fm - lam) * w
        with np.errstate(divide="ignore", invalid="ignore"):
            fm1 = np.where(m_col > 0, np.power(f[None, :], np.maximum(m_col - 1, 0)), 0.0)
        ja = fm * w
        jf = A[None, :] * m_col * fm1 * w
        gaa = (ja * ja).sum(axis=0)
        gaf = (ja * jf).sum(axis=0)
        gff = (jf * jf).sum(axis=0)
        ga = (ja * r).sum(axis=0)
        gf = (jf * r).sum(axis=0)
        det2 = gaa * gff - gaf**2
        step_ok = ok & (det2 > 1e-30)
        det2 = np.where(step_ok, det2, 1.0)
        da = np.where(step_ok, -(gff * ga - gaf * gf) / det2, 0.0)
        df = np.where(step_ok, -(gaa * gf - gaf * ga) / det2, 0.0)
        A = np.clip(A + da, 1e-12, 2.0)
        f = np.clip(f + df, 0.0, 1.5)
        if max(np.abs(da).max(initial=0.0), np.abs(df).max(initial=0.0)) < 1e-14:
            break

    clamped = ~ok | (f > 1.0) | (A > 1.05)
    f = np.where(ok, np.clip(f, 0.0, 1.0), 0.0)
    A = np.where(ok, np.clip(A, 1e-12, 1.05), 1.0)
    fm = np.power(f[None, :], m_col)
    residual = (((A[None, :] * fm - lam) * w) ** 2).sum(axis=0)
    residual = np.where(ok, residual, 0.0)
    return A, f, residual, points.astype(np.int64), clamped


def fit_decays(dists):
    """LearnedChannel from per-m distributions (needs >= 2 distinct m)."""
    if len(dists) < 2:
        raise ValueError("need at least two distinct m values")
    ms = sorted(dists)
    n = dists[ms[0]].n
    if any(dists[m].n != n for m in ms):
        raise ValueError("distributions disagree on site count")
    lam = np.vstack([wht_forward(dists[m]).values for m in ms])

    size = 1 << n
    A = np.empty(size - 1)
    f = np.empty(size - 1)
    residual = np.empty(size - 1)
    points = np.empty(size - 1, dtype=np.int64)
    clamped = np.empty(size - 1, dtype=bool)
    chunk = 1 << 17
    for start in range(1, size, chunk):
        stop = min(start + chunk, size)
        out = _fit_decay_core(np.asarray(ms), lam[:, start:stop])
        sl = slice(start - 1, stop - 1)
        A[sl], f[sl], residual[sl], points[sl], clamped[sl] = out

    eigs = EigenvalueVector(n, np.concatenate([[1.0], f]))
    dist = project_simplex(wht_inverse(eigs))
    diagnostics = FitDiagnostics(
        A=A, f=f, residual=residual, points_used=points, clamped=clamped
    )
    return LearnedChannel(n=n, eigenvalues=eigs, distribution=dist, diagnostics=diagnostics)


def qubit_error_rates(channel, per_round=True):
    """Per-qubit probability of an indicated error; per_round reports the
    half-power (single preparation round) channel's marginals."""
    if per_round:
        return interpolate(channel, 0.5).marginal_rates()
    return channel.distribution.marginal_rates()


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    means: np.ndarray
    cov: np.ndarray
    rho: np.ndarray
    degenerate: tuple  # sites whose indicator bit is constant

    def to_csv(self):
        lines = [",".join(f"q{j}" for j in range(len(self.means)))]
        for row in self.rho:
            lines.append(",".join(f"{v:.12g}" for v in row))
        return "\n".join(lines) + "\n"


def _moments_from_dist(dist):
    n = dist.n
    means = np.zeros(n)
    second = np.zeros((n, n))
    chunk = 1 << 16
    size = 1 << n
    for start in range(0, size, chunk):
        stop = min(start + chunk, size)
        idx = np.arange(start, stop, dtype=np.uint32)
        bits = ((idx[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(float)
        weighted = bits * dist.values[start:stop, None]
        means += weighted.sum(axis=0)
        second += weighted.T @ bits
    return means, second


def _moments_from_records(records):
    records = list(records)
    n = records[0].n_sites
    total = 0
    s1 = np.zeros(n)
    s2 = np.zeros((n, n))
    for rec in records:
        bits = (
            (rec.words[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)
        ).astype(float)
        s1 += bits.sum(axis=0)
        s2 += bits.T @ bits
        total += len(rec.words)
    return s1 / total, s2 / total


def correlation_matrix(source):
    """Pearson correlations of indicator bits from a distribution, learned
    channel, or pooled shot records."""
    if isinstance(source, ProbDist):
        means, second = _moments_from_dist(source)
    elif isinstance(source, LearnedChannel):
        means, second = _moments_from_dist(source.distribution)
    else:
        means, second = _moments_from_records(source)
    cov = second - np.outer(means, means)
    var = np.diag(cov).copy()
    degenerate = tuple(int(i) for i in np.flatnonzero(var < 1e-12))
    scale = np.sqrt(np.where(var < 1e-12, 1.0, var))
    rho = cov / np.outer(scale, scale)
    for i in degenerate:
        rho[i, :] = 0.0
        rho[:, i] = 0.0
    np.fill_diagonal(rho, 1.0)
    return CorrelationMatrix(means=means, cov=cov, rho=rho, degenerate=degenerate)


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    tag: str
    point: np.ndarray
    low: np.ndarray
    high: np.ndarray
    replicates: int


@dataclass(frozen=True, eq=False)
class _RecordStats:
    ms: np.ndarray  # (R,)
    shots: np.ndarray  # (R,)
    counts: np.ndarray  # (R, n) per-qubit error counts
    pair_counts: np.ndarray | None  # (R, n, n) joint counts, tag-dependent
    n: int


def _prepare_stats(records, pairs):
    records = list(records)
    n = records[0].n_sites
    ms = np.array([rec.m for rec in records])
    shots = np.array([rec.shots for rec in records])
    counts = np.zeros((len(records), n))
    pair_counts = np.zeros((len(records), n, n)) if pairs else None
    for r, rec in enumerate(records):
        bits = (
            (rec.words[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)
        ).astype(float)
        counts[r] = bits.sum(axis=0)
        if pairs:
            pair_counts[r] = bits.T @ bits
    return _RecordStats(ms=ms, shots=shots, counts=counts, pair_counts=pair_counts, n=n)


def _selection_rates(stats, selection):
    """Per-m mean indicator rates (and pair rates) over selected records."""
    ms = sorted(selection)
    rates = np.zeros((len(ms), stats.n))
    pair_rates = (
        np.zeros((len(ms), stats.n, stats.n)) if stats.pair_counts is not None else None
    )
    for i, m in enumerate(ms):
        idx = selection[m]
        total = stats.shots[idx].sum()
        rates[i] = stats.counts[idx].sum(axis=0) / total
        if pair_rates is not None:
            pair_rates[i] = stats.pair_counts[idx].sum(axis=0) / total
    return np.array(ms), rates, pair_rates


def _fit_singleton_decays(ms, rates):
    lam = 1.0 - 2.0 * rates  # single-site eigenvalue per qubit
    _, f, _, _, _ = _fit_decay_core(ms, lam)
    return f


def _estimate_qubit_decays(stats, selection):
    ms, rates, _ = _selection_rates(stats, selection)
    return _fit_singleton_decays(ms, rates)


def _estimate_qubit_rates(stats, selection):
    f = _estimate_qubit_decays(stats, selection)
    return (1.0 - np.sqrt(np.clip(f, 0.0, 1.0))) / 2.0  # per-round convention


def _estimate_pair_correlations(stats, selection):
    ms, rates, pair_rates = _selection_rates(stats, selection)
    n = stats.n
    iu, ju = np.triu_indices(n, k=1)
    # two-site eigenvalue series: bit i, bit j, and their parity
    lam_i = 1.0 - 2.0 * rates[:, iu]
    lam_j = 1.0 - 2.0 * rates[:, ju]
    p_neq = rates[:, iu] + rates[:, ju] - 2.0 * pair_rates[:, iu, ju]
    lam_ij = 1.0 - 2.0 * p_neq
    lam = np.concatenate([lam_i, lam_j, lam_ij], axis=1)
    _, f, _, _, _ = _fit_decay_core(ms, lam)
    k = len(iu)
    f_i, f_j, f_ij = f[:k], f[k : 2 * k], f[2 * k :]
    out = np.zeros(k)
    for p in range(k):
        vec = wht_inverse(EigenvalueVector(2, np.array([1.0, f_i[p], f_j[p], f_ij[p]])))
        dist = project_simplex(vec)
        cm = correlation_matrix(dist)
        out[p] = cm.rho[0, 1]
    return out


_BOOTSTRAP_ESTIMATORS = {
    "qubit_rates": (False, _estimate_qubit_rates),
    "qubit_decays": (False, _estimate_qubit_decays),
    "pair_correlations": (True, _estimate_pair_correlations),
}


def bootstrap(records, tag, n_boot, rng):
    """Percentile intervals from resampling sequences within each m."""
    if tag not in _BOOTSTRAP_ESTIMATORS:
        raise ValueError(f"unknown estimator tag {tag!r}")
    if n_boot < 100:
        raise ValueError("need at least 100 bootstrap replicates")
    needs_pairs, estimator = _BOOTSTRAP_ESTIMATORS[tag]
    records = list(records)
    stats = _prepare_stats(records, needs_pairs)
    groups = {}
    for r, rec in enumerate(records):
        groups.setdefault(rec.m, []).append(r)
    if len(groups) < 2:
        raise ValueError("need records at two or more m values")
    groups = {m: np.array(idx) for m, idx in groups.items()}

    point = estimator(stats, groups)
    reps = np.empty((n_boot, len(point)))
    for b in range(n_boot):
        selection = {
            m: idx[rng.integers(0, len(idx), size=len(idx))] for m, idx in groups.items()
        }
        reps[b] = estimator(stats, selection)
    low, high = np.percentile(reps, [2.5, 97.5], axis=0)
    return BootstrapResult(
        tag=tag, point=point, low=low, high=high, replicates=n_boot
    )


# ---------------------------------------------------------------------------
# persistence


def channel_save(channel, base):
    """<base>.dist (binary distribution), <base>.fits.npz, <base>.json."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    Path(str(base) + ".dist").write_bytes(channel.distribution.to_bytes())
    d = channel.diagnostics
    np.savez_compressed(
        str(base) + ".fits.npz",
        A=d.A,
        f=d.f,
        residual=d.residual,
        points_used=d.points_used,
        clamped=d.clamped,
    )
    sidecar = {"n": channel.n, **d.summary()}
    Path(str(base) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def channel_load(base):
    base = str(base)
    dist = ProbDist.from_bytes(Path(base + ".dist").read_bytes())
    with np.load(base + ".fits.npz") as blob:
        diagnostics = FitDiagnostics(
            A=blob["A"],
            f=blob["f"],
            residual=blob["residual"],
            points_used=blob["points_used"],
            clamped=blob["clamped"],
        )
    eigs = EigenvalueVector(dist.n, np.concatenate([[1.0], diagnostics.f]))
    return LearnedChannel(
        n=dist.n, eigenvalues=eigs, distribution=dist, diagnostics=diagnostics
    )
