"""Factor-graph models of the indicator-word distribution.

Four stock structures over the data grid: a single shared rate (iid), one
rate per site (ind), nearest-neighbor pair factors (ising), and a chain of
overlapping line-pair factors (cg1d).  Couplings J_b live on the cliques
induced by each factor's support; p(x) is proportional to
exp(-sum_{b subset ones(x)} J_b), with J_emptyset dropped, so the all-zero
word always scores 0.  The cg1d kind instead stores the line-pair marginal
tables and chains them, which needs no conditioning and no log solve.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .dist import MAX_SITES, ProbDist, marginalize

MAX_FACTOR_SITES = 8

# spectral condition number of the subset-sum system per clique site;
# coupling estimates lose roughly one digit per two sites in a clique
COUPLING_SYSTEM_CONDITION = (3.0 + np.sqrt(5.0)) / 2.0

KINDS = ("iid", "ind", "ising", "cg1d", "custom")


@dataclass(frozen=True)
class FactorGraph:
    kind: str
    variables: tuple  # bit positions 0..n-1
    factors: tuple  # tuples of bit positions

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.variables != tuple(range(len(self.variables))):
            raise ValueError("variables must be the bit positions 0..n-1")
        seen = set()
        for f in self.factors:
            if not f or len(f) > MAX_FACTOR_SITES:
                raise ValueError(f"factor size must be 1..{MAX_FACTOR_SITES}")
            if len(set(f)) != len(f) or any(v not in set(self.variables) for v in f):
                raise ValueError("factor sites must be distinct variables")
            key = tuple(sorted(f))
            if key in seen:
                raise ValueError("duplicate factor")
            seen.add(key)

    @property
    def n(self):
        return len(self.variables)

    def cliques(self):
        """All nonempty subsets of every factor support, deduplicated."""
        out = set()
        for f in self.factors:
            sites = tuple(sorted(f))
            for size in range(1, len(sites) + 1):
                out.update(itertools.combinations(sites, size))
        return tuple(sorted(out, key=lambda c: (len(c), c)))

    def blanket(self, clique):
        """Sites sharing a factor with the clique, excluding the clique."""
        members = set(clique)
        out = set()
        for f in self.factors:
            if members & set(f):
                out.update(f)
        return tuple(sorted(out - members))

    @property
    def parameter_count(self):
        if self.kind == "iid":
            return 1
        return sum(1 if len(f) == 1 else 1 << len(f) for f in self.factors)


def _grid_lines(rows, cols):
    """Split the grid into parallel lines along the shorter axis."""
    if rows <= cols:
        return [tuple(r * cols + c for r in range(rows)) for c in range(cols)]
    return [tuple(r * cols + c for c in range(cols)) for r in range(rows)]


def build_model(kind, layout):
    """Stock factor graph over the layout's data grid."""
    kind = kind.lower()
    rows, cols = layout.rows, layout.cols
    n = rows * cols
    variables = tuple(range(n))
    if kind in ("iid", "ind"):
        factors = tuple((v,) for v in variables)
    elif kind == "ising":
        pairs = []
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    pairs.append((r * cols + c, r * cols + c + 1))
                if r + 1 < rows:
                    pairs.append((r * cols + c, (r + 1) * cols + c))
        factors = tuple(sorted(pairs))
    elif kind == "cg1d":
        lines = _grid_lines(rows, cols)
        if 2 * len(lines[0]) > MAX_FACTOR_SITES:
            raise ValueError(
                f"line pairs exceed {MAX_FACTOR_SITES} sites; grid too wide to chain"
            )
        factors = tuple(lines[k] + lines[k + 1] for k in range(len(lines) - 1))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return FactorGraph(kind=kind, variables=variables, factors=factors)


@dataclass(frozen=True, eq=False)
class CouplingSet:
    kind: str
    couplings: dict  # clique tuple -> J; empty for cg1d
    tables: tuple = ()  # cg1d: per-factor joint marginals, factor order
    smoothed: tuple = ()  # cliques (or cg1d factor indices) that hit zero mass


@dataclass(frozen=True, eq=False)
class Model:
    graph: FactorGraph
    couplings: CouplingSet


def _unpack(graph, couplings):
    if couplings is None:
        if not isinstance(graph, Model):
            raise TypeError("couplings required when passing a bare graph")
        return graph.graph, graph.couplings
    return graph, couplings


def _as_dist(source, n):
    """(distribution, total shot count or None) from dist/channel/records."""
    if isinstance(source, ProbDist):
        return source, None
    dist = getattr(source, "distribution", None)
    if isinstance(dist, ProbDist):
        return dist, None
    records = list(source)
    if not records:
        raise ValueError("no records")
    counts = np.zeros(1 << n)
    total = 0
    for rec in records:
        if rec.n_sites != n:
            raise ValueError("record width disagrees with the graph")
        counts += np.bincount(rec.words.astype(np.int64), minlength=1 << n)
        total += len(rec.words)
    return ProbDist(n, counts / total), total


def _mobius_top(log_cells):
    """Top coefficient of [[1,0],[-1,1]]^tensor applied to the cell vector."""
    work = log_cells.copy()
    k = int(np.log2(len(work)))
    idx = np.arange(len(work))
    for bit in range(k):
        hot = (idx >> bit) & 1 == 1
        work[hot] -= work[idx[hot] ^ (1 << bit)]
    return work[-1]


def _smooth(cells, shots):
    """Jeffreys-style fill for zero cells; half a count when counts exist,
    otherwise half the smallest populated cell."""
    if not (cells == 0).any():
        return cells, False
    if shots is not None:
        alpha = 0.5 / shots
    elif (cells > 0).any():
        alpha = 0.5 * cells[cells > 0].min()
    else:
        alpha = 1.0
    return cells + alpha, True


def estimate_couplings(graph, source):
    """Fit couplings (or cg1d line tables) from a distribution or records."""
    dist, shots = _as_dist(source, graph.n)
    if dist.n != graph.n:
        raise ValueError("source width disagrees with the graph")

    if graph.kind == "cg1d":
        tables = tuple(marginalize(dist, f).values for f in graph.factors)
        flagged = tuple(i for i, t in enumerate(tables) if (t == 0).any())
        return CouplingSet(kind="cg1d", couplings={}, tables=tables, smoothed=flagged)

    if graph.kind == "iid":
        q = float(dist.marginal_rates().mean())
        cells, flag = _smooth(np.array([1.0 - q, q]), shots)
        cells = cells / cells.sum()
        j = float(np.log(cells[0] / cells[1]))
        couplings = {(v,): j for v in graph.variables}
        flagged = tuple((v,) for v in graph.variables) if flag else ()
        return CouplingSet(kind="iid", couplings=couplings, smoothed=flagged)

    couplings = {}
    flagged = []
    for clique in graph.cliques():
        blanket = graph.blanket(clique)
        marg = marginalize(dist, clique + blanket)
        cells = marg.values[: 1 << len(clique)].copy()  # blanket bits all zero
        cells, flag = _smooth(cells, shots)
        if flag:
            flagged.append(clique)
        cells = cells / cells.sum()
        couplings[clique] = -float(_mobius_top(np.log(cells)))
    return CouplingSet(kind=graph.kind, couplings=couplings, smoothed=tuple(flagged))


def fit_model(graph, source):
    return Model(graph=graph, couplings=estimate_couplings(graph, source))


def _check_coverage(graph, couplings):
    if couplings.kind != graph.kind:
        raise ValueError("couplings were fitted for a different model kind")
    if graph.kind == "cg1d":
        if len(couplings.tables) != len(graph.factors):
            raise ValueError("cg1d tables do not match the factor list")
        return
    missing = [c for c in graph.cliques() if c not in couplings.couplings]
    if missing:
        raise KeyError(f"missing clique {missing[0]}")


def _line_subwords(graph, idx):
    """Per-line subwords of each index for a cg1d graph; lines in chain order."""
    w = len(graph.factors[0]) // 2
    lines = [graph.factors[0][:w]] + [f[w:] for f in graph.factors]
    subs = []
    for line in lines:
        sub = np.zeros(len(idx), dtype=np.int64)
        for j, site in enumerate(line):
            sub |= ((idx >> site) & 1) << j
        subs.append(sub)
    return subs


def _cg1d_conditionals(couplings, w):
    """Per-factor (conditional of earlier line given later, later marginal)."""
    out = []
    for values in couplings.tables:
        joint = values.reshape(1 << w, 1 << w)  # [later line, earlier line]
        later = joint.sum(axis=1)
        cond = np.divide(
            joint, later[:, None], out=np.zeros_like(joint), where=later[:, None] > 0
        )
        out.append((cond, later))
    return out


def model_log_prob(graph, couplings, x=None):
    """Unnormalized -log p(x); exactly 0 at x = 0.

    Call as (graph, couplings, x) or (model, x).
    """
    if isinstance(graph, Model):
        graph, couplings, x = graph.graph, graph.couplings, couplings
    _check_coverage(graph, couplings)
    x = int(x)
    if graph.kind == "cg1d":
        w = len(graph.factors[0]) // 2
        conds = _cg1d_conditionals(couplings, w)
        subs = [int(s[0]) for s in _line_subwords(graph, np.array([x], dtype=np.int64))]
        with np.errstate(divide="ignore"):
            total = -np.log(conds[-1][1][subs[-1]])
            for k, (cond, _) in enumerate(conds):
                total -= np.log(cond[subs[k + 1], subs[k]])
            base = -np.log(conds[-1][1][0])
            for k, (cond, _) in enumerate(conds):
                base -= np.log(cond[0, 0])
        return float(total - base)
    total = 0.0
    for clique, j in couplings.couplings.items():
        mask = 0
        for site in clique:
            mask |= 1 << site
        if x & mask == mask:
            total += j
    return total


def model_dist(graph, couplings=None):
    """Exact normalized distribution of the model (n capped at MAX_SITES)."""
    graph, couplings = _unpack(graph, couplings)
    _check_coverage(graph, couplings)
    n = graph.n
    if n > MAX_SITES:
        raise ValueError(f"cannot enumerate beyond {MAX_SITES} sites")
    idx = np.arange(1 << n, dtype=np.int64)
    if graph.kind == "cg1d":
        w = len(graph.factors[0]) // 2
        conds = _cg1d_conditionals(couplings, w)
        subs = _line_subwords(graph, idx)
        values = conds[-1][1][subs[-1]].copy()
        for k, (cond, _) in enumerate(conds):
            values *= cond[subs[k + 1], subs[k]]
    else:
        energy = np.zeros(1 << n)
        for clique, j in couplings.couplings.items():
            mask = 0
            for site in clique:
                mask |= 1 << site
            energy[idx & mask == mask] += j
        energy -= energy.min()  # overflow guard; normalization absorbs it
        values = np.exp(-energy)
    return ProbDist(n, values / values.sum())


def _stable_bernoulli_prob(delta):
    """p = 1 / (1 + exp(delta)) without overflow."""
    out = np.empty_like(delta, dtype=np.float64)
    pos = delta >= 0
    out[pos] = np.exp(-delta[pos]) / (1.0 + np.exp(-delta[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(delta[~pos]))
    return out


def _sample_independent(graph, couplings, count, rng):
    j_values = np.array([couplings.couplings[(v,)] for v in graph.variables])
    bits = rng.random((count, graph.n)) < _stable_bernoulli_prob(j_values)
    return _pack(bits)


def _pack(bits):
    weights = np.uint64(1) << np.arange(bits.shape[1], dtype=np.uint64)
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


def _sample_chain(graph, couplings, count, rng):
    w = len(graph.factors[0]) // 2
    conds = _cg1d_conditionals(couplings, w)
    lines = [graph.factors[0][:w]] + [f[w:] for f in graph.factors]
    last_cum = np.cumsum(conds[-1][1])
    sub = np.searchsorted(last_cum, rng.random(count), side="right")
    sub = np.minimum(sub, (1 << w) - 1)
    words = np.zeros(count, dtype=np.uint64)
    for j, site in enumerate(lines[-1]):
        words |= (((sub >> j) & 1).astype(np.uint64)) << np.uint64(site)
    for k in range(len(conds) - 1, -1, -1):
        cond_cum = np.cumsum(conds[k][0], axis=1)
        u = rng.random(count)
        prev = np.empty(count, dtype=np.int64)
        for value in np.unique(sub):
            rows = sub == value
            prev[rows] = np.searchsorted(cond_cum[value], u[rows], side="right")
        prev = np.minimum(prev, (1 << w) - 1)
        for j, site in enumerate(lines[k]):
            words |= (((prev >> j) & 1).astype(np.uint64)) << np.uint64(site)
        sub = prev
    return words


def _sample_gibbs(graph, couplings, count, rng, burn_in, thin):
    n = graph.n
    per_site = []
    for v in graph.variables:
        terms = []
        for clique, j in couplings.couplings.items():
            if v in clique:
                rest = np.array([s for s in clique if s != v], dtype=np.int64)
                terms.append((rest, j))
        per_site.append(terms)
    chains = int(min(count, 1024))
    state = np.zeros((chains, n), dtype=bool)

    def sweep():
        for v in graph.variables:
            delta = np.zeros(chains)
            for rest, j in per_site[v]:
                if len(rest):
                    delta += j * state[:, rest].all(axis=1)
                else:
                    delta += j
            state[:, v] = rng.random(chains) < _stable_bernoulli_prob(delta)

    for _ in range(burn_in):
        sweep()
    out = []
    collected = 0
    while collected < count:
        take = min(chains, count - collected)
        out.append(_pack(state[:take]))
        collected += take
        if collected < count:
            for _ in range(thin):
                sweep()
    return np.concatenate(out)


def sample_model(graph, couplings, count=None, rng=None, burn_in=100, thin=10):
    """Indicator words drawn from the model.

    iid/ind draw sites independently; cg1d samples the chain ancestrally
    from the stored tables; everything else runs batched Gibbs chains with
    burn_in full sweeps, then thin sweeps between collected rows.

    Call as (graph, couplings, count, rng) or (model, count, rng).
    """
    if isinstance(graph, Model):
        graph, couplings, count, rng = (
            graph.graph,
            graph.couplings,
            couplings,
            count if rng is None else rng,
        )
    _check_coverage(graph, couplings)
    count = int(count)
    if graph.kind in ("iid", "ind"):
        return _sample_independent(graph, couplings, count, rng)
    if graph.kind == "cg1d":
        return _sample_chain(graph, couplings, count, rng)
    return _sample_gibbs(graph, couplings, count, rng, burn_in, thin)


# ---------------------------------------------------------------------------
# model-error metrics


def _entropy(values):
    pos = values[values > 0]
    return float(-(pos * np.log(pos)).sum())


def jsd(p, q):
    """Jensen-Shannon divergence in nats; bounded by log 2."""
    if p.n != q.n:
        raise ValueError("distributions disagree on site count")
    mid = 0.5 * (p.values + q.values)
    return _entropy(mid) - 0.5 * _entropy(p.values) - 0.5 * _entropy(q.values)


def _embedded_moments(values, embedding):
    mean = values @ embedding
    second = embedding.T @ (values[:, None] * embedding)
    return mean, second - np.outer(mean, mean)


def _default_embedding(n):
    idx = np.arange(1 << n, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(float)


def cov_diff_norm(p, q):
    """Spectral norm of the indicator-covariance difference."""
    if p.n != q.n:
        raise ValueError("distributions disagree on site count")
    emb = _default_embedding(p.n)
    _, cov_p = _embedded_moments(p.values, emb)
    _, cov_q = _embedded_moments(q.values, emb)
    return float(np.abs(np.linalg.eigvalsh(cov_p - cov_q)).max())


def cov_bound_check(p, q, embedding=None):
    """(lhs, rhs, holds) for |cov_p - cov_q| <= T (D^2 - |mu_p - mu_q|^2 / 4).

    T is the total variation distance, D the diameter of the embedded
    support of p - q.  The bound holds for every pair of distributions.
    """
    if len(p.values) != len(q.values):
        raise ValueError("distributions disagree on outcome count")
    emb = _default_embedding(p.n) if embedding is None else np.asarray(embedding, float)
    mu_p, cov_p = _embedded_moments(p.values, emb)
    mu_q, cov_q = _embedded_moments(q.values, emb)
    lhs = float(np.abs(np.linalg.eigvalsh(cov_p - cov_q)).max())
    diff = p.values - q.values
    support = emb[np.abs(diff) > 1e-15]
    if len(support) == 0:
        return lhs, 0.0, lhs <= 1e-12
    deltas = support[:, None, :] - support[None, :, :]
    diameter2 = float((deltas**2).sum(axis=2).max())
    t_dist = 0.5 * float(np.abs(diff).sum())
    rhs = t_dist * (diameter2 - 0.25 * float(((mu_p - mu_q) ** 2).sum()))
    return lhs, rhs, lhs <= rhs + 1e-12


def conditional_entropy(dist, target, given=()):
    """H(target | given) in nats via exact marginals."""
    given = tuple(given)
    joint = marginalize(dist, (target,) + given)
    if not given:
        return _entropy(joint.values)
    rest = marginalize(joint, tuple(range(1, len(given) + 1)))
    return _entropy(joint.values) - _entropy(rest.values)


def blanket_search(dist, target, k):
    """Exhaustively pick the k-subset minimizing H(target | subset).

    Ties within 1e-12 keep the lexicographically first subset.  Partial sums
    are shared across subsets with a common prefix, so the exhaustive scan
    stays tractable on dense distributions over ~20 sites.
    """
    if not 0 <= target < dist.n:
        raise ValueError("target outside the distribution")
    if k >= dist.n:
        raise ValueError("subset size must leave the target out")
    n = dist.n
    candidates = [s for s in range(n) if s != target]
    root = dist.values.reshape([2] * n)
    best = [None, None]

    def score(tensor, live, chosen):
        keep = set(chosen)
        keep.add(target)
        drop = tuple(i for i, s in enumerate(live) if s not in keep)
        joint = tensor.sum(axis=drop) if drop else tensor
        kept = [s for s in live if s in keep]
        h_joint = _entropy(joint.reshape(-1))
        h_given = _entropy(joint.sum(axis=kept.index(target)).reshape(-1))
        ce = h_joint - h_given
        if best[1] is None or ce < best[1] - 1e-12:
            best[0], best[1] = tuple(chosen), ce

    def walk(tensor, live, idx, chosen):
        if len(chosen) == k:
            score(tensor, live, chosen)
            return
        if len(candidates) - idx < k - len(chosen):
            return
        site = candidates[idx]
        chosen.append(site)  # keep-branch first == lexicographic order
        walk(tensor, live, idx + 1, chosen)
        chosen.pop()
        reduced = tensor.sum(axis=live.index(site))
        walk(reduced, [s for s in live if s != site], idx + 1, chosen)

    walk(root, list(range(n - 1, -1, -1)), 0, [])
    return best[0], best[1]


# ---------------------------------------------------------------------------
# persistence


def model_to_json(model):
    graph, couplings = model.graph, model.couplings
    payload = {
        "kind": graph.kind,
        "variables": list(graph.variables),
        "factors": [list(f) for f in graph.factors],
        "couplings": [
            {"clique": list(c), "J": j} for c, j in sorted(couplings.couplings.items())
        ],
        "smoothed": [list(c) if isinstance(c, tuple) else c for c in couplings.smoothed],
    }
    if couplings.tables:
        payload["tables"] = [
            {"factor": list(f), "values": t.tolist()}
            for f, t in zip(graph.factors, couplings.tables)
        ]
    return json.dumps(payload, indent=2, sort_keys=True)


def model_from_json(text):
    payload = json.loads(text)
    graph = FactorGraph(
        kind=payload["kind"],
        variables=tuple(payload["variables"]),
        factors=tuple(tuple(f) for f in payload["factors"]),
    )
    tables = tuple(np.array(entry["values"]) for entry in payload.get("tables", []))
    smoothed = tuple(
        tuple(c) if isinstance(c, list) else c for c in payload.get("smoothed", [])
    )
    couplings = CouplingSet(
        kind=payload["kind"],
        couplings={
            tuple(entry["clique"]): float(entry["J"]) for entry in payload["couplings"]
        },
        tables=tables,
        smoothed=smoothed,
    )
    return Model(graph=graph, couplings=couplings)
