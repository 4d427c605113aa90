"""Code-capacity logical error rates for the rotated surface code.

Errors are drawn from an indicator-word source (dense distribution, learned
channel, or fitted factor-graph model); every flagged site then gets X, Y, or
Z with equal probability.  Syndromes are decoded by maximizing the coset
probability of the four logical classes under a per-qubit depolarizing prior,
either exactly (summing the full stabilizer group, small codes only) or with
a boundary matrix-product-state contraction truncated to a bond dimension.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dist import ProbDist
from .models import Model, model_dist, sample_model
from .pauli import PauliOp
from .sim import pack_words, sample_words

MAX_BRUTEFORCE_SITES = 10

# measured-device reference point, quoted alongside report output
REPORT_CONTEXT_POINT = {"physical_rate": 0.136, "logical_rate": 0.176}

# decoding preference when class likelihoods tie
_CLASS_ORDER = ("I", "X", "Z", "Y")


class DegenerateContractionError(RuntimeError):
    """Raised when truncation leaves every logical-class score at zero."""


@dataclass(frozen=True)
class DecoderPrior:
    """Per-qubit depolarizing probability assumed by the decoder."""

    error_rate: float

    def __post_init__(self):
        if not 0.0 <= self.error_rate < 0.75:
            raise ValueError("prior error rate must lie in [0, 3/4)")

    @property
    def letter_probs(self):
        """(identity, each of X/Y/Z) per-qubit probabilities."""
        return 1.0 - self.error_rate, self.error_rate / 3.0


@dataclass(frozen=True)
class LogicalErrorEstimate:
    rate: float
    samples: int
    repeats: int
    interval: tuple
    per_repeat: tuple


def _prior_value(prior):
    if isinstance(prior, DecoderPrior):
        return prior.error_rate
    return DecoderPrior(float(prior)).error_rate


# ---------------------------------------------------------------------------
# error sampling


def _resolve_source(source):
    if isinstance(source, Model):
        return source, source.graph.n
    dist = getattr(source, "distribution", source)
    if not isinstance(dist, ProbDist):
        raise TypeError("source must be a ProbDist, learned channel, or Model")
    return dist, dist.n


def _draw_words(source, count, rng):
    src, n = _resolve_source(source)
    if isinstance(src, Model):
        return sample_model(src, count, rng), n
    return sample_words(src, count, rng), n


def _letters_to_masks(words, n, rng):
    shifts = np.arange(n, dtype=np.uint64)
    bits = ((words[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    letter = rng.integers(0, 3, size=bits.shape, dtype=np.uint8)
    xbits = ((letter != 2) & (bits == 1)).astype(np.uint8)
    zbits = ((letter != 0) & (bits == 1)).astype(np.uint8)
    return pack_words(xbits), pack_words(zbits)


def _draw_errors(source, count, rng):
    words, n = _draw_words(source, count, rng)
    xs, zs = _letters_to_masks(words, n, rng)
    return xs, zs, n


def sample_error(source, rng):
    """One Pauli error: indicator word, then a uniform letter per flagged site."""
    xs, zs, n = _draw_errors(source, 1, rng)
    x, z = int(xs[0]), int(zs[0])
    return PauliOp(n, x, z, (x & z).bit_count())


def source_average_rate(source):
    """Mean marginal flag rate; the default decoder prior."""
    src, _ = _resolve_source(source)
    dist = model_dist(src) if isinstance(src, Model) else src
    return float(dist.marginal_rates().mean())


# ---------------------------------------------------------------------------
# syndromes and pure errors


def _layout_key(layout):
    return (layout.rows, layout.cols, layout.ancillas)


_PURE_CACHE = {}
_GROUP_CACHE = {}
_NETWORK_CACHE = {}


def _pure_errors(layout):
    """Per-generator errors: pure[a] trips generator a and no other.

    Solved once per layout by GF(2) elimination of the commutation system;
    arbitrary syndromes then follow by XOR-linearity.
    """
    key = _layout_key(layout)
    if key in _PURE_CACHE:
        return _PURE_CACHE[key]
    n = layout.n_data
    pivots = []  # (pivot bit, reduced row, generator combination)
    for a in range(layout.n_ancilla):
        g = layout.stabilizer(a)
        word, combo = g.z | (g.x << n), 1 << a
        for pbit, pword, pcombo in pivots:
            if (word >> pbit) & 1:
                word ^= pword
                combo ^= pcombo
        if word == 0:
            raise ValueError("stabilizer generators are dependent")
        pbit = word.bit_length() - 1
        pivots = [
            (qb, qw ^ (word if (qw >> pbit) & 1 else 0), qc ^ (combo if (qw >> pbit) & 1 else 0))
            for qb, qw, qc in pivots
        ] + [(pbit, word, combo)]
    mask = (1 << n) - 1
    pure = []
    for a in range(layout.n_ancilla):
        v = 0
        for pbit, _, combo in pivots:
            if ((combo >> a) & 1) == 1:
                v ^= 1 << pbit
        pure.append((v & mask, v >> n))
    _PURE_CACHE[key] = tuple(pure)
    return _PURE_CACHE[key]


def _pure_error_for(layout, s):
    if not 0 <= s < (1 << layout.n_ancilla):
        raise ValueError("syndrome word outside the generator range")
    ex = ez = 0
    for a, (px, pz) in enumerate(_pure_errors(layout)):
        if (s >> a) & 1:
            ex ^= px
            ez ^= pz
    return ex, ez


def _syndromes(layout, xs, zs):
    out = np.zeros(xs.shape, dtype=np.uint64)
    for a in range(layout.n_ancilla):
        g = layout.stabilizer(a)
        par = np.bitwise_count(xs & np.uint64(g.z)) + np.bitwise_count(
            zs & np.uint64(g.x)
        )
        out |= (par & np.uint8(1)).astype(np.uint64) << np.uint64(a)
    return out


def _logical_reps(layout):
    lx = layout.logical_x().x
    lz = layout.logical_z().z
    return {"I": (0, 0), "X": (lx, 0), "Z": (0, lz), "Y": (lx, lz)}


def _pick_class(scores):
    best = max(scores.values())
    if best <= 0.0:
        raise ValueError("prior assigns zero likelihood to every class")
    for cls in _CLASS_ORDER:
        if scores[cls] >= best * (1.0 - 1e-9):
            return cls
    raise AssertionError("unreachable")


def _correction(layout, e0x, e0z, cls):
    lx, lz = _logical_reps(layout)[cls]
    x, z = e0x ^ lx, e0z ^ lz
    return PauliOp(layout.n_data, x, z, (x & z).bit_count())


# ---------------------------------------------------------------------------
# brute-force maximum likelihood


def _group_masks(layout):
    key = _layout_key(layout)
    if key in _GROUP_CACHE:
        return _GROUP_CACHE[key]
    n_anc = layout.n_ancilla
    subs = np.arange(1 << n_anc, dtype=np.uint64)
    gx = np.zeros(1 << n_anc, dtype=np.uint64)
    gz = np.zeros(1 << n_anc, dtype=np.uint64)
    for a in range(n_anc):
        g = layout.stabilizer(a)
        chosen = ((subs >> np.uint64(a)) & np.uint64(1)) == 1
        gx[chosen] ^= np.uint64(g.x)
        gz[chosen] ^= np.uint64(g.z)
    _GROUP_CACHE[key] = (gx, gz)
    return _GROUP_CACHE[key]


def _class_scores_bruteforce(layout, e0x, e0z, p):
    n = layout.n_data
    gx, gz = _group_masks(layout)
    p_id, p_letter = 1.0 - p, p / 3.0
    scores = {}
    for cls, (lx, lz) in _logical_reps(layout).items():
        support = (np.uint64(e0x ^ lx) ^ gx) | (np.uint64(e0z ^ lz) ^ gz)
        w = np.bitwise_count(support).astype(np.int64)
        scores[cls] = float((p_id ** (n - w) * p_letter**w).sum())
    return scores


def ml_decode_bruteforce(layout, s, prior):
    """Exact coset-sum decoder; enumerates the full stabilizer group."""
    if layout.n_data > MAX_BRUTEFORCE_SITES:
        raise ValueError(
            f"brute-force decoding is capped at {MAX_BRUTEFORCE_SITES} data qubits"
        )
    p = _prior_value(prior)
    e0x, e0z = _pure_error_for(layout, s)
    scores = _class_scores_bruteforce(layout, e0x, e0z, p)
    total = sum(scores.values())
    if total <= 0.0:
        raise ValueError("prior assigns zero likelihood to every class")
    posterior = {cls: scores[cls] / total for cls in _CLASS_ORDER}
    cls = _pick_class(posterior)
    return _correction(layout, e0x, e0z, cls), posterior


# ---------------------------------------------------------------------------
# boundary-MPS decoder
#
# Stabilizer-group elements are sums over one binary variable per face; the
# coset probability is then a planar tensor network: a copy tensor on every
# face, a per-qubit prior tensor on every data site, edges along the face
# diagonals.  Doubling coordinates puts faces at even points and data at odd
# points, every edge a one-step diagonal, so the network contracts column by
# column onto 2*rows "rails" with at most one two-site gate per node.


@dataclass(frozen=True)
class _Node:
    y: int
    is_face: bool
    qubit: int  # data only
    legs: tuple  # per (in_l, in_r, out_l, out_r): face kind, "" absent


def _network(layout):
    key = _layout_key(layout)
    if key in _NETWORK_CACHE:
        return _NETWORK_CACHE[key]
    swap = layout.rows > layout.cols
    rows, cols = (layout.cols, layout.rows) if swap else (layout.rows, layout.cols)
    faces = {}
    for anc in layout.ancillas:
        fr, fc = anc.coord
        if swap:
            fr, fc = fc, fr
        faces[(fr, fc)] = anc.kind
    columns = [[] for _ in range(2 * cols + 1)]
    for (fr, fc), kind in faces.items():
        corners = ((fr, fc), (fr + 1, fc), (fr, fc + 1), (fr + 1, fc + 1))
        legs = tuple(
            kind if 0 <= r < rows and 0 <= c < cols else "" for r, c in corners
        )
        columns[2 * fc + 2].append(_Node(2 * fr + 2, True, -1, legs))
    for r in range(rows):
        for c in range(cols):
            qr, qc = (c, r) if swap else (r, c)
            q = qr * layout.cols + qc
            around = ((r - 1, c - 1), (r, c - 1), (r - 1, c), (r, c))
            legs = tuple(faces.get(f, "") for f in around)
            columns[2 * c + 1].append(_Node(2 * r + 1, False, q, legs))
    for col in columns:
        col.sort(key=lambda nd: nd.y)
    _NETWORK_CACHE[key] = (rows, columns)
    return _NETWORK_CACHE[key]


def _face_tensor(legs):
    dims = tuple(2 if k else 1 for k in legs)
    t = np.zeros(dims)
    for idx in np.ndindex(dims):
        live = [v for v, k in zip(idx, legs) if k]
        t[idx] = 1.0 if len(set(live)) <= 1 else 0.0
    return t


def _qubit_tensor(legs, hx, hz, probs):
    dims = tuple(2 if k else 1 for k in legs)
    t = np.zeros(dims)
    for idx in np.ndindex(dims):
        xf = zf = 0
        for v, k in zip(idx, legs):
            if k == "X":
                xf ^= v
            elif k == "Z":
                zf ^= v
        t[idx] = probs[(hx ^ xf) | ((hz ^ zf) << 1)]
    return t


def _apply_one(sites, i, gate):
    """gate: (p_in, p_out); returns log rescale or None on exact zero."""
    theta = np.einsum("lpr,pq->lqr", sites[i], gate)
    nrm = float(np.linalg.norm(theta))
    if nrm == 0.0:
        return None
    sites[i] = theta / nrm
    return math.log(nrm)


def _apply_two(sites, i, gate, chi):
    """gate: (p_in_up, p_in_dn, p_out_up, p_out_dn) on sites (i, i+1)."""
    theta = np.tensordot(sites[i], sites[i + 1], axes=(2, 0))
    theta = np.einsum("lpqr,pqab->labr", theta, gate)
    nrm = float(np.linalg.norm(theta))
    if nrm == 0.0:
        return None
    theta /= nrm
    dl, ou, od, dr = theta.shape
    u, s, vh = np.linalg.svd(theta.reshape(dl * ou, od * dr), full_matrices=False)
    k = s.size if chi is None else min(int(chi), s.size)
    k = min(k, max(1, int((s > 0.0).sum())))
    sites[i] = u[:, :k].reshape(dl, ou, k)
    sites[i + 1] = (s[:k, None] * vh[:k]).reshape(k, od, dr)
    return math.log(nrm)


def _contract_class(layout, e0x, e0z, lx, lz, probs, chi):
    """log of the class coset probability (unnormalized), -inf on exact zero."""
    rows, columns = _network(layout)
    hx_all, hz_all = e0x ^ lx, e0z ^ lz
    sites = [np.ones((1, 1, 1)) for _ in range(2 * rows)]
    log_scale = 0.0
    for col in columns:
        for node in col:
            if node.is_face:
                gate = _face_tensor(node.legs)
            else:
                hx = (hx_all >> node.qubit) & 1
                hz = (hz_all >> node.qubit) & 1
                gate = _qubit_tensor(node.legs, hx, hz, probs)
            up, dn = node.y - 1, node.y
            if up < 0:
                step = _apply_one(sites, dn, gate[0, :, 0, :])
            elif dn > 2 * rows - 1:
                step = _apply_one(sites, up, gate[:, 0, :, 0])
            else:
                step = _apply_two(sites, up, gate.transpose(0, 1, 2, 3), chi)
            if step is None:
                return -math.inf
            log_scale += step
    value = np.ones((1, 1))
    for a in sites:
        value = value @ a[:, 0, :]
    scalar = float(value[0, 0])
    if scalar <= 0.0:
        return -math.inf
    return math.log(scalar) + log_scale


def _class_scores_mps(layout, e0x, e0z, p, chi):
    probs = (1.0 - p, p / 3.0, p / 3.0, p / 3.0)
    logs = {
        cls: _contract_class(layout, e0x, e0z, lx, lz, probs, chi)
        for cls, (lx, lz) in _logical_reps(layout).items()
    }
    top = max(logs.values())
    if top == -math.inf:
        raise DegenerateContractionError(
            f"all class scores vanished (chi={chi}, syndrome streak over "
            f"{layout.n_ancilla} generators)"
        )
    vals = {cls: math.exp(lg - top) for cls, lg in logs.items()}
    total = sum(vals.values())
    return {cls: vals[cls] / total for cls in _CLASS_ORDER}


def mps_decode(layout, s, prior, chi=8):
    """Boundary-MPS coset decoder; chi=None contracts without truncation."""
    if chi is not None and chi < 1:
        raise ValueError("bond dimension must be at least 1")
    p = _prior_value(prior)
    e0x, e0z = _pure_error_for(layout, s)
    scores = _class_scores_mps(layout, e0x, e0z, p, chi)
    cls = _pick_class(scores)
    return _correction(layout, e0x, e0z, cls), scores


# ---------------------------------------------------------------------------
# Monte Carlo


def _decode_masks(layout, s, p, method, chi):
    e0x, e0z = _pure_error_for(layout, s)
    if method == "bruteforce":
        scores = _class_scores_bruteforce(layout, e0x, e0z, p)
    else:
        scores = _class_scores_mps(layout, e0x, e0z, p, chi)
    cls = _pick_class(scores)
    lx, lz = _logical_reps(layout)[cls]
    return e0x ^ lx, e0z ^ lz


def logical_error_rate(
    layout,
    source,
    *,
    n_samples,
    repeats=10,
    rng=None,
    method="mps",
    chi=8,
    prior=None,
):
    """Monte Carlo logical failure rate under code-capacity decoding.

    Each repeat draws n_samples errors with its own RNG stream; the 2-sigma
    interval comes from the spread of the per-repeat rates.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples per repeat")
    if repeats < 1:
        raise ValueError("need at least one repeat")
    if method not in ("mps", "bruteforce"):
        raise ValueError(f"unknown decode method {method!r}")
    if method == "bruteforce" and layout.n_data > MAX_BRUTEFORCE_SITES:
        raise ValueError(
            f"brute-force decoding is capped at {MAX_BRUTEFORCE_SITES} data qubits"
        )
    _, n = _resolve_source(source)
    if n != layout.n_data:
        raise ValueError("source width does not match the data grid")
    p = source_average_rate(source) if prior is None else _prior_value(prior)
    if rng is None:
        rng = np.random.default_rng()
    lz = np.uint64(layout.logical_z().z)
    lx = np.uint64(layout.logical_x().x)
    cache = {}
    rates = []
    for stream in rng.spawn(repeats):
        xs, zs, _ = _draw_errors(source, n_samples, stream)
        syn = _syndromes(layout, xs, zs)
        uniq, inverse = np.unique(syn, return_inverse=True)
        for s in uniq:
            s = int(s)
            if s not in cache:
                cache[s] = _decode_masks(layout, s, p, method, chi)
        corr = np.array([cache[int(s)] for s in uniq], dtype=np.uint64)
        res_x = xs ^ corr[inverse, 0]
        res_z = zs ^ corr[inverse, 1]
        bad_x = np.bitwise_count(res_x & lz) & np.uint8(1)
        bad_z = np.bitwise_count(res_z & lx) & np.uint8(1)
        rates.append(float(((bad_x | bad_z) != 0).mean()))
    rate = float(np.mean(rates))
    if repeats > 1:
        half = 2.0 * float(np.std(rates, ddof=1)) / math.sqrt(repeats)
    else:
        half = 0.0
    interval = (max(0.0, rate - half), min(1.0, rate + half))
    return LogicalErrorEstimate(
        rate=rate,
        samples=n_samples,
        repeats=repeats,
        interval=interval,
        per_repeat=tuple(rates),
    )


def results_to_csv(rows):
    """CSV rows (source, model, t, physical_rate, logical_rate, two_sigma)."""
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["source", "model", "t", "physical_rate", "logical_rate", "two_sigma"]
    )
    for row in rows:
        writer.writerow(
            [
                row["source"],
                row["model"],
                "%.12g" % row["t"],
                "%.12g" % row["physical_rate"],
                "%.12g" % row["logical_rate"],
                "%.12g" % row["two_sigma"],
            ]
        )
    return buf.getvalue()
