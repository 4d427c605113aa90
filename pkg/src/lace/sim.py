"""Monte Carlo device model: noisy execution of sequences, plus ground truth.

Noise is Pauli, tracked as per-shot frames (x, z bitplanes over qubits) that
conjugate through the ideal Clifford circuit; phases never matter because
only measurement flips are recorded.  In effective mode one indicator word
per block is drawn from the configured distribution and XORed straight into
the data-qubit measurement frame, so the configured distribution IS the
per-block locally averaged channel.  In gate-level mode depolarizing errors
follow each gate layer; the matching locally averaged truth is the support
distribution of one block's accumulated error with every support site
thinned to a flip indicator at rate 2/3 (a uniformly random Pauli on a site
flips that site's Z measurement with probability 2/3).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dist import MAX_SITES, ProbDist, SiteCountError
from .pauli import CLIFFORD_XZ_ACTION
from .protocol import ShotRecord, derive_rng, generate_sequence, sequence_operations
from .surface import stabilizer_prep_round

# probability a uniformly averaged single-site Pauli flips a Z measurement
SITE_FLIP_RATE = 2.0 / 3.0

_MODES = ("effective", "gate_level")


def _rate_array(value, n, name):
    arr = np.full(n, float(value)) if np.isscalar(value) else np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must be a scalar or length-{n} list")
    if (arr < 0).any() or (arr > 1).any():
        raise ValueError(f"{name} rates must lie in [0, 1]")
    return arr


def _pair_list(entries, name):
    out = []
    for a, b, rate in entries:
        if a == b:
            raise ValueError(f"{name} pair must touch two distinct qubits")
        if not 0 <= rate <= 1:
            raise ValueError(f"{name} rate must lie in [0, 1]")
        out.append((int(a), int(b), float(rate)))
    return tuple(out)


@dataclass(frozen=True)
class NoiseConfig:
    mode: str
    effective_dist: ProbDist | None = None
    pauli_policy: tuple = (1 / 3, 1 / 3, 1 / 3)  # X, Y, Z weights per flagged site
    rate_1q: float | tuple = 0.0
    rate_2q: float = 0.0
    pair_rates: tuple = ()  # (qubit, qubit, rate) overrides for couplers
    crosstalk: tuple = ()  # (qubit, qubit, rate) joint errors after CX layers
    prep_flip: float | tuple = 0.0
    meas_flip: float | tuple = 0.0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.mode == "effective" and self.effective_dist is None:
            raise ValueError("effective mode needs a distribution")
        policy = tuple(float(w) for w in self.pauli_policy)
        if len(policy) != 3 or any(w < 0 for w in policy) or abs(sum(policy) - 1) > 1e-9:
            raise ValueError("pauli policy must be three nonnegative weights summing to 1")
        object.__setattr__(self, "pauli_policy", policy)
        object.__setattr__(self, "pair_rates", _pair_list(self.pair_rates, "coupler"))
        object.__setattr__(self, "crosstalk", _pair_list(self.crosstalk, "crosstalk"))
        if not 0 <= float(self.rate_2q) <= 1:
            raise ValueError("two-qubit rate must lie in [0, 1]")

    @classmethod
    def effective(cls, dist, pauli_policy=(1 / 3, 1 / 3, 1 / 3), prep_flip=0.0, meas_flip=0.0):
        return cls(
            mode="effective",
            effective_dist=dist,
            pauli_policy=pauli_policy,
            prep_flip=prep_flip,
            meas_flip=meas_flip,
        )

    @classmethod
    def gate_level(cls, rate_1q=0.0, rate_2q=0.0, pair_rates=(), crosstalk=(), prep_flip=0.0, meas_flip=0.0):
        return cls(
            mode="gate_level",
            rate_1q=rate_1q,
            rate_2q=rate_2q,
            pair_rates=pair_rates,
            crosstalk=crosstalk,
            prep_flip=prep_flip,
            meas_flip=meas_flip,
        )

    def to_json(self):
        payload = {
            "mode": self.mode,
            "spam": {
                "prep": self.prep_flip if np.isscalar(self.prep_flip) else list(self.prep_flip),
                "meas": self.meas_flip if np.isscalar(self.meas_flip) else list(self.meas_flip),
            },
        }
        if self.mode == "effective":
            payload["effective"] = {
                "dist": json.loads(self.effective_dist.to_json()),
                "policy": list(self.pauli_policy),
            }
        else:
            payload["gate_level"] = {
                "rate_1q": self.rate_1q if np.isscalar(self.rate_1q) else list(self.rate_1q),
                "rate_2q": self.rate_2q,
                "pair_rates": [list(p) for p in self.pair_rates],
                "crosstalk": [list(p) for p in self.crosstalk],
            }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        mode = payload["mode"]
        spam = payload.get("spam", {})
        prep = spam.get("prep", 0.0)
        meas = spam.get("meas", 0.0)
        prep = prep if np.isscalar(prep) else tuple(prep)
        meas = meas if np.isscalar(meas) else tuple(meas)
        if mode == "effective":
            eff = payload["effective"]
            if "dist" in eff:
                dist = ProbDist.from_json(json.dumps(eff["dist"]))
            elif "model" in eff:
                from .models import model_dist, model_from_json  # lazy: optional dependency direction

                dist = model_dist(model_from_json(json.dumps(eff["model"])))
            else:
                raise ValueError("effective noise needs a dist or model entry")
            return cls.effective(
                dist,
                pauli_policy=tuple(eff.get("policy", (1 / 3, 1 / 3, 1 / 3))),
                prep_flip=prep,
                meas_flip=meas,
            )
        gl = payload.get("gate_level", {})
        rate_1q = gl.get("rate_1q", 0.0)
        return cls.gate_level(
            rate_1q=rate_1q if np.isscalar(rate_1q) else tuple(rate_1q),
            rate_2q=gl.get("rate_2q", 0.0),
            pair_rates=tuple(tuple(p) for p in gl.get("pair_rates", ())),
            crosstalk=tuple(tuple(p) for p in gl.get("crosstalk", ())),
            prep_flip=prep,
            meas_flip=meas,
        )


@dataclass(frozen=True)
class GroundTruth:
    dist: ProbDist
    provenance: str  # "exact" or "monte_carlo"
    samples: int | None = None


class ShotFrame:
    """Per-shot Pauli frame: x[s, q], z[s, q] bitplanes, signs dropped."""

    def __init__(self, shots, n):
        self.n = n
        self.x = np.zeros((shots, n), dtype=np.uint8)
        self.z = np.zeros((shots, n), dtype=np.uint8)

    def h_layer(self, qubits):
        qs = list(qubits)
        self.x[:, qs], self.z[:, qs] = self.z[:, qs].copy(), self.x[:, qs].copy()

    def cx_layer(self, pairs):
        for c, t in pairs:
            self.x[:, t] ^= self.x[:, c]
            self.z[:, c] ^= self.z[:, t]

    def clifford_layer(self, indices):
        for q, idx in enumerate(indices):
            if idx == 0:
                continue
            code = self.x[:, q] + 2 * self.z[:, q]
            mapped = CLIFFORD_XZ_ACTION[idx][code]
            self.x[:, q] = mapped & 1
            self.z[:, q] = mapped >> 1

    def apply_round(self, rnd):
        for layer in rnd.layers:
            if layer.kind == "h":
                self.h_layer(layer.gates)
            else:
                self.cx_layer(layer.gates)


def pack_words(bits):
    """(shots, n) 0/1 array -> uint64 words, bit q = site q."""
    shots, n = bits.shape
    if n > 64:
        raise ValueError("words wider than 64 bits are not supported")
    weights = (np.uint64(1) << np.arange(n, dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


def sample_words(dist, shots, rng):
    """Inverse-CDF draw of indicator words from a ProbDist."""
    cum = np.cumsum(dist.values)
    idx = np.searchsorted(cum, rng.random(shots), side="right")
    return np.minimum(idx, len(dist.values) - 1).astype(np.uint64)


def _flip_bits(rate, shots, n, rng):
    arr = _rate_array(rate, n, "flip")
    if not arr.any():
        return np.zeros((shots, n), dtype=np.uint8)
    return (rng.random((shots, n)) < arr).astype(np.uint8)


def _inject_1q(frame, qubits, rates, rng):
    qs = list(qubits)
    sub = rates[qs]
    if not sub.any():
        return
    hit = rng.random((frame.x.shape[0], len(qs))) < sub
    letter = rng.integers(1, 4, size=hit.shape, dtype=np.uint8) * hit
    frame.x[:, qs] ^= letter & 1
    frame.z[:, qs] ^= letter >> 1


def _inject_pair(frame, a, b, rate, rng):
    if rate <= 0:
        return
    shots = frame.x.shape[0]
    hit = rng.random(shots) < rate
    code = rng.integers(1, 16, size=shots, dtype=np.uint8) * hit
    frame.x[:, a] ^= code & 1
    frame.z[:, a] ^= (code >> 1) & 1
    frame.x[:, b] ^= (code >> 2) & 1
    frame.z[:, b] ^= (code >> 3) & 1


class _GateLevelRates:
    def __init__(self, noise, n):
        self.rate_1q = _rate_array(noise.rate_1q, n, "single-qubit")
        self.pair_rates = {}
        for a, b, rate in noise.pair_rates:
            self.pair_rates[(min(a, b), max(a, b))] = rate
        self.default_2q = float(noise.rate_2q)
        self.crosstalk = noise.crosstalk

    def coupler(self, c, t):
        return self.pair_rates.get((min(c, t), max(c, t)), self.default_2q)


def _noisy_round(frame, rnd, rates, rng):
    for layer in rnd.layers:
        if layer.kind == "h":
            frame.h_layer(layer.gates)
            _inject_1q(frame, layer.gates, rates.rate_1q, rng)
        else:
            frame.cx_layer(layer.gates)
            for c, t in layer.gates:
                _inject_pair(frame, c, t, rates.coupler(c, t), rng)
            for a, b, rate in rates.crosstalk:
                _inject_pair(frame, a, b, rate, rng)


def _run_block_noise(frame, rnd, rates, rng):
    """One [Clifford noise, round, round] block of gate-level injections."""
    _inject_1q(frame, range(frame.n), rates.rate_1q, rng)
    _noisy_round(frame, rnd, rates, rng)
    _noisy_round(frame, rnd, rates, rng)


def run_sequence(spec, layout, noise, shots, rng, rnd=None, sequence_id=0, sampler=None):
    """Execute one sequence; returns error-indicator words over data qubits.

    Draw order is fixed: prep flips, then the circuit's own noise in op
    order (effective mode: one word per block), then measurement flips.
    """
    if spec.n_qubits != layout.n_qubits:
        raise ValueError("spec and layout disagree on qubit count")
    if rnd is None:
        rnd = stabilizer_prep_round(layout)
    n, nd = spec.n_qubits, layout.n_data
    if noise.mode == "effective" and noise.effective_dist.n != nd:
        raise ValueError("effective distribution width must match data-qubit count")

    prep = _flip_bits(noise.prep_flip, shots, n, rng)

    if noise.mode == "effective":
        indicator = np.zeros(shots, dtype=np.uint64)
        cum = np.cumsum(noise.effective_dist.values) if sampler is None else sampler
        for _ in range(spec.m):
            idx = np.searchsorted(cum, rng.random(shots), side="right")
            indicator ^= np.minimum(idx, len(cum) - 1).astype(np.uint64)
        if prep.any():
            frame = ShotFrame(shots, n)
            frame.x ^= prep
            for op in sequence_operations(spec, include_inversion=True):
                if op[0] == "clifford":
                    frame.clifford_layer(op[1])
                elif op[0] == "round":
                    frame.apply_round(rnd)
            indicator ^= pack_words(frame.x[:, :nd])
    else:
        rates = _GateLevelRates(noise, n)
        frame = ShotFrame(shots, n)
        frame.x ^= prep
        for op in sequence_operations(spec, include_inversion=True):
            if op[0] == "clifford":
                frame.clifford_layer(op[1])
                _inject_1q(frame, range(n), rates.rate_1q, rng)
            elif op[0] == "pauli":
                continue  # virtual layer: absorbed into the next Clifford draw
            else:
                _noisy_round(frame, rnd, rates, rng)
        indicator = pack_words(frame.x[:, :nd])

    meas = _flip_bits(noise.meas_flip, shots, nd, rng)
    if meas.any():
        indicator ^= pack_words(meas)
    return ShotRecord(sequence_id=sequence_id, m=spec.m, n_sites=nd, words=indicator)


def effective_truth(noise, layout, oracle_shots=200_000, rng=None, rnd=None):
    """Per-block locally averaged indicator distribution on the data qubits.

    Effective mode echoes the configured distribution exactly.  Gate-level
    mode samples one block's accumulated error frame and thins each data
    support site to a flip indicator at rate 2/3, which is the distribution
    the sequence estimator converges to.
    """
    if noise.mode == "effective":
        return GroundTruth(dist=noise.effective_dist, provenance="exact")
    if layout.n_data > MAX_SITES:
        raise SiteCountError(f"cannot tabulate truth beyond {MAX_SITES} data sites")
    if rng is None:
        rng = derive_rng(0, 0xE0)
    if rnd is None:
        rnd = stabilizer_prep_round(layout)
    rates = _GateLevelRates(noise, layout.n_qubits)
    frame = ShotFrame(oracle_shots, layout.n_qubits)
    _run_block_noise(frame, rnd, rates, rng)
    support = (frame.x[:, : layout.n_data] | frame.z[:, : layout.n_data]).astype(np.uint8)
    flips = support & (rng.random(support.shape) < SITE_FLIP_RATE)
    words = pack_words(flips)
    counts = np.bincount(words.astype(np.int64), minlength=1 << layout.n_data)
    return GroundTruth(
        dist=ProbDist(layout.n_data, counts / oracle_shots),
        provenance="monte_carlo",
        samples=oracle_shots,
    )


def simulate_plan(plan, layout, noise, rnd=None, threads=1):
    """All sequences of a plan; derived RNG streams make the result
    independent of execution order and worker count."""
    if rnd is None:
        rnd = stabilizer_prep_round(layout)
    sampler = (
        np.cumsum(noise.effective_dist.values) if noise.mode == "effective" else None
    )

    def one(task):
        sid, m, j = task
        seq_rng = derive_rng(plan.master_seed, m, j, 0)
        noise_rng = derive_rng(plan.master_seed, m, j, 1)
        spec = generate_sequence(layout, m, seq_rng, rnd=rnd)
        return run_sequence(
            spec,
            layout,
            noise,
            plan.shots,
            noise_rng,
            rnd=rnd,
            sequence_id=sid,
            sampler=sampler,
        )

    tasks = []
    sid = 0
    for m in plan.m_grid:
        for j in range(plan.sequences_per_m):
            tasks.append((sid, m, j))
            sid += 1
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, tasks))
    else:
        records = [one(t) for t in tasks]
    records.sort(key=lambda r: r.sequence_id)
    return records
