"""Randomized sequence construction over the preparation round.

A sequence interleaves random single-qubit layers with stabilizer-prep
rounds: each block is [Clifford layer, round, Pauli layer, round], repeated
m times, followed by a computed single-qubit inversion layer that returns
every qubit to its target computational state.  m = 0 keeps the lone
Clifford layer and its inversion.  Because two rounds compose to the
identity on the code and Pauli layers only flip stabilizer signs, the ideal
pre-inversion state is always a product of single-qubit stabilizer states;
compute_inversion checks that instead of assuming it.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .pauli import (
    CLIFFORD_1Q,
    NonProductStateError,
    PauliOp,
    StabilizerState,
    stabilizer_fix,
)
from .surface import apply_round, stabilizer_prep_round

PAULI_LETTERS = "IXYZ"

_MAGIC = b"LACE"
_FORMAT_VERSION = 1


class ProtocolStructureError(RuntimeError):
    """The ideal pre-inversion state was not a single-qubit product state."""


def derive_rng(master_seed, *path):
    """Independent generator for (master_seed, *path); order-insensitive
    across distinct paths, so sequences can be produced in any order."""
    return np.random.default_rng(np.random.SeedSequence((int(master_seed),) + tuple(int(p) for p in path)))


@dataclass(frozen=True)
class SequenceSpec:
    m: int
    n_qubits: int
    targets: tuple  # per-qubit target bit; ancillas always 0
    clifford_layers: tuple  # per layer, per qubit: index into CLIFFORD_1Q
    pauli_layers: tuple  # per block, a string of IXYZ letters, qubit 0 first
    inversion: tuple | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("block count must be nonnegative")
        if len(self.clifford_layers) != max(self.m, 1):
            raise ValueError("need one Clifford layer per block (one for m=0)")
        if len(self.pauli_layers) != self.m:
            raise ValueError("need one Pauli layer per block")
        if len(self.targets) != self.n_qubits or any(t not in (0, 1) for t in self.targets):
            raise ValueError("targets must be one bit per qubit")
        for layer in self.clifford_layers + ((self.inversion,) if self.inversion else ()):
            if len(layer) != self.n_qubits:
                raise ValueError("Clifford layer length mismatch")
            if any(not 0 <= idx < len(CLIFFORD_1Q) for idx in layer):
                raise ValueError("Clifford index out of range")
        for layer in self.pauli_layers:
            if len(layer) != self.n_qubits or any(ch not in PAULI_LETTERS for ch in layer):
                raise ValueError("Pauli layer must be IXYZ letters per qubit")

    @property
    def initial_cliffords(self):
        return self.clifford_layers[0]

    def target_word(self):
        word = 0
        for q, t in enumerate(self.targets):
            word |= t << q
        return word

    def to_json(self):
        return json.dumps(
            {
                "m": self.m,
                "n_qubits": self.n_qubits,
                "targets": list(self.targets),
                "clifford_layers": [list(l) for l in self.clifford_layers],
                "pauli_layers": list(self.pauli_layers),
                "inversion": None if self.inversion is None else list(self.inversion),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            m=d["m"],
            n_qubits=d["n_qubits"],
            targets=tuple(d["targets"]),
            clifford_layers=tuple(tuple(l) for l in d["clifford_layers"]),
            pauli_layers=tuple(d["pauli_layers"]),
            inversion=None if d["inversion"] is None else tuple(d["inversion"]),
        )


def sequence_operations(spec, include_inversion=True):
    """Flat tagged op list: ('clifford', idx_tuple) | ('round',) | ('pauli', letters)."""
    ops = []
    if spec.m == 0:
        ops.append(("clifford", spec.clifford_layers[0]))
    else:
        for k in range(spec.m):
            ops.append(("clifford", spec.clifford_layers[k]))
            ops.append(("round",))
            ops.append(("pauli", spec.pauli_layers[k]))
            ops.append(("round",))
    if include_inversion:
        if spec.inversion is None:
            raise ValueError("spec has no inversion layer")
        ops.append(("clifford", spec.inversion))
    return ops


def apply_operations(state, ops, rnd):
    """Replay tagged ops on a StabilizerState; 'pauli_op' takes a PauliOp."""
    for op in ops:
        tag = op[0]
        if tag == "clifford":
            state.clifford_layer(op[1])
        elif tag == "round":
            apply_round(state, rnd)
        elif tag == "pauli":
            state.pauli(PauliOp.from_letters(op[1]))
        elif tag == "pauli_op":
            state.pauli(op[1])
        else:
            raise ValueError(f"unknown op tag {tag!r}")
    return state


def compute_inversion(layout, spec, rnd=None):
    """Per-qubit Clifford indices returning the ideal state to the targets.

    Simulates the sequence body from |0...0>, reduces to one single-qubit
    stabilizer per qubit, and picks the table Clifford sending each to the
    (-1)**target Z eigenstate.  Raises ProtocolStructureError if the ideal
    state is entangled (broken round or block structure).
    """
    if rnd is None:
        rnd = stabilizer_prep_round(layout)
    state = StabilizerState(spec.n_qubits)
    apply_operations(state, sequence_operations(spec, include_inversion=False), rnd)
    try:
        stabilizers = state.reduce_to_product()
    except NonProductStateError as exc:
        raise ProtocolStructureError(
            "ideal pre-inversion state is entangled; sequence structure is broken"
        ) from exc
    return tuple(
        stabilizer_fix(stabilizers[q], spec.targets[q]) for q in range(spec.n_qubits)
    )


def generate_sequence(layout, m, rng, rnd=None):
    """Draw a random sequence: uniform targets on data qubits (ancillas 0),
    uniform table Cliffords and IXYZ Paulis on every qubit, inversion solved
    from the ideal tableau.  Draw order is fixed: targets, then per block the
    Clifford layer then the Pauli layer, qubit 0 first."""
    if m < 0:
        raise ValueError("block count must be nonnegative")
    n = layout.n_qubits
    targets = tuple(int(b) for b in rng.integers(2, size=layout.n_data)) + (0,) * layout.n_ancilla
    cliffords = []
    paulis = []
    for _ in range(max(m, 1)):
        cliffords.append(tuple(int(i) for i in rng.integers(len(CLIFFORD_1Q), size=n)))
        if m > 0:
            paulis.append("".join(PAULI_LETTERS[i] for i in rng.integers(4, size=n)))
    spec = SequenceSpec(
        m=m,
        n_qubits=n,
        targets=targets,
        clifford_layers=tuple(cliffords),
        pauli_layers=tuple(paulis),
    )
    return replace(spec, inversion=compute_inversion(layout, spec, rnd=rnd))


def ideal_final_word(layout, spec, rnd=None):
    """Measurement word of the noiseless full circuit (must equal targets)."""
    if rnd is None:
        rnd = stabilizer_prep_round(layout)
    state = StabilizerState(spec.n_qubits)
    apply_operations(state, sequence_operations(spec, include_inversion=True), rnd)
    stabilizers = state.reduce_to_product()
    word = 0
    for q, stab in enumerate(stabilizers):
        if stab.x != 0:
            raise ProtocolStructureError(f"qubit {q} not in a computational state")
        word |= (1 if stab.phase == 2 else 0) << q
    return word


@dataclass(frozen=True)
class ExperimentPlan:
    m_grid: tuple
    sequences_per_m: int
    shots: int
    master_seed: int

    def __post_init__(self):
        if not self.m_grid:
            raise ValueError("m grid must be non-empty")
        grid = tuple(self.m_grid)
        if list(grid) != sorted(set(grid)) or grid[0] != 0:
            raise ValueError("m grid must be sorted, unique, and contain 0")
        if self.sequences_per_m <= 0 or self.shots <= 0:
            raise ValueError("sequence and shot counts must be positive")

    @property
    def total_sequences(self):
        return len(self.m_grid) * self.sequences_per_m

    def to_json(self):
        return json.dumps(
            {
                "m_grid": list(self.m_grid),
                "sequences_per_m": self.sequences_per_m,
                "shots": self.shots,
                "master_seed": self.master_seed,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            m_grid=tuple(d["m_grid"]),
            sequences_per_m=d["sequences_per_m"],
            shots=d["shots"],
            master_seed=d["master_seed"],
        )


def plan_experiment(m_grid, sequences_per_m, shots, master_seed):
    return ExperimentPlan(
        m_grid=tuple(m_grid),
        sequences_per_m=int(sequences_per_m),
        shots=int(shots),
        master_seed=int(master_seed),
    )


def paper_scale_plan(master_seed=0):
    """253 sequences per block count over m = 0..8 (1771 total), 2000 shots."""
    return plan_experiment((0, 1, 2, 3, 4, 6, 8), 253, 2000, master_seed)


def desk_scale_plan(master_seed=0):
    """Light default: 30 sequences per block count, 2000 shots."""
    return plan_experiment((0, 1, 2, 3, 4, 6, 8), 30, 2000, master_seed)


@dataclass(frozen=True, eq=False)
class ShotRecord:
    """Per-shot error-indicator words over the data qubits (bit = mismatch)."""

    sequence_id: int
    m: int
    n_sites: int
    words: np.ndarray  # uint64, one word per shot

    def __post_init__(self):
        if not 0 < self.n_sites <= 64:
            raise ValueError("word width must be 1..64 bits")
        words = np.asarray(self.words, dtype=np.uint64)
        if words.ndim != 1:
            raise ValueError("words must be a flat array")
        if self.n_sites < 64 and (words >> np.uint64(self.n_sites)).any():
            raise ValueError("word exceeds site count")
        object.__setattr__(self, "words", words)

    @property
    def shots(self):
        return len(self.words)

    def __eq__(self, other):
        if not isinstance(other, ShotRecord):
            return NotImplemented
        return (
            self.sequence_id == other.sequence_id
            and self.m == other.m
            and self.n_sites == other.n_sites
            and np.array_equal(self.words, other.words)
        )


def _word_bytes(n_sites):
    return (n_sites + 7) // 8


def shot_records_to_bytes(records):
    records = list(records)
    if not records:
        raise ValueError("no records to serialize")
    n_sites = records[0].n_sites
    shots = records[0].shots
    for rec in records:
        if rec.n_sites != n_sites or rec.shots != shots:
            raise ValueError("records must share word width and shot count")
    width = _word_bytes(n_sites)
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<IIII", _FORMAT_VERSION, n_sites, shots, len(records)))
    for rec in records:
        out.write(struct.pack("<II", rec.sequence_id, rec.m))
        packed = rec.words.astype("<u8").view(np.uint8).reshape(shots, 8)[:, :width]
        out.write(packed.tobytes())
    return out.getvalue()


def shot_records_from_bytes(data):
    if data[:4] != _MAGIC:
        raise ValueError("bad magic; not a shot-record file")
    version, n_sites, shots, n_records = struct.unpack_from("<IIII", data, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    width = _word_bytes(n_sites)
    offset = 20
    records = []
    for _ in range(n_records):
        if len(data) < offset + 8 + shots * width:
            raise ValueError("truncated shot-record file")
        sequence_id, m = struct.unpack_from("<II", data, offset)
        offset += 8
        raw = np.frombuffer(data, dtype=np.uint8, count=shots * width, offset=offset)
        offset += shots * width
        full = np.zeros((shots, 8), dtype=np.uint8)
        full[:, :width] = raw.reshape(shots, width)
        words = full.reshape(-1).view("<u8").astype(np.uint64)
        records.append(ShotRecord(sequence_id=sequence_id, m=m, n_sites=n_sites, words=words))
    if offset != len(data):
        raise ValueError("trailing bytes in shot-record file")
    return records


def write_shot_records(path, records):
    with open(path, "wb") as fh:
        fh.write(shot_records_to_bytes(records))


def read_shot_records(path):
    with open(path, "rb") as fh:
        return shot_records_from_bytes(fh.read())


def shot_records_to_csv(records):
    records = list(records)
    if not records:
        raise ValueError("no records to serialize")
    n_sites = records[0].n_sites
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["sequence_id", "m"] + [f"q{q}" for q in range(n_sites)])
    for rec in records:
        if rec.n_sites != n_sites:
            raise ValueError("records must share word width")
        for word in rec.words:
            bits = [(int(word) >> q) & 1 for q in range(n_sites)]
            writer.writerow([rec.sequence_id, rec.m] + bits)
    return buf.getvalue()
