"""Rotated surface-code layout, scheduled preparation round, and code algebra.

Data qubits sit on the vertices of a rows x cols grid, site (r, c) at flat
index r*cols + c.  Stabilizer faces are indexed by their north-west corner
(fr, fc); the face kind checkerboards as X iff (fr + fc) is even.  Interior
faces are all kept, top/bottom boundary rows keep only X faces, left/right
columns keep only Z faces, which yields rows*cols - 1 ancillas and a single
logical qubit.  Ancilla a occupies device qubit n_data + a.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .pauli import PauliOp, StabilizerState

# Face-corner offsets in canonical order NW, NE, SW, SE.
_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))

# Time step (1-4) assigned to each corner, as (NW, NE, SW, SE), one
# permutation for X ancillas and one for Z ancillas.  Chosen from the 96
# collision-free pairs as one that makes two consecutive rounds act as the
# identity on every supported layout (see verify_two_round_identity).
DEFAULT_SCHEDULE = ((1, 2, 3, 4), (1, 3, 2, 4))


@dataclass(frozen=True)
class Ancilla:
    """One stabilizer face: coord is the NW face corner (fr, fc)."""

    coord: tuple
    kind: str
    neighbors: tuple  # data-site flat indices, corner order NW, NE, SW, SE
    schedule: tuple  # CX time step for each entry of neighbors


@dataclass(frozen=True)
class CodeLayout:
    rows: int
    cols: int
    data_sites: tuple
    ancillas: tuple
    device_map: dict | None = None

    @property
    def n_data(self):
        return len(self.data_sites)

    @property
    def n_ancilla(self):
        return len(self.ancillas)

    @property
    def n_qubits(self):
        return self.n_data + self.n_ancilla

    def data_index(self, r, c):
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ValueError(f"site ({r}, {c}) outside grid")
        return r * self.cols + c

    def ancilla_qubit(self, a):
        return self.n_data + a

    def stabilizer(self, a):
        """Generator a as a PauliOp over the data qubits only."""
        anc = self.ancillas[a]
        mask = 0
        for d in anc.neighbors:
            mask |= 1 << d
        if anc.kind == "X":
            return PauliOp(self.n_data, mask, 0, 0)
        return PauliOp(self.n_data, 0, mask, 0)

    def stabilizer_generators(self):
        return [self.stabilizer(a) for a in range(self.n_ancilla)]

    def logical_x(self):
        """Vertical X chain down column 0, boundary to boundary."""
        mask = 0
        for r in range(self.rows):
            mask |= 1 << self.data_index(r, 0)
        return PauliOp(self.n_data, mask, 0, 0)

    def logical_z(self):
        """Horizontal Z chain along row 0, boundary to boundary."""
        mask = 0
        for c in range(self.cols):
            mask |= 1 << self.data_index(0, c)
        return PauliOp(self.n_data, 0, mask, 0)

    def to_json(self):
        payload = {
            "rows": self.rows,
            "cols": self.cols,
            "ancillas": [
                {
                    "coord": list(a.coord),
                    "kind": a.kind,
                    "neighbors": list(a.neighbors),
                    "schedule": list(a.schedule),
                }
                for a in self.ancillas
            ],
            "device_map": (
                None
                if self.device_map is None
                else {str(k): v for k, v in self.device_map.items()}
            ),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        rows, cols = payload["rows"], payload["cols"]
        n_data = rows * cols
        ancillas = []
        for rec in payload["ancillas"]:
            neighbors = tuple(int(d) for d in rec["neighbors"])
            if any(not 0 <= d < n_data for d in neighbors):
                raise ValueError("ancilla neighbor outside data grid")
            ancillas.append(
                Ancilla(
                    coord=tuple(rec["coord"]),
                    kind=str(rec["kind"]),
                    neighbors=neighbors,
                    schedule=tuple(int(s) for s in rec["schedule"]),
                )
            )
        device_map = payload.get("device_map")
        if device_map is not None:
            device_map = {int(k): v for k, v in device_map.items()}
        return cls(
            rows=rows,
            cols=cols,
            data_sites=tuple((r, c) for r in range(rows) for c in range(cols)),
            ancillas=tuple(ancillas),
            device_map=device_map,
        )


@dataclass(frozen=True)
class GateLayer:
    """kind 'h' with a qubit tuple, or 'cx' with (control, target) pairs."""

    kind: str
    gates: tuple

    def qubits(self):
        if self.kind == "h":
            return list(self.gates)
        out = []
        for c, t in self.gates:
            out.append(c)
            out.append(t)
        return out


@dataclass(frozen=True)
class CircuitRound:
    n_qubits: int
    layers: tuple
    schedule: tuple  # per-ancilla step tuples, aligned with layout.ancillas

    def __post_init__(self):
        for layer in self.layers:
            qs = layer.qubits()
            if len(qs) != len(set(qs)):
                raise ValueError("qubit used twice in one gate layer")
            if any(not 0 <= q < self.n_qubits for q in qs):
                raise ValueError("gate qubit outside device")


def build_layout(rows=4, cols=5, device_map=None, schedule=DEFAULT_SCHEDULE):
    """Construct the rotated surface-code layout for a rows x cols data grid.

    schedule is the (X-ancilla, Z-ancilla) pair of corner-step permutations;
    the default is the shipped collision-free order.
    """
    if rows < 2 or cols < 2:
        raise ValueError("grid dimensions must be at least 2x2")
    sched_x, sched_z = schedule
    data_sites = tuple((r, c) for r in range(rows) for c in range(cols))
    ancillas = []
    for fr in range(-1, rows):
        for fc in range(-1, cols):
            kind = "X" if (fr + fc) % 2 == 0 else "Z"
            interior = 0 <= fr < rows - 1 and 0 <= fc < cols - 1
            if not interior:
                top_bottom = fr in (-1, rows - 1) and 0 <= fc < cols - 1
                left_right = fc in (-1, cols - 1) and 0 <= fr < rows - 1
                if top_bottom:
                    keep = kind == "X"
                elif left_right:
                    keep = kind == "Z"
                else:
                    keep = False  # corner faces are never stabilizers
                if not keep:
                    continue
            steps = sched_x if kind == "X" else sched_z
            neighbors = []
            anc_steps = []
            for (dr, dc), step in zip(_CORNERS, steps):
                r, c = fr + dr, fc + dc
                if 0 <= r < rows and 0 <= c < cols:
                    neighbors.append(r * cols + c)
                    anc_steps.append(step)
            ancillas.append(
                Ancilla(
                    coord=(fr, fc),
                    kind=kind,
                    neighbors=tuple(neighbors),
                    schedule=tuple(anc_steps),
                )
            )
    return CodeLayout(
        rows=rows,
        cols=cols,
        data_sites=data_sites,
        ancillas=tuple(ancillas),
        device_map=device_map,
    )


def _build_round(layout):
    n_data = layout.n_data
    h_qubits = tuple(
        layout.ancilla_qubit(a)
        for a, anc in enumerate(layout.ancillas)
        if anc.kind == "X"
    )
    cx_layers = {step: [] for step in (1, 2, 3, 4)}
    for a, anc in enumerate(layout.ancillas):
        anc_q = layout.ancilla_qubit(a)
        for d, step in zip(anc.neighbors, anc.schedule):
            if anc.kind == "X":
                cx_layers[step].append((anc_q, d))  # ancilla controls data
            else:
                cx_layers[step].append((d, anc_q))  # data controls ancilla
    layers = [GateLayer("h", h_qubits)]
    for step in (1, 2, 3, 4):
        layers.append(GateLayer("cx", tuple(cx_layers[step])))
    layers.append(GateLayer("h", h_qubits))
    return CircuitRound(
        n_qubits=layout.n_qubits,
        layers=tuple(layers),
        schedule=tuple(anc.schedule for anc in layout.ancillas),
    )


def stabilizer_prep_round(layout):
    """The scheduled preparation round; two copies must act as the identity."""
    rnd = _build_round(layout)
    if not verify_two_round_identity(layout, rnd):
        raise AssertionError("schedule fails the two-round identity check")
    return rnd


def apply_round(frame, rnd):
    """Apply a CircuitRound's gate layers to a StabilizerState-like frame."""
    for layer in rnd.layers:
        if layer.kind == "h":
            for q in layer.gates:
                frame.h(q)
        elif layer.kind == "cx":
            for c, t in layer.gates:
                frame.cx(c, t)
        else:
            raise ValueError(f"unknown gate layer kind {layer.kind!r}")
    return frame


def verify_two_round_identity(layout, rnd):
    """True iff two rounds conjugate every data X_k, Z_k and ancilla Z_a to
    itself with a plus sign (ancilla X images are unconstrained: the net
    operation only has to preserve the |0...0> ancilla stabilizers)."""
    n = layout.n_qubits
    frame = StabilizerState.pauli_basis_frame(n)
    apply_round(frame, rnd)
    apply_round(frame, rnd)
    eye = np.eye(n, dtype=np.uint8)
    zero = np.zeros((n, n), dtype=np.uint8)
    nd = layout.n_data
    x_rows_ok = (
        np.array_equal(frame.x[:nd], eye[:nd])
        and np.array_equal(frame.z[:nd], zero[:nd])
        and not frame.phase[:nd].any()
    )
    z_rows_ok = (
        np.array_equal(frame.x[n:], zero)
        and np.array_equal(frame.z[n:], eye)
        and not frame.phase[n:].any()
    )
    return bool(x_rows_ok and z_rows_ok)


def _conflict_free_pairs():
    """All (X, Z) corner-step pairs in which no data qubit sees two CX gates
    in the same layer.  A data qubit's NW and SE faces share one kind and its
    NE and SW faces the other, so the four steps touching it must exhaust
    {1, 2, 3, 4} for both kind assignments."""
    full = {1, 2, 3, 4}
    pairs = []
    for sx in permutations((1, 2, 3, 4)):
        for sz in permutations((1, 2, 3, 4)):
            if {sx[0], sx[3], sz[1], sz[2]} != full:
                continue
            if {sz[0], sz[3], sx[1], sx[2]} != full:
                continue
            pairs.append((sx, sz))
    return pairs


def syndrome(layout, error):
    """Syndrome word: bit a = 1 iff error anticommutes with generator a."""
    if error.n != layout.n_data:
        raise ValueError("error must be supported on the data qubits")
    word = 0
    for a in range(layout.n_ancilla):
        if not error.commutes(layout.stabilizer(a)):
            word |= 1 << a
    return word


def logical_class(layout, error):
    """Coset label in {I, X, Y, Z} for a zero-syndrome data error."""
    if syndrome(layout, error) != 0:
        raise ValueError("error has a nonzero syndrome")
    anti_z = not error.commutes(layout.logical_z())  # logical X component
    anti_x = not error.commutes(layout.logical_x())  # logical Z component
    return {
        (False, False): "I",
        (True, False): "X",
        (True, True): "Y",
        (False, True): "Z",
    }[(anti_z, anti_x)]
