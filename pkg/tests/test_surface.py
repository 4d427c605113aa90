"""Layout geometry, schedule, two-round identity, syndromes, logical cosets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lace.pauli import PauliOp, StabilizerState
from lace.surface import (
    CircuitRound,
    CodeLayout,
    GateLayer,
    _conflict_free_pairs,
    apply_round,
    build_layout,
    logical_class,
    stabilizer_prep_round,
    syndrome,
    verify_two_round_identity,
)


def gf2_rank(mat):
    m = mat.copy() % 2
    rank = 0
    for col in range(m.shape[1]):
        rows = np.nonzero(m[rank:, col])[0]
        if rows.size == 0:
            continue
        pivot = rank + rows[0]
        m[[rank, pivot]] = m[[pivot, rank]]
        hits = np.nonzero(m[:, col])[0]
        hits = hits[hits != rank]
        m[hits] ^= m[rank]
        rank += 1
        if rank == m.shape[0]:
            break
    return rank


def generator_matrix(layout):
    # rows = generators, columns = (x bits | z bits) over data qubits
    n = layout.n_data
    rows = []
    for g in layout.stabilizer_generators():
        row = np.zeros(2 * n, dtype=np.uint8)
        for q in range(n):
            row[q] = (g.x >> q) & 1
            row[n + q] = (g.z >> q) & 1
        rows.append(row)
    return np.array(rows, dtype=np.uint8)


def random_stabilizer_element(layout, rng):
    elem = PauliOp.identity(layout.n_data)
    for g in layout.stabilizer_generators():
        if rng.integers(2):
            elem = elem.compose(g)
    return elem


@pytest.mark.parametrize(
    "rows,cols,n_data,n_anc",
    [(4, 5, 20, 19), (3, 3, 9, 8), (2, 2, 4, 3), (5, 5, 25, 24), (2, 6, 12, 11)],
)
def test_layout_counts(rows, cols, n_data, n_anc):
    lay = build_layout(rows, cols)
    assert lay.n_data == n_data
    assert lay.n_ancilla == n_anc
    assert lay.n_qubits == n_data + n_anc


def test_default_layout_is_4x5():
    lay = build_layout()
    assert (lay.rows, lay.cols, lay.n_qubits) == (4, 5, 39)


@pytest.mark.parametrize("rows,cols", [(2, 2), (1, 5), (3, 1)])
def test_small_dimensions_rejected(rows, cols):
    if rows >= 2 and cols >= 2:
        build_layout(rows, cols)
        return
    with pytest.raises(ValueError):
        build_layout(rows, cols)


def test_2x2_weights():
    # hand enumeration: one interior weight-4 X face plus two side Z faces
    lay = build_layout(2, 2)
    weights = sorted(len(a.neighbors) for a in lay.ancillas)
    assert weights == [2, 2, 4]
    kinds = sorted(a.kind for a in lay.ancillas)
    assert kinds == ["X", "Z", "Z"]


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 5), (5, 4), (6, 6)])
def test_face_weights_and_coverage(rows, cols):
    lay = build_layout(rows, cols)
    touched = {d: 0 for d in range(lay.n_data)}
    for anc in lay.ancillas:
        fr, fc = anc.coord
        interior = 0 <= fr < rows - 1 and 0 <= fc < cols - 1
        assert len(anc.neighbors) == (4 if interior else 2)
        assert anc.kind == ("X" if (fr + fc) % 2 == 0 else "Z")
        for d in anc.neighbors:
            touched[d] += 1
    assert min(touched.values()) >= 2


@pytest.mark.parametrize("rows,cols", [(2, 2), (3, 3), (4, 5), (5, 4), (2, 6)])
def test_generators_commute_and_are_independent(rows, cols):
    lay = build_layout(rows, cols)
    gens = lay.stabilizer_generators()
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            assert gens[i].commutes(gens[j])
    assert gf2_rank(generator_matrix(lay)) == lay.n_data - 1


@pytest.mark.parametrize("rows,cols", [(2, 2), (3, 3), (4, 5), (5, 4)])
def test_logical_operator_algebra(rows, cols):
    lay = build_layout(rows, cols)
    lx, lz = lay.logical_x(), lay.logical_z()
    assert lx.weight() == rows and lz.weight() == cols
    assert not lx.commutes(lz)
    for g in lay.stabilizer_generators():
        assert lx.commutes(g)
        assert lz.commutes(g)


def test_round_layer_structure():
    lay = build_layout(4, 5)
    rnd = stabilizer_prep_round(lay)
    kinds = [layer.kind for layer in rnd.layers]
    assert kinds == ["h", "cx", "cx", "cx", "cx", "h"]
    x_anc = tuple(
        lay.ancilla_qubit(a) for a, anc in enumerate(lay.ancillas) if anc.kind == "X"
    )
    assert rnd.layers[0].gates == x_anc
    assert rnd.layers[5].gates == x_anc


def test_round_covers_each_pair_once():
    lay = build_layout(4, 5)
    rnd = stabilizer_prep_round(lay)
    seen = set()
    for layer in rnd.layers[1:5]:
        for c, t in layer.gates:
            pair = (min(c, t), max(c, t))
            assert pair not in seen
            seen.add(pair)
    expected = set()
    for a, anc in enumerate(lay.ancillas):
        q = lay.ancilla_qubit(a)
        for d in anc.neighbors:
            expected.add((min(q, d), max(q, d)))
    assert seen == expected


def test_cx_orientation():
    lay = build_layout(4, 5)
    rnd = stabilizer_prep_round(lay)
    for layer in rnd.layers[1:5]:
        for c, t in layer.gates:
            if c >= lay.n_data:  # ancilla controls -> X face
                assert lay.ancillas[c - lay.n_data].kind == "X"
            else:
                assert lay.ancillas[t - lay.n_data].kind == "Z"


def test_corner_z_ancilla_touches_two_layers():
    lay = build_layout(4, 5)
    rnd = stabilizer_prep_round(lay)
    for a, anc in enumerate(lay.ancillas):
        if len(anc.neighbors) != 2 or anc.kind != "Z":
            continue
        q = lay.ancilla_qubit(a)
        layers_hit = [
            i
            for i, layer in enumerate(rnd.layers[1:5])
            if any(q in (c, t) for c, t in layer.gates)
        ]
        assert len(layers_hit) == 2


def test_layer_rejects_duplicate_qubit():
    with pytest.raises(ValueError):
        CircuitRound(
            n_qubits=4,
            layers=(GateLayer("cx", ((0, 1), (1, 2))),),
            schedule=(),
        )


def test_conflict_free_pair_count():
    assert len(_conflict_free_pairs()) == 96


@pytest.mark.parametrize("rows,cols", [(2, 2), (3, 3), (4, 5), (6, 6)])
def test_two_round_identity(rows, cols):
    lay = build_layout(rows, cols)
    rnd = stabilizer_prep_round(lay)
    assert verify_two_round_identity(lay, rnd)


def test_two_round_identity_detects_missing_gate():
    lay = build_layout(3, 3)
    rnd = stabilizer_prep_round(lay)
    layers = list(rnd.layers)
    layers[2] = GateLayer("cx", layers[2].gates[1:])
    broken = CircuitRound(n_qubits=rnd.n_qubits, layers=tuple(layers), schedule=rnd.schedule)
    assert not verify_two_round_identity(lay, broken)


def test_single_round_is_not_identity():
    lay = build_layout(3, 3)
    rnd = stabilizer_prep_round(lay)
    frame = StabilizerState.pauli_basis_frame(lay.n_qubits)
    apply_round(frame, rnd)
    eye = np.eye(lay.n_qubits, dtype=np.uint8)
    assert not (
        np.array_equal(frame.x[: lay.n_data], eye[: lay.n_data])
        and not frame.z[: lay.n_data].any()
    )


def test_syndrome_identity_error():
    lay = build_layout(4, 5)
    assert syndrome(lay, PauliOp.identity(lay.n_data)) == 0


def test_syndrome_bulk_z_error():
    lay = build_layout(4, 5)
    q = lay.data_index(1, 2)
    word = syndrome(lay, PauliOp.single(lay.n_data, q, "Z"))
    hits = [a for a in range(lay.n_ancilla) if (word >> a) & 1]
    assert len(hits) == 2
    for a in hits:
        assert lay.ancillas[a].kind == "X"
        assert q in lay.ancillas[a].neighbors


def test_syndrome_rejects_wrong_support():
    lay = build_layout(3, 3)
    with pytest.raises(ValueError):
        syndrome(lay, PauliOp.identity(lay.n_qubits))


@given(st.integers(min_value=0, max_value=2**18 - 1), st.integers(min_value=0, max_value=2**18 - 1))
@settings(max_examples=50, deadline=None)
def test_syndrome_gf2_linear(xz1, xz2):
    lay = build_layout(3, 3)
    n = lay.n_data
    mask = (1 << n) - 1
    e1 = PauliOp(n, xz1 & mask, (xz1 >> 9) & mask, 0)
    e2 = PauliOp(n, xz2 & mask, (xz2 >> 9) & mask, 0)
    assert syndrome(lay, e1.compose(e2)) == syndrome(lay, e1) ^ syndrome(lay, e2)


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 5)])
def test_stabilizer_elements_have_zero_syndrome(rows, cols):
    lay = build_layout(rows, cols)
    rng = np.random.default_rng(7)
    for _ in range(40):
        elem = random_stabilizer_element(lay, rng)
        assert syndrome(lay, elem) == 0
        assert logical_class(lay, elem) == "I"


def test_logical_class_cosets():
    lay = build_layout(3, 3)
    rng = np.random.default_rng(11)
    lx, lz = lay.logical_x(), lay.logical_z()
    for _ in range(20):
        stab = random_stabilizer_element(lay, rng)
        assert logical_class(lay, lx.compose(stab)) == "X"
        assert logical_class(lay, lz.compose(stab)) == "Z"
        assert logical_class(lay, lx.compose(lz).compose(stab)) == "Y"


def test_logical_class_rejects_nonzero_syndrome():
    lay = build_layout(3, 3)
    err = PauliOp.single(lay.n_data, lay.data_index(1, 1), "Z")
    with pytest.raises(ValueError):
        logical_class(lay, err)


def test_layout_json_round_trip():
    lay = build_layout(4, 5, device_map={0: "(1,5)", 1: "(2,5)"})
    clone = CodeLayout.from_json(lay.to_json())
    assert clone == lay


def test_layout_json_rejects_bad_neighbor():
    import json

    lay = build_layout(2, 2)
    payload = json.loads(lay.to_json())
    payload["ancillas"][0]["neighbors"][0] = 99
    with pytest.raises(ValueError):
        CodeLayout.from_json(json.dumps(payload))
