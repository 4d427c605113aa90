"""Sequence structure, inversion correctness, plans, and shot-record formats."""

import numpy as np
import pytest

from lace.pauli import CliffordTableau, PauliOp, StabilizerState
from lace.protocol import (
    ExperimentPlan,
    ProtocolStructureError,
    SequenceSpec,
    ShotRecord,
    apply_operations,
    compute_inversion,
    derive_rng,
    desk_scale_plan,
    generate_sequence,
    ideal_final_word,
    paper_scale_plan,
    plan_experiment,
    read_shot_records,
    sequence_operations,
    shot_records_from_bytes,
    shot_records_to_bytes,
    shot_records_to_csv,
    write_shot_records,
)
from lace.surface import build_layout, stabilizer_prep_round


@pytest.fixture(scope="module")
def layout():
    return build_layout(4, 5)


@pytest.fixture(scope="module")
def prep_round(layout):
    return stabilizer_prep_round(layout)


def test_m0_structure(layout, prep_round):
    spec = generate_sequence(layout, 0, derive_rng(3, 0), rnd=prep_round)
    assert spec.m == 0
    assert len(spec.clifford_layers) == 1
    assert spec.pauli_layers == ()
    assert spec.inversion is not None
    assert spec.initial_cliffords == spec.clifford_layers[0]
    ops = sequence_operations(spec)
    assert [op[0] for op in ops] == ["clifford", "clifford"]


def test_m2_structure(layout, prep_round):
    spec = generate_sequence(layout, 2, derive_rng(3, 2), rnd=prep_round)
    assert len(spec.clifford_layers) == 2
    assert len(spec.pauli_layers) == 2
    tags = [op[0] for op in sequence_operations(spec)]
    assert tags == ["clifford", "round", "pauli", "round"] * 2 + ["clifford"]
    assert tags.count("round") == 4


def test_ancilla_targets_zero(layout, prep_round):
    spec = generate_sequence(layout, 1, derive_rng(9, 1), rnd=prep_round)
    assert all(t == 0 for t in spec.targets[layout.n_data :])
    assert any(t == 1 for t in spec.targets[: layout.n_data])  # seed-checked draw


def test_equal_seeds_identical_specs(layout, prep_round):
    a = generate_sequence(layout, 3, derive_rng(11, 3), rnd=prep_round)
    b = generate_sequence(layout, 3, derive_rng(11, 3), rnd=prep_round)
    assert a == b
    assert a.to_json() == b.to_json()


def test_distinct_paths_differ(layout, prep_round):
    a = generate_sequence(layout, 3, derive_rng(11, 3), rnd=prep_round)
    b = generate_sequence(layout, 3, derive_rng(11, 4), rnd=prep_round)
    assert a != b


def test_spec_json_round_trip(layout, prep_round):
    spec = generate_sequence(layout, 2, derive_rng(5, 2), rnd=prep_round)
    assert SequenceSpec.from_json(spec.to_json()) == spec


@pytest.mark.parametrize("m", [0, 1, 2, 3, 8])
def test_ideal_circuit_hits_target(layout, prep_round, m):
    spec = generate_sequence(layout, m, derive_rng(21, m), rnd=prep_round)
    assert ideal_final_word(layout, spec, rnd=prep_round) == spec.target_word()


def test_identity_m0_inverts_to_identity(layout, prep_round):
    n = layout.n_qubits
    spec = SequenceSpec(
        m=0,
        n_qubits=n,
        targets=(0,) * n,
        clifford_layers=((0,) * n,),
        pauli_layers=(),
    )
    inv = compute_inversion(layout, spec, rnd=prep_round)
    assert inv == (0,) * n


def test_round_deletion_breaks_structure(layout, prep_round):
    spec = generate_sequence(layout, 2, derive_rng(7, 2), rnd=prep_round)
    ops = sequence_operations(spec, include_inversion=False)
    first_round = next(i for i, op in enumerate(ops) if op[0] == "round")
    broken = ops[:first_round] + ops[first_round + 1 :]
    state = StabilizerState(spec.n_qubits)
    apply_operations(state, broken, prep_round)
    with pytest.raises(Exception):
        state.reduce_to_product()


def test_pauli_deletion_keeps_product_structure(layout, prep_round):
    # Pauli layers only flip stabilizer signs, so dropping one cannot
    # entangle the ideal state; it just changes which product state remains.
    spec = generate_sequence(layout, 2, derive_rng(7, 2), rnd=prep_round)
    ops = [
        op
        for op in sequence_operations(spec, include_inversion=False)
        if op[0] != "pauli"
    ]
    state = StabilizerState(spec.n_qubits)
    apply_operations(state, ops, prep_round)
    state.reduce_to_product()


def _round_tableau(layout, prep_round):
    tab = CliffordTableau.identity(layout.n_qubits)
    for layer in prep_round.layers:
        if layer.kind == "h":
            for q in layer.gates:
                tab.h(q)
        else:
            for c, t in layer.gates:
                tab.cx(c, t)
    return tab


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_pauli_layer_commutes_through_round(layout, prep_round, seed):
    # replacing [P, round] by [round, R P R^dag] leaves the output invariant
    spec = generate_sequence(layout, 2, derive_rng(31, seed), rnd=prep_round)
    tab = _round_tableau(layout, prep_round)
    ops = sequence_operations(spec, include_inversion=True)
    k = next(i for i, op in enumerate(ops) if op[0] == "pauli")
    conjugated = tab.conjugate(PauliOp.from_letters(ops[k][1]))
    swapped = ops[:k] + [ops[k + 1], ("pauli_op", conjugated)] + ops[k + 2 :]
    state = StabilizerState(spec.n_qubits)
    apply_operations(state, swapped, prep_round)
    word = 0
    for q, stab in enumerate(state.reduce_to_product()):
        assert stab.x == 0
        word |= (1 if stab.phase == 2 else 0) << q
    assert word == spec.target_word()


def test_plan_validation():
    plan = plan_experiment([0, 1, 2], 10, 100, 7)
    assert plan.total_sequences == 30
    with pytest.raises(ValueError):
        plan_experiment([], 10, 100, 7)
    with pytest.raises(ValueError):
        plan_experiment([1, 2], 10, 100, 7)  # must contain 0
    with pytest.raises(ValueError):
        plan_experiment([0, 2, 1], 10, 100, 7)  # sorted
    with pytest.raises(ValueError):
        plan_experiment([0, 1], 0, 100, 7)


def test_plan_m0_only_is_valid():
    plan = plan_experiment([0], 5, 50, 1)
    assert plan.total_sequences == 5


def test_paper_scale_plan():
    plan = paper_scale_plan(3)
    assert plan.m_grid == (0, 1, 2, 3, 4, 6, 8)
    assert plan.shots == 2000
    assert plan.total_sequences == 1771


def test_desk_scale_plan():
    plan = desk_scale_plan()
    assert plan.m_grid == (0, 1, 2, 3, 4, 6, 8)
    assert plan.total_sequences == 210


def test_plan_json_round_trip():
    plan = desk_scale_plan(9)
    assert ExperimentPlan.from_json(plan.to_json()) == plan


def _sample_records():
    rng = np.random.default_rng(17)
    return [
        ShotRecord(
            sequence_id=i,
            m=m,
            n_sites=20,
            words=rng.integers(0, 1 << 20, size=16, dtype=np.uint64),
        )
        for i, m in enumerate([0, 1, 4])
    ]


def test_shot_record_binary_round_trip():
    records = _sample_records()
    blob = shot_records_to_bytes(records)
    assert blob[:4] == b"LACE"
    assert shot_records_from_bytes(blob) == records


def test_shot_record_file_round_trip(tmp_path):
    records = _sample_records()
    path = tmp_path / "shots.lace"
    write_shot_records(path, records)
    assert read_shot_records(path) == records


def test_shot_record_byte_determinism():
    assert shot_records_to_bytes(_sample_records()) == shot_records_to_bytes(
        _sample_records()
    )


def test_shot_record_rejects_bad_magic():
    blob = bytearray(shot_records_to_bytes(_sample_records()))
    blob[:4] = b"NOPE"
    with pytest.raises(ValueError):
        shot_records_from_bytes(bytes(blob))


def test_shot_record_rejects_truncation():
    blob = shot_records_to_bytes(_sample_records())
    with pytest.raises(ValueError):
        shot_records_from_bytes(blob[:-3])


def test_shot_record_rejects_mixed_shapes():
    a, b, _ = _sample_records()
    short = ShotRecord(sequence_id=9, m=2, n_sites=20, words=b.words[:8])
    with pytest.raises(ValueError):
        shot_records_to_bytes([a, short])


def test_shot_record_rejects_oversized_word():
    with pytest.raises(ValueError):
        ShotRecord(sequence_id=0, m=0, n_sites=4, words=np.array([16], dtype=np.uint64))


def test_csv_export():
    rec = ShotRecord(
        sequence_id=2, m=1, n_sites=3, words=np.array([0b101, 0b010], dtype=np.uint64)
    )
    lines = shot_records_to_csv([rec]).strip().splitlines()
    assert lines[0] == "sequence_id,m,q0,q1,q2"
    assert lines[1] == "2,1,1,0,1"
    assert lines[2] == "2,1,0,1,0"
