"""Pauli algebra, Clifford tableaus, and stabilizer-state bookkeeping.

Operators are stored in the raw product form i**phase * X**x * Z**z, where x
and z are bitmasks over qubits (bit k = qubit k) and phase is an exponent of
i modulo 4.  The Hermitian Y is (x=1, z=1, phase=1).  With this convention
every conjugation rule below is a short bit expression, and CX picks up no
phase correction at all (the familiar sign term is an artifact of writing
operators with Y letters instead of XZ products).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_SIGNS = {0: "+", 1: "+i", 2: "-", 3: "-i"}


class NonProductStateError(ValueError):
    """A stabilizer state could not be reduced to a tensor product."""


def _check_qubit(n, q):
    if not 0 <= q < n:
        raise ValueError(f"qubit {q} out of range for {n} qubits")


@dataclass(frozen=True)
class PauliOp:
    """i**phase * X**x * Z**z on n qubits; bit k of x and z is qubit k."""

    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("qubit count must be nonnegative")
        mask = (1 << self.n) - 1
        if not 0 <= self.x <= mask or not 0 <= self.z <= mask:
            raise ValueError("support mask outside qubit range")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n):
        return cls(n, 0, 0, 0)

    @classmethod
    def single(cls, n, q, kind):
        """Hermitian single-qubit Pauli, kind in 'IXYZ'."""
        _check_qubit(n, q)
        if kind == "I":
            return cls(n, 0, 0, 0)
        if kind == "X":
            return cls(n, 1 << q, 0, 0)
        if kind == "Y":
            return cls(n, 1 << q, 1 << q, 1)
        if kind == "Z":
            return cls(n, 0, 1 << q, 0)
        raise ValueError(f"unknown Pauli letter {kind!r}")

    @classmethod
    def from_letters(cls, letters):
        """Hermitian product Pauli from 'IXYZ' letters, qubit 0 first."""
        x = z = 0
        phase = 0
        for q, kind in enumerate(letters):
            if kind == "X":
                x |= 1 << q
            elif kind == "Y":
                x |= 1 << q
                z |= 1 << q
                phase += 1
            elif kind == "Z":
                z |= 1 << q
            elif kind != "I":
                raise ValueError(f"unknown Pauli letter {kind!r}")
        return cls(len(letters), x, z, phase)

    def weight(self):
        return (self.x | self.z).bit_count()

    def support(self):
        return self.x | self.z

    def commutes(self, other):
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        return ((self.x & other.z).bit_count() + (self.z & other.x).bit_count()) % 2 == 0

    def compose(self, other):
        """Operator product self * other (self applied after other)."""
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        # X**x1 Z**z1 X**x2 Z**z2: moving X**x2 left past Z**z1 gives
        # (-1)**popcount(z1 & x2).
        phase = self.phase + other.phase + 2 * (self.z & other.x).bit_count()
        return PauliOp(self.n, self.x ^ other.x, self.z ^ other.z, phase)

    def adjoint(self):
        return PauliOp(self.n, self.x, self.z, -self.phase + 2 * (self.x & self.z).bit_count())

    def sign_exponent(self):
        """Exponent s of i in i**s * (letter product); s in {0,2} iff Hermitian."""
        return (self.phase - (self.x & self.z).bit_count()) % 4

    def is_hermitian(self):
        return self.sign_exponent() % 2 == 0

    def label(self):
        letters = "".join(
            _LETTERS[((self.x >> q) & 1, (self.z >> q) & 1)] for q in range(self.n)
        )
        return _SIGNS[self.sign_exponent()] + letters


def apply_h(p, q):
    """H P H (H is its own inverse)."""
    _check_qubit(p.n, q)
    bit = 1 << q
    xq = (p.x >> q) & 1
    zq = (p.z >> q) & 1
    x = (p.x & ~bit) | (zq << q)
    z = (p.z & ~bit) | (xq << q)
    return PauliOp(p.n, x, z, p.phase + 2 * (xq & zq))


def apply_s(p, q):
    """S P S†: X -> Y, Z -> Z."""
    _check_qubit(p.n, q)
    xq = (p.x >> q) & 1
    return PauliOp(p.n, p.x, p.z ^ (xq << q), p.phase + xq)


def apply_sdg(p, q):
    """S† P S: X -> -Y, Z -> Z."""
    _check_qubit(p.n, q)
    xq = (p.x >> q) & 1
    return PauliOp(p.n, p.x, p.z ^ (xq << q), p.phase + 3 * xq)


def apply_x(p, q):
    _check_qubit(p.n, q)
    return PauliOp(p.n, p.x, p.z, p.phase + 2 * ((p.z >> q) & 1))


def apply_y(p, q):
    _check_qubit(p.n, q)
    return PauliOp(p.n, p.x, p.z, p.phase + 2 * (((p.x ^ p.z) >> q) & 1))


def apply_z(p, q):
    _check_qubit(p.n, q)
    return PauliOp(p.n, p.x, p.z, p.phase + 2 * ((p.x >> q) & 1))


def apply_cx(p, c, t):
    """CX(c,t) P CX(c,t): X_c -> X_c X_t, Z_t -> Z_c Z_t; phase-free."""
    _check_qubit(p.n, c)
    _check_qubit(p.n, t)
    if c == t:
        raise ValueError("control equals target")
    x = p.x ^ (((p.x >> c) & 1) << t)
    z = p.z ^ (((p.z >> t) & 1) << c)
    return PauliOp(p.n, x, z, p.phase)


_GATE_1Q = {
    "h": apply_h,
    "s": apply_s,
    "sdg": apply_sdg,
    "x": apply_x,
    "y": apply_y,
    "z": apply_z,
}


@dataclass
class CliffordTableau:
    """Conjugation images of the X_k and Z_k generators under a Clifford."""

    n: int
    ximg: list
    zimg: list

    @classmethod
    def identity(cls, n):
        return cls(
            n,
            [PauliOp(n, 1 << k, 0, 0) for k in range(n)],
            [PauliOp(n, 0, 1 << k, 0) for k in range(n)],
        )

    def copy(self):
        return CliffordTableau(self.n, list(self.ximg), list(self.zimg))

    def key(self):
        return tuple((p.x, p.z, p.phase) for p in self.ximg + self.zimg)

    def _map(self, fn, *args):
        self.ximg = [fn(p, *args) for p in self.ximg]
        self.zimg = [fn(p, *args) for p in self.zimg]

    def h(self, q):
        self._map(apply_h, q)

    def s(self, q):
        self._map(apply_s, q)

    def sdg(self, q):
        self._map(apply_sdg, q)

    def x(self, q):
        self._map(apply_x, q)

    def y(self, q):
        self._map(apply_y, q)

    def z(self, q):
        self._map(apply_z, q)

    def cx(self, c, t):
        self._map(apply_cx, c, t)

    def apply_gate(self, name, *qubits):
        if name == "cx":
            self.cx(*qubits)
        elif name in _GATE_1Q:
            self._map(_GATE_1Q[name], *qubits)
        else:
            raise ValueError(f"unknown gate {name!r}")

    def conjugate(self, p):
        """Image U p U† for the Clifford U this tableau represents."""
        if p.n != self.n:
            raise ValueError("qubit count mismatch")
        out = PauliOp(self.n, 0, 0, p.phase)
        for k in range(self.n):
            if (p.x >> k) & 1:
                out = out.compose(self.ximg[k])
        for k in range(self.n):
            if (p.z >> k) & 1:
                out = out.compose(self.zimg[k])
        return out

    def then(self, other):
        """Tableau of applying self's circuit first, then other's."""
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        return CliffordTableau(
            self.n,
            [other.conjugate(p) for p in self.ximg],
            [other.conjugate(p) for p in self.zimg],
        )

    def is_identity(self):
        return self.key() == CliffordTableau.identity(self.n).key()

    def symplectic_matrix(self):
        """2n x 2n GF(2) matrix; row k < n is the image of X_k as (x|z) bits."""
        n = self.n
        mat = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        for k, p in enumerate(self.ximg + self.zimg):
            for j in range(n):
                mat[k, j] = (p.x >> j) & 1
                mat[k, n + j] = (p.z >> j) & 1
        return mat

    def is_symplectic(self):
        n = self.n
        m = self.symplectic_matrix()
        omega = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        omega[:n, n:] = np.eye(n, dtype=np.uint8)
        omega[n:, :n] = np.eye(n, dtype=np.uint8)
        return np.array_equal((m @ omega @ m.T) % 2, omega)

    def inverse(self):
        """Tableau of the inverse Clifford (symplectic inverse + sign fix)."""
        n = self.n
        m = self.symplectic_matrix()
        omega = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        omega[:n, n:] = np.eye(n, dtype=np.uint8)
        omega[n:, :n] = np.eye(n, dtype=np.uint8)
        minv = (omega @ m.T @ omega) % 2
        images = []
        for row in minv:
            x = z = 0
            for j in range(n):
                x |= int(row[j]) << j
                z |= int(row[n + j]) << j
            images.append(PauliOp(n, x, z, 0))
        inv = CliffordTableau(n, images[:n], images[n:])
        # Phase fix: require conjugate(inv image of G) == G for each generator.
        for k in range(n):
            back = self.conjugate(inv.ximg[k])
            if back.x != (1 << k) or back.z != 0:
                raise ValueError("tableau is not symplectic")
            inv.ximg[k] = PauliOp(n, inv.ximg[k].x, inv.ximg[k].z, -back.phase)
            back = self.conjugate(inv.zimg[k])
            if back.x != 0 or back.z != (1 << k):
                raise ValueError("tableau is not symplectic")
            inv.zimg[k] = PauliOp(n, inv.zimg[k].x, inv.zimg[k].z, -back.phase)
        return inv


class StabilizerState:
    """Sign-tracking stabilizer simulation as bit matrices over generators.

    x[g, q] and z[g, q] hold the raw-form masks of generator g; phase[g] is
    its exponent of i.  All gate updates are vectorized over generators.
    """

    def __init__(self, n):
        self.n = n
        self.x = np.zeros((n, n), dtype=np.uint8)
        self.z = np.eye(n, dtype=np.uint8)
        self.phase = np.zeros(n, dtype=np.uint8)  # |0...0>: generators +Z_k

    @classmethod
    def pauli_basis_frame(cls, n):
        """2n-row frame tracking every X_k and Z_k through a circuit.

        Rows 0..n-1 start as X_k, rows n..2n-1 as Z_k, so after applying a
        circuit the rows are the full conjugation tableau.  Only the gate
        methods apply to this shape; reduce_to_product assumes n rows.
        """
        obj = cls.__new__(cls)
        obj.n = n
        eye = np.eye(n, dtype=np.uint8)
        zero = np.zeros((n, n), dtype=np.uint8)
        obj.x = np.vstack([eye, zero])
        obj.z = np.vstack([zero, eye])
        obj.phase = np.zeros(2 * n, dtype=np.uint8)
        return obj

    def h(self, q):
        self.phase += 2 * (self.x[:, q] & self.z[:, q])
        self.phase %= 4
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def s(self, q):
        self.phase = (self.phase + self.x[:, q]) % 4
        self.z[:, q] ^= self.x[:, q]

    def cx(self, c, t):
        self.x[:, t] ^= self.x[:, c]
        self.z[:, c] ^= self.z[:, t]

    def pauli(self, op):
        """Conjugate by a Hermitian Pauli layer: signs only."""
        if op.n != self.n:
            raise ValueError("qubit count mismatch")
        xp = np.array([(op.x >> q) & 1 for q in range(self.n)], dtype=np.uint8)
        zp = np.array([(op.z >> q) & 1 for q in range(self.n)], dtype=np.uint8)
        anti = (self.x @ zp + self.z @ xp) % 2
        self.phase = (self.phase + 2 * anti) % 4

    def clifford_layer(self, indices):
        """Apply table Cliffords per qubit (index array, identity = 0)."""
        for q, idx in enumerate(indices):
            if idx == 0:
                continue
            code = self.x[:, q] + 2 * self.z[:, q]
            self.phase = (self.phase + CLIFFORD_LOCAL_PHASE[idx][code]) % 4
            self.x[:, q] = CLIFFORD_LOCAL_X[idx][code]
            self.z[:, q] = CLIFFORD_LOCAL_Z[idx][code]

    def generator(self, g):
        x = z = 0
        for q in range(self.n):
            x |= int(self.x[g, q]) << q
            z |= int(self.z[g, q]) << q
        return PauliOp(self.n, x, z, int(self.phase[g]))

    def _rowmul(self, dst, src):
        # generator product dst * src in raw form
        self.phase[dst] = (
            self.phase[dst]
            + self.phase[src]
            + 2 * int(np.sum(self.z[dst] & self.x[src]) & 1)
        ) % 4
        self.x[dst] ^= self.x[src]
        self.z[dst] ^= self.z[src]

    def reduce_to_product(self):
        """Gaussian-eliminate to one single-qubit stabilizer per qubit.

        Returns a list of PauliOp (one per qubit, weight 1, Hermitian).
        Raises NonProductStateError if the state is entangled.
        """
        n = self.n
        pivot = 0
        # qubit-major interleaved columns keep product-state rows in one block
        for col in range(2 * n):
            q, which = divmod(col, 2)
            arr = self.x if which == 0 else self.z
            rows = [g for g in range(pivot, n) if arr[g, q]]
            if not rows:
                continue
            r = rows[0]
            if r != pivot:
                self.x[[pivot, r]] = self.x[[r, pivot]]
                self.z[[pivot, r]] = self.z[[r, pivot]]
                self.phase[[pivot, r]] = self.phase[[r, pivot]]
            for g in range(n):
                if g != pivot and arr[g, q]:
                    self._rowmul(g, pivot)
            pivot += 1
        per_qubit = [None] * n
        for g in range(n):
            support = np.flatnonzero(self.x[g] | self.z[g])
            if len(support) != 1:
                raise NonProductStateError(
                    f"generator {g} has support on qubits {support.tolist()}"
                )
            q = int(support[0])
            if per_qubit[q] is not None:
                raise NonProductStateError(f"two generators left on qubit {q}")
            per_qubit[q] = self.generator(g)
        return per_qubit


def _build_clifford_table():
    """All 24 single-qubit Clifford tableaus by BFS over {H, S} words."""
    ident = CliffordTableau.identity(1)
    elems = [ident]
    words = [()]
    seen = {ident.key()}
    i = 0
    while i < len(elems):
        for gate in ("h", "s"):
            cand = elems[i].copy()
            getattr(cand, gate)(0)
            if cand.key() not in seen:
                seen.add(cand.key())
                elems.append(cand)
                words.append(words[i] + (gate,))
        i += 1
    return tuple(elems), tuple(words)


CLIFFORD_1Q, CLIFFORD_1Q_WORDS = _build_clifford_table()

_CLIFFORD_KEY_TO_INDEX = {c.key(): i for i, c in enumerate(CLIFFORD_1Q)}


def clifford_index(tableau):
    return _CLIFFORD_KEY_TO_INDEX[tableau.key()]


def clifford_compose(a, b):
    """Index of the Clifford 'apply a, then b'."""
    return _CLIFFORD_KEY_TO_INDEX[CLIFFORD_1Q[a].then(CLIFFORD_1Q[b]).key()]


CLIFFORD_1Q_INV = tuple(
    _CLIFFORD_KEY_TO_INDEX[c.inverse().key()] for c in CLIFFORD_1Q
)


def _build_local_action():
    # per-element lookup over local raw codes x + 2z -> image (x', z', dphase)
    xs = np.zeros((24, 4), dtype=np.uint8)
    zs = np.zeros((24, 4), dtype=np.uint8)
    ph = np.zeros((24, 4), dtype=np.uint8)
    for idx, c in enumerate(CLIFFORD_1Q):
        for code in range(4):
            img = c.conjugate(PauliOp(1, code & 1, code >> 1, 0))
            xs[idx, code] = img.x
            zs[idx, code] = img.z
            ph[idx, code] = img.phase
    return xs, zs, ph


CLIFFORD_LOCAL_X, CLIFFORD_LOCAL_Z, CLIFFORD_LOCAL_PHASE = _build_local_action()

# packed (x + 2z) -> (x' + 2z') map for sign-free frame propagation
CLIFFORD_XZ_ACTION = CLIFFORD_LOCAL_X + 2 * CLIFFORD_LOCAL_Z


def _build_stabilizer_fix():
    """(x, z, phase, target) -> first table Clifford sending the signed
    single-qubit stabilizer i**phase X**x Z**z to (-1)**target Z."""
    table = {}
    stabilizers = [(1, 0, 0), (1, 0, 2), (0, 1, 0), (0, 1, 2), (1, 1, 1), (1, 1, 3)]
    for idx, c in enumerate(CLIFFORD_1Q):
        for x, z, phase in stabilizers:
            img = c.conjugate(PauliOp(1, x, z, phase))
            if img.x == 0 and img.z == 1:
                target = 0 if img.phase == 0 else 1
                table.setdefault((x, z, phase, target), idx)
    return table


_STABILIZER_FIX = _build_stabilizer_fix()


def stabilizer_fix(stab, target):
    """Clifford index mapping a single-qubit stabilizer to (-1)**target Z.

    stab is a weight-1 Hermitian PauliOp on any qubit; the returned index is
    the lowest BFS-order table element doing the job (deterministic).
    """
    if stab.weight() != 1 or not stab.is_hermitian():
        raise ValueError(f"not a single-qubit stabilizer: {stab.label()}")
    q = stab.support().bit_length() - 1
    key = ((stab.x >> q) & 1, (stab.z >> q) & 1, stab.phase, int(target))
    return _STABILIZER_FIX[key]
