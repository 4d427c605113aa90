"""Dense probability distributions over error-indicator words.

A channel on ``n`` sites is stored as a length ``2**n`` array indexed by
indicator words: bit ``k`` of the integer index is site ``k``. The (unnormalized)
Walsh-Hadamard transform with kernel ``(-1)**popcount(i & j)`` maps such a
distribution to the vector of per-subset eigenvalues; the inverse carries the
``1 / 2**n`` factor. Dense storage is capped at 26 sites (512 MiB of float64).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAX_SITES = 26

_MAGIC_STRUCT = struct.Struct("<I")


class SiteCountError(ValueError):
    """Raised when a site count is negative or beyond the dense cap."""


class DegenerateEventError(ValueError):
    """Raised when conditioning on an event of zero probability."""


def _check_sites(n: int) -> None:
    if not 0 <= int(n) <= MAX_SITES:
        raise SiteCountError(f"site count {n} outside [0, {MAX_SITES}]")


def _sites_from_length(length: int) -> int:
    n = int(length).bit_length() - 1
    if length <= 0 or (1 << n) != length:
        raise ValueError(f"length {length} is not a power of two")
    _check_sites(n)
    return n


@dataclass(frozen=True, eq=False)
class ProbDist:
    """Distribution over ``2**n`` indicator words (validated, read-only)."""

    n: int
    values: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbDist):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    def __post_init__(self) -> None:
        _check_sites(self.n)
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} entries, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite probability entries")
        if values.min(initial=0.0) < -1e-12:
            raise ValueError(f"negative probability entry {values.min()}")
        total = values.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        values = np.maximum(values, 0.0)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def delta(cls, n: int, word: int = 0) -> "ProbDist":
        values = np.zeros(1 << n)
        values[word] = 1.0
        return cls(n, values)

    @classmethod
    def uniform(cls, n: int) -> "ProbDist":
        return cls(n, np.full(1 << n, 1.0 / (1 << n)))

    @classmethod
    def from_marginals(cls, rates: "np.ndarray | list[float]") -> "ProbDist":
        """Product distribution with the given per-site indicator rates."""
        rates = np.asarray(rates, dtype=np.float64)
        n = rates.size
        _check_sites(n)
        values = np.ones(1)
        for k in range(n):
            values = np.concatenate([values * (1.0 - rates[k]), values * rates[k]])
        # concatenation order puts site k at bit k
        return cls(n, values)

    def marginal_rates(self) -> np.ndarray:
        """Per-site probability of an indicated error."""
        idx = np.arange(1 << self.n, dtype=np.uint32)
        return np.array(
            [self.values[(idx >> k) & 1 == 1].sum() for k in range(self.n)]
        )

    def to_bytes(self) -> bytes:
        return _MAGIC_STRUCT.pack(self.n) + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ProbDist":
        if len(raw) < 4:
            raise ValueError("truncated distribution blob")
        (n,) = _MAGIC_STRUCT.unpack_from(raw, 0)
        _check_sites(n)
        expected = 4 + (1 << n) * 8
        if len(raw) != expected:
            raise ValueError(f"expected {expected} bytes for n={n}, got {len(raw)}")
        values = np.frombuffer(raw, dtype="<f8", offset=4).astype(np.float64)
        return cls(n, values)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ProbDist":
        blob = json.loads(text)
        return cls(int(blob["n"]), np.asarray(blob["values"], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class EigenvalueVector:
    """Per-subset channel eigenvalues, indexed like ProbDist words."""

    n: int
    values: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EigenvalueVector):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    def __post_init__(self) -> None:
        _check_sites(self.n)
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} entries, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite eigenvalue entries")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def _wht_inplace(values: np.ndarray) -> np.ndarray:
    """In-place butterfly for the +/-1 transform; fixed serial pairing order."""
    n = values.size
    h = 1
    while h < n:
        view = values.reshape(-1, 2, h)
        lo = view[:, 0, :].copy()
        hi = view[:, 1, :]
        view[:, 0, :] = lo + hi
        view[:, 1, :] = lo - hi
        h *= 2
    return values


def wht_forward(dist: ProbDist) -> EigenvalueVector:
    """Eigenvalues ``lam[j] = sum_x p[x] * (-1)**popcount(j & x)`` (lam[0] = 1)."""
    values = _wht_inplace(dist.values.copy())
    return EigenvalueVector(dist.n, values)


def wht_inverse(eigs: EigenvalueVector) -> np.ndarray:
    """Raw ``W @ lam / 2**n``; may lie off the simplex, caller projects."""
    values = _wht_inplace(eigs.values.copy())
    values /= 1 << eigs.n
    return values


def project_simplex(vector: "np.ndarray | list[float]") -> ProbDist:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.ndim != 1:
        raise ValueError("expected a flat vector")
    if not np.all(np.isfinite(vector)):
        raise ValueError("non-finite entries cannot be projected")
    n = _sites_from_length(vector.size)
    u = np.sort(vector)[::-1]
    cumulative = np.cumsum(u)
    ranks = np.arange(1, vector.size + 1)
    mask = u + (1.0 - cumulative) / ranks > 0
    rho = int(np.nonzero(mask)[0][-1])
    theta = (cumulative[rho] - 1.0) / (rho + 1)
    projected = np.maximum(vector - theta, 0.0)
    # renormalize away residual float error so ProbDist validation is exact
    projected /= projected.sum()
    return ProbDist(n, projected)


def xor_convolve(p: ProbDist, q: ProbDist) -> ProbDist:
    """Distribution of the XOR of independent draws from p and q."""
    if p.n != q.n:
        raise ValueError(f"site counts differ: {p.n} != {q.n}")
    a = _wht_inplace(p.values.copy())
    a *= _wht_inplace(q.values.copy())
    _wht_inplace(a)
    a /= 1 << p.n
    np.clip(a, 0.0, None, out=a)
    a /= a.sum()
    return ProbDist(p.n, a)


def _validate_sites(n: int, sites: "list[int] | tuple[int, ...]") -> list[int]:
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError(f"duplicate sites in {sites}")
    for s in sites:
        if not 0 <= s < n:
            raise ValueError(f"site {s} outside [0, {n})")
    return sites


def marginalize(dist: ProbDist, subset: "list[int] | tuple[int, ...]") -> ProbDist:
    """Marginal over ``subset``; output bit ``k`` carries ``subset[k]``."""
    subset = _validate_sites(dist.n, subset)
    n = dist.n
    tensor = dist.values.reshape([2] * n) if n else dist.values.reshape([])
    drop = tuple(n - 1 - s for s in range(n) if s not in set(subset))
    tensor = tensor.sum(axis=drop)
    kept_desc = sorted(subset, reverse=True)  # axis order after the sum
    order = [kept_desc.index(s) for s in reversed(subset)]
    tensor = np.transpose(tensor, order) if subset else tensor
    return ProbDist(len(subset), np.ascontiguousarray(tensor).reshape(-1))


def conditional(
    dist: ProbDist,
    targets: "list[int] | tuple[int, ...]",
    given: "dict[int, int]",
) -> ProbDist:
    """Conditional over ``targets`` given fixed bits; zero-mass event raises."""
    targets = _validate_sites(dist.n, targets)
    given_sites = _validate_sites(dist.n, list(given))
    if set(targets) & set(given_sites):
        raise ValueError("targets and given sites overlap")
    n = dist.n
    tensor = dist.values.reshape([2] * n)
    index = tuple(
        int(given[site]) & 1 if site in given else slice(None)
        for site in range(n - 1, -1, -1)
    )
    tensor = tensor[index]
    remaining = [s for s in range(n - 1, -1, -1) if s not in given]
    drop = tuple(i for i, s in enumerate(remaining) if s not in set(targets))
    tensor = tensor.sum(axis=drop)
    kept_desc = [s for s in remaining if s in set(targets)]
    order = [kept_desc.index(s) for s in reversed(targets)]
    tensor = np.ascontiguousarray(np.transpose(tensor, order)).reshape(-1)
    total = tensor.sum()
    if total <= 0.0:
        raise DegenerateEventError(f"conditioning event {given} has zero mass")
    return ProbDist(len(targets), tensor / total)
