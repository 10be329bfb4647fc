"""Concrete MSK instances: species layout, Gaussian disorder, Hamiltonian."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import rng
from .errors import DimensionError, InvalidMatrix, InvalidSpec, SpeciesTooSmall
from .linalg import as_symmetric


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Species ratios, variance profile, inverse temperature, field and size."""

    lambdas: np.ndarray
    delta2: np.ndarray
    beta: float
    h: float
    n: int

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=np.float64).reshape(-1)
        try:
            d2 = as_symmetric(self.delta2)
        except InvalidMatrix as exc:
            raise InvalidSpec(f"delta2: {exc}") from exc
        if d2.shape[0] != lam.size:
            raise InvalidSpec(f"delta2 is {d2.shape[0]}x{d2.shape[0]} but {lam.size} lambdas given")
        if np.any(d2 < 0):
            raise InvalidSpec("delta2 entries must be non-negative variances")
        if abs(lam.sum() - 1.0) > 1e-12:
            raise InvalidSpec(f"lambdas must sum to 1 (sum is {lam.sum():.15g})")
        if lam.size > 1 and np.any((lam <= 0) | (lam >= 1)):
            raise InvalidSpec("every lambda must lie in (0, 1)")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise InvalidSpec(f"beta must be finite and >= 0, got {self.beta}")
        if not (math.isfinite(self.h) and self.h >= 0):
            raise InvalidSpec(f"h must be finite and >= 0, got {self.h}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidSpec(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "lambdas", _frozen(lam))
        object.__setattr__(self, "delta2", _frozen(d2))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "n", int(self.n))

    @property
    def m(self) -> int:
        return int(self.lambdas.size)

    def replace(self, **changes) -> "ModelSpec":
        return dataclasses.replace(self, **changes)

    def permuted(self, perm) -> "ModelSpec":
        """Same model with species relabelled so new species ``k`` is old ``perm[k]``."""
        perm = np.asarray(perm)
        return self.replace(lambdas=self.lambdas[perm], delta2=self.delta2[np.ix_(perm, perm)])


@dataclass(frozen=True, eq=False)
class SpeciesLayout:
    """Contiguous index blocks, one per species, in species order."""

    sizes: tuple[int, ...]

    @cached_property
    def n(self) -> int:
        return int(sum(self.sizes))

    @cached_property
    def starts(self) -> np.ndarray:
        return _frozen(np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64))

    @cached_property
    def species_of(self) -> np.ndarray:
        return _frozen(np.repeat(np.arange(len(self.sizes)), self.sizes).astype(np.int64))

    @property
    def index_sets(self) -> list[range]:
        return [range(int(a), int(a) + k) for a, k in zip(self.starts, self.sizes)]


def build_layout(spec: ModelSpec) -> SpeciesLayout:
    """Split ``n`` spins into species blocks.

    Each block gets ``floor(lambda_s * n)`` spins; leftover spins go to the
    largest fractional parts, ties broken toward the lower species index.
    """
    raw = spec.lambdas * spec.n
    if np.any(raw < 1):
        s = int(np.argmax(raw < 1))
        raise SpeciesTooSmall(f"species {s} gets {raw[s]:.3g} spins at n={spec.n}")
    sizes = np.floor(raw).astype(np.int64)
    rem = spec.n - int(sizes.sum())
    frac = raw - sizes
    order = sorted(range(spec.m), key=lambda s: (-frac[s], s))
    for s in order[:rem]:
        sizes[s] += 1
    return SpeciesLayout(tuple(int(k) for k in sizes))


def pair_index(i: int, j: int, n: int) -> int:
    """Flat position of the pair ``i < j`` (0-based) in upper-triangular storage."""
    if not 0 <= i < j < n:
        raise IndexError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """Couplings ``g_ij`` for ``i < j`` in row-major upper-triangular order."""

    n: int
    couplings: np.ndarray
    seed: int

    def __post_init__(self):
        g = np.asarray(self.couplings, dtype=np.float64)
        if g.shape != (self.n * (self.n - 1) // 2,):
            raise DimensionError(f"expected {self.n * (self.n - 1) // 2} couplings, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "couplings", _frozen(g))

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense symmetric coupling matrix with zero diagonal."""
        g = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, 1)
        g[iu] = self.couplings
        g += g.T
        return _frozen(g)

    def coupling(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        a, b = min(i, j), max(i, j)
        return float(self.couplings[pair_index(a, b, self.n)])

    def negated(self) -> "DisorderSample":
        return DisorderSample(self.n, -self.couplings, self.seed)


def variance_matrix(spec: ModelSpec, layout: SpeciesLayout) -> np.ndarray:
    """N x N matrix of per-pair variances ``Delta2[s(i), s(j)]``."""
    s = layout.species_of
    return spec.delta2[np.ix_(s, s)]


def sample_disorder(spec: ModelSpec, layout: SpeciesLayout, seed: int) -> DisorderSample:
    if layout.n != spec.n or len(layout.sizes) != spec.m:
        raise DimensionError("layout does not match spec")
    n = spec.n
    iu, ju = np.triu_indices(n, 1)
    s = layout.species_of
    std = np.sqrt(spec.delta2[s[iu], s[ju]])
    z = rng.standard_normals(rng.stream(seed, rng.DISORDER_STREAM), iu.size)
    return DisorderSample(n, z * std, rng.check_seed(seed))


def interaction_matrix(spec: ModelSpec, disorder: DisorderSample) -> np.ndarray:
    """``beta / sqrt(N) * g`` as a dense symmetric matrix."""
    return spec.beta / math.sqrt(spec.n) * disorder.matrix


def as_spins(sigma, n: int | None = None) -> np.ndarray:
    s = np.asarray(sigma)
    if s.ndim != 1 or (n is not None and s.size != n):
        raise DimensionError(f"expected a length-{n} spin vector, got shape {s.shape}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spins must be +1 or -1")
    return s.astype(np.int8)


def random_spins(gen: np.random.Generator, n: int) -> np.ndarray:
    return np.where(gen.integers(0, 2, size=n) == 1, 1, -1).astype(np.int8)


def hamiltonian(spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, sigma) -> float:
    """``(beta/sqrt N) sum_{i<j} g_ij s_i s_j + h sum_i s_i``."""
    s = as_spins(sigma, spec.n).astype(np.float64)
    iu, ju = np.triu_indices(spec.n, 1)
    pair = float(np.dot(disorder.couplings, s[iu] * s[ju]))
    return spec.beta / math.sqrt(spec.n) * pair + spec.h * float(s.sum())


def local_field(spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, sigma, i: int) -> float:
    """``(beta/sqrt N) sum_{j != i} g_ij s_j + h``; half the energy gain of setting s_i=+1 vs -1."""
    s = as_spins(sigma, spec.n).astype(np.float64)
    row = disorder.matrix[i]
    return spec.beta / math.sqrt(spec.n) * float(np.dot(row, s)) + spec.h


def local_fields(spec: ModelSpec, disorder: DisorderSample, values) -> np.ndarray:
    """All local fields at once; ``values`` may be spins or magnetizations."""
    x = np.asarray(values, dtype=np.float64)
    return interaction_matrix(spec, disorder) @ x + spec.h
