"""Heat-bath (Glauber) sampling of the MSK Gibbs measure.

Each chain keeps the vector of local fields ``J s + h`` and updates it in
O(N) per accepted flip.  Fields are recomputed from scratch every
``REFRESH_SWEEPS`` sweeps and must agree with the cache to 1e-8.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng
from .errors import FieldDriftError, InsufficientSamples
from .model import DisorderSample, ModelSpec, SpeciesLayout, as_spins, interaction_matrix, random_spins
from .order_params import critical_temperatures
from .parallel import ordered_map

log = logging.getLogger(__name__)

REFRESH_SWEEPS = 64
DRIFT_TOL = 1e-8
N_BATCHES = 20
MAX_BURN_IN_DOUBLINGS = 4


@numba.njit(cache=True, nogil=True)
def _sweep(spins, fields, j, u):
    n = spins.shape[0]
    flips = 0
    for i in range(n):
        new = 1 if 2.0 * u[i] < 1.0 + math.tanh(fields[i]) else -1
        if new != spins[i]:
            delta = 2.0 * new
            for k in range(n):
                fields[k] += j[i, k] * delta
            spins[i] = new
            flips += 1
    return flips


@numba.njit(cache=True, nogil=True)
def _sweep_many(spins, fields, j, u):
    for c in range(spins.shape[0]):
        _sweep(spins[c], fields[c], j, u[c])


@numba.njit(cache=True, nogil=True)
def _run(spins, fields, j, h, u, thin, offset, out_spins, out_fields, out_energy):
    """Run ``u.shape[0]`` sweeps; record every energy and the state after sweeps ``offset+t+1 = 0 mod thin``."""
    n = spins.shape[0]
    flips = 0
    rec = 0
    for t in range(u.shape[0]):
        flips += _sweep(spins, fields, j, u[t])
        e = 0.0
        for i in range(n):
            e += spins[i] * (0.5 * fields[i] + 0.5 * h)
        out_energy[t] = e
        if (offset + t + 1) % thin == 0:
            for i in range(n):
                out_spins[rec, i] = spins[i]
                out_fields[rec, i] = fields[i]
            rec += 1
    return flips


def _fresh_fields(j: np.ndarray, spins: np.ndarray, h: float) -> np.ndarray:
    return j @ spins.astype(np.float64) + h


def glauber_sweep(spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, sigma, gen: np.random.Generator):
    """One sequential-scan heat-bath sweep; returns the new configuration."""
    j = np.ascontiguousarray(interaction_matrix(spec, disorder))
    s = as_spins(sigma, spec.n).copy()
    f = _fresh_fields(j, s, spec.h)
    _sweep(s, f, j, rng.open_uniforms(gen, spec.n))
    return s


def glauber_sweep_batch(spec: ModelSpec, disorder: DisorderSample, sigmas: np.ndarray, gen: np.random.Generator):
    """Independent sweeps of many chains stored as rows of ``sigmas`` (updated in place)."""
    j = np.ascontiguousarray(interaction_matrix(spec, disorder))
    f = sigmas.astype(np.float64) @ j + spec.h
    _sweep_many(sigmas, f, j, rng.open_uniforms(gen, sigmas.shape))
    return sigmas


@dataclass(frozen=True)
class ChainConfig:
    n_sweeps: int
    burn_in_sweeps: int | None = None  # None: 10 * N
    thin: int = 1
    n_replicas: int = 2
    seed: int = 0
    rao_blackwell: bool = True

    def __post_init__(self):
        if self.burn_in_sweeps is not None and self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be >= 0")
        if self.thin < 1 or self.n_replicas < 1 or self.n_sweeps < 1:
            raise ValueError("thin, n_replicas and n_sweeps must be >= 1")
        rng.check_seed(self.seed)


@dataclass
class _Chain:
    spins: np.ndarray
    fields: np.ndarray
    gen: np.random.Generator
    flips: int = 0
    sweeps: int = 0


def _advance(chain: _Chain, j, h, n_sweeps: int, thin: int):
    n = chain.spins.size
    n_rec = n_sweeps // thin
    out_spins = np.empty((n_rec, n), dtype=np.int8)
    out_fields = np.empty((n_rec, n))
    out_energy = np.empty(n_sweeps)
    done = 0
    rec = 0
    while done < n_sweeps:
        # chunks end on field-refresh boundaries
        room = REFRESH_SWEEPS - chain.sweeps % REFRESH_SWEEPS
        k = min(n_sweeps - done, room)
        u = rng.open_uniforms(chain.gen, (k, n))
        k_rec = (done + k) // thin - done // thin
        chain.flips += _run(
            chain.spins, chain.fields, j, h, u, thin, done,
            out_spins[rec : rec + k_rec], out_fields[rec : rec + k_rec], out_energy[done : done + k],
        )
        rec += k_rec
        done += k
        chain.sweeps += k
        if chain.sweeps % REFRESH_SWEEPS == 0:
            fresh = _fresh_fields(j, chain.spins, h)
            drift = float(np.max(np.abs(fresh - chain.fields)))
            if drift > DRIFT_TOL:
                raise FieldDriftError(f"cached fields drifted by {drift:.3g} after {chain.sweeps} sweeps")
            chain.fields[:] = fresh
    return out_spins, np.tanh(out_fields), out_energy


def stable_mean(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean taken relative to the first entry, so constant series average exactly."""
    ref = x.take([0], axis=axis)
    return np.squeeze(ref, axis=axis) + (x - ref).mean(axis=axis)


def batch_means(x: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    """Means of ``n_batches`` equal contiguous batches along axis 0 (leading remainder dropped)."""
    size = x.shape[0] // n_batches
    if size < 1:
        raise InsufficientSamples(f"need at least {n_batches} samples, got {x.shape[0]}")
    x = x[x.shape[0] - size * n_batches :]
    return stable_mean(x.reshape((n_batches, size) + x.shape[1:]), axis=1)


def halves_differ(energy: np.ndarray, z: float = 3.0) -> bool:
    """True when first- and second-half energy means differ by more than ``z`` standard errors."""
    half = energy.size // 2
    if half < 20:
        return False
    a, b = batch_means(energy[:half], 10), batch_means(energy[half : 2 * half], 10)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    diff = abs(a.mean() - b.mean())
    return diff > z * se if se > 0 else diff > 0


@dataclass
class ReplicaRun:
    spins: np.ndarray = field(repr=False)
    rb: np.ndarray = field(repr=False)
    flip_rate: float = 0.0
    burn_in_sweeps: int = 0
    burn_in_converged: bool = True


def run_replica(spec: ModelSpec, disorder: DisorderSample, cfg: ChainConfig, replica: int, j=None) -> ReplicaRun:
    """Burn in and sample one chain on RNG stream ``replica + 1`` of ``cfg.seed``."""
    if j is None:
        j = np.ascontiguousarray(interaction_matrix(spec, disorder))
    gen = rng.replica_stream(cfg.seed, replica)
    s = random_spins(gen, spec.n)
    chain = _Chain(s, _fresh_fields(j, s, spec.h), gen)
    burn = 10 * spec.n if cfg.burn_in_sweeps is None else cfg.burn_in_sweeps
    window = burn
    used = 0
    converged = True
    if burn:
        _, _, energy = _advance(chain, j, spec.h, window, window + 1)
        used += window
        doublings = 0
        while halves_differ(energy):
            if doublings == MAX_BURN_IN_DOUBLINGS:
                converged = False
                log.warning("burn-in did not stabilise after %d sweeps", used)
                break
            window *= 2
            doublings += 1
            _, _, energy = _advance(chain, j, spec.h, window, window + 1)
            used += window
    flips_before, sweeps_before = chain.flips, chain.sweeps
    spins, rb, _ = _advance(chain, j, spec.h, cfg.n_sweeps, cfg.thin)
    rate = (chain.flips - flips_before) / ((chain.sweeps - sweeps_before) * spec.n)
    return ReplicaRun(spins, rb, rate, used, converged)


@dataclass(frozen=True, eq=False)
class McmcEstimate:
    magnetizations: np.ndarray
    magnetization_se: np.ndarray
    overlap_mean: np.ndarray
    overlap_se: np.ndarray
    overlap_var: np.ndarray
    replica_magnetizations: np.ndarray = field(repr=False)
    replica_raw_magnetizations: np.ndarray = field(repr=False, default=None)
    replica_rb_magnetizations: np.ndarray = field(repr=False, default=None)
    flip_rate: float = 0.0
    burn_in_sweeps: tuple[int, ...] = ()
    burn_in_converged: bool = True
    outside_proven_regime: bool = False


def estimate(
    spec: ModelSpec,
    layout: SpeciesLayout,
    disorder: DisorderSample,
    cfg: ChainConfig,
    threads: int | None = None,
) -> McmcEstimate:
    """Magnetizations and replica overlaps from ``cfg.n_replicas`` independent chains.

    Standard errors use batch means (20 batches per replica).  With
    ``cfg.rao_blackwell`` the per-sweep estimator of ``<s_i>`` is
    ``tanh(local field_i)``, the conditional mean of ``s_i``.
    """
    if cfg.n_sweeps < N_BATCHES * cfg.thin:
        raise InsufficientSamples(f"n_sweeps={cfg.n_sweeps} < {N_BATCHES} * thin={cfg.thin}")
    try:
        outside = spec.beta >= critical_temperatures(spec).beta_0
    except Exception:
        outside = False
    if outside:
        log.warning("MCMC above beta_0: mixing and concentration are not guaranteed")
    j = np.ascontiguousarray(interaction_matrix(spec, disorder))
    runs = ordered_map(lambda r: run_replica(spec, disorder, cfg, r, j), range(cfg.n_replicas), threads)

    series = [(r.rb if cfg.rao_blackwell else r.spins.astype(np.float64)) for r in runs]
    per_replica = np.stack([batch_means(x) for x in series])  # (R, batches, N)
    pooled = per_replica.reshape(-1, spec.n)
    mags = np.clip(stable_mean(pooled), -1.0, 1.0)
    se = pooled.std(axis=0, ddof=1) / math.sqrt(pooled.shape[0])

    m = len(layout.sizes)
    if cfg.n_replicas >= 2:
        sizes = np.asarray(layout.sizes, dtype=np.float64)
        onehot = np.zeros((spec.n, m))
        onehot[np.arange(spec.n), layout.species_of] = 1.0
        pair_series = []
        for a in range(cfg.n_replicas):
            for b in range(a + 1, cfg.n_replicas):
                prod = runs[a].spins.astype(np.float64) * runs[b].spins
                pair_series.append(prod @ onehot / sizes)
        ov = np.mean(pair_series, axis=0)  # (samples, m)
        ov_b = batch_means(ov)
        ov_mean = ov.mean(axis=0)
        ov_se = ov_b.std(axis=0, ddof=1) / math.sqrt(ov_b.shape[0])
        ov_var = np.mean([p.var(axis=0) for p in pair_series], axis=0)
    else:
        ov_mean = ov_se = ov_var = np.full(m, np.nan)

    return McmcEstimate(
        magnetizations=mags,
        magnetization_se=se,
        overlap_mean=ov_mean,
        overlap_se=ov_se,
        overlap_var=ov_var,
        replica_magnetizations=np.stack([stable_mean(x) for x in series]),
        replica_raw_magnetizations=np.stack([r.spins.mean(axis=0, dtype=np.float64) for r in runs]),
        replica_rb_magnetizations=np.stack([stable_mean(r.rb) for r in runs]),
        flip_rate=float(np.mean([r.flip_rate for r in runs])),
        burn_in_sweeps=tuple(r.burn_in_sweeps for r in runs),
        burn_in_converged=all(r.burn_in_converged for r in runs),
        outside_proven_regime=outside,
    )
