"""TAP equations for the MSK model.

For spin ``i`` in species ``s`` the TAP residual is

    r_i = m_i - tanh( (beta/sqrt N) sum_{j != i} g_ij m_j + h - c_s m_i ),
    c_s = beta^2 sum_t lambda_t Delta2[s, t] (1 - q_t),

and its even moments should decay like ``N^-k``.  This module computes the
residuals, measures their decay with system size, runs a memory-two TAP
iteration, and checks the cavity-field identities with exact Gibbs averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import rng
from .errors import DimensionError, TooLargeForExact
from .mcmc import ChainConfig, McmcEstimate, estimate, stable_mean
from .model import DisorderSample, ModelSpec, SpeciesLayout, build_layout, interaction_matrix, sample_disorder
from .oracle import enumerate_gibbs, magnetizations, spin_rows
from .order_params import critical_temperatures, solve_q
from .parallel import ordered_map

MAX_CAVITY_N = 20
MIN_SCALING_SIZES = 4


def onsager_correction(spec: ModelSpec, q) -> np.ndarray:
    """Per-species Onsager coefficient ``beta^2 sum_t lambda_t Delta2[s,t] (1 - q_t)``."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (spec.m,):
        raise DimensionError(f"q must have {spec.m} entries")
    one_minus_q = 1.0 - q
    return np.array([spec.beta**2 * np.sum(spec.lambdas * spec.delta2[s] * one_minus_q) for s in range(spec.m)])


def _beta_ratio(spec: ModelSpec) -> float:
    try:
        return spec.beta / critical_temperatures(spec).beta_0
    except Exception:
        return 0.0


@dataclass(frozen=True, eq=False)
class TapReport:
    onsager: np.ndarray
    residuals: np.ndarray = field(repr=False)
    moment_2: float
    moment_4: float
    n: int
    beta_over_beta0: float


def tap_rhs(spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, field_mags, self_mags, q) -> np.ndarray:
    """``tanh((beta/sqrt N) sum_{j != i} g_ij field_mags_j + h - c_s * self_mags_i)``."""
    c = onsager_correction(spec, q)[layout.species_of]
    cavity = interaction_matrix(spec, disorder) @ np.asarray(field_mags, dtype=np.float64)
    return np.tanh(cavity + spec.h - c * np.asarray(self_mags, dtype=np.float64))


def tap_residuals(
    spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, mags, q, field_mags=None
) -> TapReport:
    """TAP residual of every spin and its second and fourth moments.

    ``field_mags`` (default ``mags``) is used inside the cavity sum only.  For
    MCMC input, passing Rao-Blackwell averages as ``mags`` and raw spin
    averages from the same samples as ``field_mags`` cancels the first-order
    sampling noise between the two sides of the equation.
    """
    m = np.asarray(mags, dtype=np.float64)
    fm = m if field_mags is None else np.asarray(field_mags, dtype=np.float64)
    if m.shape != (spec.n,) or fm.shape != (spec.n,):
        raise DimensionError(f"expected {spec.n} magnetizations, got shapes {m.shape} and {fm.shape}")
    r = m - tap_rhs(spec, layout, disorder, fm, m, q)
    return TapReport(
        onsager=onsager_correction(spec, q),
        residuals=r,
        moment_2=float(np.mean(r**2)),
        moment_4=float(np.mean(r**4)),
        n=spec.n,
        beta_over_beta0=_beta_ratio(spec),
    )


def cross_moment_2(residuals_a, residuals_b) -> float:
    """``mean_i r_i^a r_i^b`` for residuals from two independent sets of replicas.

    The sampling noise of the two sets is independent, so it drops out of
    the expectation and this estimates the squared residual of the exact
    magnetizations rather than residual plus sampling variance.
    """
    return float(np.mean(np.asarray(residuals_a) * np.asarray(residuals_b)))


def mcmc_residuals(spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, est: McmcEstimate, q, replicas=None):
    """Residuals from a subset of replicas: Rao-Blackwell self term, raw-spin cavity sum."""
    idx = slice(None) if replicas is None else replicas
    self_m = stable_mean(est.replica_rb_magnetizations[idx])
    field_m = est.replica_raw_magnetizations[idx].mean(axis=0)
    return tap_residuals(spec, layout, disorder, self_m, q, field_mags=field_m)


@dataclass(frozen=True)
class ScalingRow:
    n: int
    moment_2: float
    moment_2_se: float
    moment_4: float
    moment_4_se: float
    debiased_moment_2: float
    debiased_moment_2_se: float
    n_disorder: int


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple[ScalingRow, ...]
    slope: float | None
    plugin_slope: float | None
    estimator: str
    q: tuple[float, ...]


def loglog_slope(ns: Sequence[int], values: Sequence[float]) -> float | None:
    """Least-squares slope of ``log(values)`` against ``log(ns)``; ``None`` if any value is not positive."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2 or np.any(~np.isfinite(v)) or np.any(v <= 0):
        return None
    return float(np.polyfit(np.log(np.asarray(ns, dtype=np.float64)), np.log(v), 1)[0])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def plan_scaling_jobs(spec: ModelSpec, n_list: Sequence[int], n_disorder: int, seed: int) -> list[tuple[int, int, int]]:
    """``(N, draw, seed)`` for every disorder draw of a scaling study."""
    return [(n, d, rng.derive_seed(seed, n, d)) for n in n_list for d in range(n_disorder)]


def scaling_study(
    spec: ModelSpec,
    n_list: Sequence[int],
    n_disorder: int,
    estimator: Literal["exact", "mcmc"] = "mcmc",
    seed: int = 0,
    chain: ChainConfig | None = None,
    threads: int | None = None,
) -> ScalingTable:
    """Disorder-averaged TAP residual moments across system sizes.

    ``spec.n`` is ignored; each size in ``n_list`` gets ``n_disorder`` fresh
    disorder draws.  With the MCMC estimator the replicas are split into two
    halves and the reported slope uses the cross-product estimate of the mean
    squared residual (see :func:`cross_moment_2`); plug-in moments from all
    replicas pooled are reported alongside.
    """
    n_list = list(n_list)
    if n_list != sorted(set(n_list)) or len(n_list) < MIN_SCALING_SIZES:
        raise ValueError(f"n_list must be strictly ascending with at least {MIN_SCALING_SIZES} sizes")
    q = solve_q(spec).q
    chain = chain or ChainConfig(n_sweeps=2000, burn_in_sweeps=200, n_replicas=2)
    if estimator == "mcmc" and chain.n_replicas < 2:
        raise ValueError("MCMC scaling study needs at least two replicas")
    jobs = plan_scaling_jobs(spec, n_list, n_disorder, seed)

    def one(job):
        n, _, draw_seed = job
        s = spec.replace(n=n)
        layout = build_layout(s)
        disorder = sample_disorder(s, layout, draw_seed)
        if estimator == "exact":
            mags = magnetizations(enumerate_gibbs(s, layout, disorder))
            rep = tap_residuals(s, layout, disorder, mags, q)
            return rep.moment_2, rep.moment_4, rep.moment_2
        if estimator != "mcmc":
            raise ValueError(f"unknown estimator {estimator!r}")
        cfg = ChainConfig(chain.n_sweeps, chain.burn_in_sweeps, chain.thin, chain.n_replicas, draw_seed, chain.rao_blackwell)
        est = estimate(s, layout, disorder, cfg, threads=1)
        rep = mcmc_residuals(s, layout, disorder, est, q)
        half = chain.n_replicas // 2
        ra = mcmc_residuals(s, layout, disorder, est, q, slice(None, half)).residuals
        rb = mcmc_residuals(s, layout, disorder, est, q, slice(half, None)).residuals
        return rep.moment_2, rep.moment_4, cross_moment_2(ra, rb)

    results = np.array(ordered_map(one, jobs, threads)).reshape(len(n_list), n_disorder, 3)
    rows = []
    for k, n in enumerate(n_list):
        m2, m2se = _mean_se(results[k, :, 0])
        m4, m4se = _mean_se(results[k, :, 1])
        d2, d2se = _mean_se(results[k, :, 2])
        rows.append(ScalingRow(n, m2, m2se, m4, m4se, d2, d2se, n_disorder))
    plugin = loglog_slope(n_list, [r.moment_2 for r in rows])
    debiased = loglog_slope(n_list, [r.debiased_moment_2 for r in rows])
    return ScalingTable(tuple(rows), debiased, plugin, estimator, tuple(float(x) for x in q))


@dataclass(frozen=True, eq=False)
class TapIterate:
    magnetizations: np.ndarray
    converged: bool
    iterations: int
    last_step: float
    residual: float
    step_history: np.ndarray = field(repr=False)


def tap_iterate(
    spec: ModelSpec,
    layout: SpeciesLayout,
    disorder: DisorderSample,
    q,
    max_iter: int = 1000,
    tol: float = 1e-10,
) -> TapIterate:
    """Memory-two TAP iteration ``m <- tanh(J m_t + h - c m_{t-1})`` from ``m = tanh(h)``.

    Stops once both the step ``max|m_{t+1} - m_t|`` and the TAP residual of
    ``m_{t+1}`` are at most ``tol``.  Non-convergence is reported, not raised.
    """
    j = interaction_matrix(spec, disorder)
    c = onsager_correction(spec, q)[layout.species_of]
    prev = np.full(spec.n, math.tanh(spec.h))
    cur = prev.copy()
    steps = []
    residual = math.inf
    for it in range(1, max_iter + 1):
        nxt = np.tanh(j @ cur + spec.h - c * prev)
        step = float(np.max(np.abs(nxt - cur)))
        steps.append(step)
        prev, cur = cur, nxt
        if step <= tol:
            residual = float(np.max(np.abs(cur - np.tanh(j @ cur + spec.h - c * cur))))
            if residual <= tol:
                return TapIterate(cur, True, it, step, residual, np.array(steps))
    residual = float(np.max(np.abs(cur - np.tanh(j @ cur + spec.h - c * cur))))
    return TapIterate(cur, False, max_iter, steps[-1] if steps else math.nan, residual, np.array(steps))


@dataclass(frozen=True, eq=False)
class CavityProbe:
    """Differences in the two cavity identities for one disorder sample.

    ``diff_field`` compares ``<AV eps E_s>/<AV E_s>`` with
    ``tanh((beta/sqrt N) sum_j eta_j <s_j> + h)``; ``diff_onsager`` is the
    second identity, whose correction uses ``beta (Delta2 Lambda (1-q))_s``.
    """

    species: int
    k: int
    eta: np.ndarray = field(repr=False)
    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    diff_field: np.ndarray = field(repr=False)
    diff_onsager: np.ndarray = field(repr=False)

    @property
    def moment_field(self) -> float:
        return float(np.mean(self.diff_field ** (2 * self.k)))

    @property
    def moment_onsager(self) -> float:
        return float(np.mean(self.diff_onsager ** (2 * self.k)))


def cavity_fields(spec: ModelSpec, layout: SpeciesLayout, s: int, n_eta: int, gen: np.random.Generator) -> np.ndarray:
    """``(N, n_eta)`` Gaussian fields with ``Var eta_j = Delta2[s, species(j)]``."""
    std = np.sqrt(spec.delta2[s, layout.species_of])
    return rng.standard_normals(gen, (spec.n, n_eta)) * std[:, None]


def cavity_check(
    spec: ModelSpec,
    layout: SpeciesLayout,
    disorder: DisorderSample,
    s: int,
    k: int,
    n_eta: int,
    seed: int,
    q=None,
    eta: np.ndarray | None = None,
    chunk: int = 64,
) -> CavityProbe:
    """Evaluate both cavity identities exactly for ``n_eta`` independent fields."""
    n = spec.n
    if n > MAX_CAVITY_N:
        raise TooLargeForExact(f"cavity check capped at N={MAX_CAVITY_N}, got {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if q is None:
        q = solve_q(spec).q
    if eta is None:
        eta = cavity_fields(spec, layout, s, n_eta, rng.stream(seed, 1))
    eta = np.asarray(eta, dtype=np.float64)
    table = enumerate_gibbs(spec, layout, disorder)
    p = table.probabilities
    mags = magnetizations(table)
    sig = spin_rows(n, 0, 1 << n)
    coef = spec.beta / math.sqrt(n)
    a_s = float(spec.delta2[s] @ (spec.lambdas * (1.0 - np.asarray(q))))

    lhs, rhs, d1, d2 = [], [], [], []
    for start in range(0, eta.shape[1], chunk):
        e = eta[:, start : start + chunk]
        x = coef * (sig @ e) + spec.h  # (2^N, K)
        y = coef * (mags @ e) + spec.h  # (K,)
        shift = np.max(np.abs(x), axis=0)
        w = p[:, None] * 0.5 * (np.exp(x - shift) + np.exp(-x - shift))  # p * cosh(x), rescaled
        wsum = w.sum(axis=0)
        t = np.tanh(x)
        ty = np.tanh(y)
        diff_field = ((t - ty) * w).sum(axis=0) / wsum
        ratio = ty + diff_field
        avg_sig = (sig.T @ w) / wsum  # <s_j cosh X>/<cosh X>
        term1 = np.einsum("jk,jk->k", e, avg_sig) / math.sqrt(n)
        term3 = (mags @ e) / math.sqrt(n)
        lhs.append(ratio)
        rhs.append(ty)
        d1.append(diff_field)
        d2.append(term1 - spec.beta * a_s * ratio - term3)
    return CavityProbe(s, k, eta, np.concatenate(lhs), np.concatenate(rhs), np.concatenate(d1), np.concatenate(d2))


@dataclass(frozen=True)
class CavityRow:
    n: int
    species: int
    moment_field: float
    moment_field_se: float
    moment_onsager: float
    moment_onsager_se: float
    n_disorder: int
    n_eta: int


def cavity_study(
    spec: ModelSpec,
    n_list: Sequence[int],
    species: int,
    k: int,
    n_eta: int,
    n_disorder: int,
    seed: int,
    threads: int | None = None,
) -> list[CavityRow]:
    """Cavity-identity moments across sizes; standard errors are across disorder draws."""
    q = solve_q(spec).q
    rows = []
    for n in n_list:
        s_n = spec.replace(n=n)
        layout = build_layout(s_n)

        def one(d: int):
            dis = sample_disorder(s_n, layout, rng.derive_seed(seed, 0, n, d))
            probe = cavity_check(s_n, layout, dis, species, k, n_eta, rng.derive_seed(seed, 1, n, d), q)
            return probe.moment_field, probe.moment_onsager

        vals = np.array(ordered_map(one, range(n_disorder), threads))
        mf, mfse = _mean_se(vals[:, 0])
        mo, mose = _mean_se(vals[:, 1])
        rows.append(CavityRow(n, species, mf, mfse, mo, mose, n_disorder, n_eta))
    return rows
