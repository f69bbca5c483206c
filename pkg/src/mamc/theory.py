"""Executable checks of the ensemble estimator's variance and bias properties.

A synthetic ensemble is an ``N_A x N_C`` matrix ``Q[i, j]``: critic ``j``'s
value for actor ``i``'s action at one fixed state.  The per-actor value is
``v_i = quantile_q(Q[i, :])`` and the ensemble value is ``median_i v_i``.

Two kinds of statements are checked:

* ordering statements (min/max sandwiches), which hold pointwise for every
  matrix once the extremes are read per state, row and column; and
* variance statements, which are only true in distribution and are checked
  by Monte-Carlo against an independent quadrature oracle.

The optimal-policy value subtracted in the estimation-error definition is
the same for every term of a sandwich, so it cancels.  It is kept as an
explicit ``reference`` argument anyway so the cancellation is visible.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .ensemble import median, quantile

MIN_REPLICATIONS = 1000
CHUNK = 25_000
FAMILIES = ("normal", "uniform", "lognormal", "exponential", "correlated")
SYMMETRIC_FAMILIES = ("normal", "uniform")


@dataclass(frozen=True)
class GenerationSpec:
    """How synthetic values are drawn.

    ``mean`` and ``std`` are those of each single entry for every family.
    ``rho`` is the pairwise correlation inside one ensemble and only used
    by the ``correlated`` family (a shared normal factor).
    """

    family: str = "normal"
    mean: float = 0.0
    std: float = 1.0
    seed: int = 0
    rho: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.std < 0:
            raise ValueError("std must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @property
    def iid_symmetric(self) -> bool:
        """The families for which the variance statements are asserted."""
        return self.family in SYMMETRIC_FAMILIES


def draw(spec: GenerationSpec, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Values with the requested mean/std; the last axis is one ensemble."""
    m, s = spec.mean, spec.std
    if spec.family == "normal":
        return m + s * rng.standard_normal(shape)
    if spec.family == "uniform":
        half = s * math.sqrt(3.0)
        return rng.uniform(m - half, m + half, size=shape)
    if spec.family == "exponential":
        return m - s + rng.exponential(s, size=shape)
    if spec.family == "lognormal":
        # unit log-scale; standardised and then rescaled
        sigma = 1.0
        z = rng.lognormal(0.0, sigma, size=shape)
        mu_z = math.exp(sigma ** 2 / 2)
        sd_z = math.sqrt((math.exp(sigma ** 2) - 1) * math.exp(sigma ** 2))
        return m + s * (z - mu_z) / sd_z
    shared = rng.standard_normal(shape[:-1] + (1,))
    own = rng.standard_normal(shape)
    return m + s * (math.sqrt(spec.rho) * shared + math.sqrt(1.0 - spec.rho) * own)


@dataclass
class SyntheticEnsemble:
    values: np.ndarray
    generation: GenerationSpec | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ValueError("ensemble values must be an N_A x N_C matrix with N_A, N_C >= 1")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ensemble values must be finite")

    @classmethod
    def random(cls, n_actors: int, n_critics: int, spec: GenerationSpec | None = None,
               rng: np.random.Generator | None = None) -> "SyntheticEnsemble":
        spec = spec or GenerationSpec()
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        return cls(draw(spec, (n_actors, n_critics), rng), spec)

    @property
    def n_actors(self) -> int:
        return self.values.shape[0]

    @property
    def n_critics(self) -> int:
        return self.values.shape[1]


# ------------------------------------------------------------------ sandwiches

def _as_batch(ensembles) -> np.ndarray:
    if isinstance(ensembles, SyntheticEnsemble):
        return ensembles.values[None]
    if isinstance(ensembles, (list, tuple)):
        return np.stack([e.values if isinstance(e, SyntheticEnsemble) else np.asarray(e)
                         for e in ensembles])
    arr = np.asarray(ensembles, dtype=np.float64)
    return arr[None] if arr.ndim == 2 else arr


def estimator_terms(batch: np.ndarray, q: float) -> dict[str, np.ndarray]:
    """All quantities appearing in the sandwiches, one value per ensemble.

    ``batch`` has shape ``(K, N_A, N_C)``.
    """
    per_actor = quantile(batch, q, axis=-1)            # (K, N_A)
    per_actor = np.reshape(per_actor, batch.shape[:-1])
    return {
        "per_actor": per_actor,
        "ensemble": np.atleast_1d(median(per_actor, axis=-1)),
        "actor_min": per_actor.min(axis=-1),
        "actor_max": per_actor.max(axis=-1),
        "critic_min": np.atleast_1d(median(batch.min(axis=-1), axis=-1)),
        "critic_max": np.atleast_1d(median(batch.max(axis=-1), axis=-1)),
    }


def check_actor_bounds(matrix, q: float) -> bool:
    """min_i v_i <= median_i v_i <= max_i v_i for the per-actor values v_i."""
    t = estimator_terms(_as_batch(matrix), q)
    return bool(np.all(t["actor_min"] <= t["ensemble"]) and np.all(t["ensemble"] <= t["actor_max"]))


def check_critic_bounds(matrix, q: float) -> bool:
    """median_i min_j Q_ij <= median_i v_i <= median_i max_j Q_ij."""
    t = estimator_terms(_as_batch(matrix), q)
    return bool(np.all(t["critic_min"] <= t["ensemble"])
                and np.all(t["ensemble"] <= t["critic_max"]))


@dataclass
class ErrorReport:
    """Estimation errors (batch means minus the reference) for both sandwiches."""

    critic_min: float   # multiple actors, per-row minimum critic
    critic_max: float
    actor_min: float    # minimum / maximum single actor, all critics
    actor_max: float
    mid: float          # the full ensemble estimate
    max_violation: float
    pointwise_violation: float
    n_ensembles: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= 1e-12 and self.pointwise_violation <= 1e-12


def _violation(lo, mid, hi) -> float:
    return float(max(0.0, np.max(lo - mid), np.max(mid - hi)))


def check_sandwich(ensembles, q: float, reference=0.0) -> ErrorReport:
    """Critic sandwich and actor sandwich on the batch means.

    ``reference`` (a scalar or one value per ensemble) stands for the value
    of the optimal policy; every term subtracts the same mean, so it has no
    effect on the ordering.
    """
    batch = _as_batch(ensembles)
    if batch.shape[0] == 0:
        raise ValueError("need at least one ensemble")
    t = estimator_terms(batch, q)
    ref = np.broadcast_to(np.asarray(reference, dtype=np.float64), t["ensemble"].shape)

    def err(x):
        return float(np.mean(x - ref))

    e = {k: err(t[k]) for k in ("ensemble", "critic_min", "critic_max", "actor_min", "actor_max")}
    mean_violation = max(_violation(e["critic_min"], e["ensemble"], e["critic_max"]),
                         _violation(e["actor_min"], e["ensemble"], e["actor_max"]))
    point_violation = max(_violation(t["critic_min"], t["ensemble"], t["critic_max"]),
                          _violation(t["actor_min"], t["ensemble"], t["actor_max"]))
    return ErrorReport(e["critic_min"], e["critic_max"], e["actor_min"], e["actor_max"],
                       e["ensemble"], mean_violation, point_violation, batch.shape[0])


# ------------------------------------------------------------ variance checks

@dataclass
class VarianceReport:
    var_single_actor: float
    var_median_actors: float
    var_single_critic: float
    var_quantile_critics: float
    c_q_estimate: float
    epsilon_A: float
    epsilon_C: float
    actor_pass: bool
    critic_pass: bool
    degenerate: bool = False
    # per-member variances, for the max/min spread that the bounds constrain
    actor_variances: np.ndarray = field(default=None, repr=False)
    critic_variances: np.ndarray = field(default=None, repr=False)

    @property
    def actor_ratio(self) -> float:
        return self.var_median_actors / self.var_single_actor if self.var_single_actor else 1.0

    @property
    def critic_ratio(self) -> float:
        return (self.var_quantile_critics / self.var_single_critic
                if self.var_single_critic else 1.0)

    @property
    def actor_spread(self) -> float:
        v = self.actor_variances
        return float(v.max() / v.min()) if v.min() > 0 else math.nan

    @property
    def critic_spread(self) -> float:
        v = self.critic_variances
        return float(v.max() / v.min()) if v.min() > 0 else math.nan


def _draw_chunk(job):
    spec, critic_spec, n_actors, n_critics, size, seed_a, seed_c = job
    return (draw(spec, (size, n_actors), np.random.default_rng(seed_a)),
            draw(critic_spec, (size, n_critics), np.random.default_rng(seed_c)))


def mc_variance_check(spec: GenerationSpec, n_actors: int, n_critics: int, q: float,
                      replications: int, critic_spec: GenerationSpec | None = None,
                      workers: int = 1) -> VarianceReport:
    """Monte-Carlo comparison of aggregated against single-member variances.

    Per replication, ``n_actors`` per-actor values and ``n_critics`` critic
    values are drawn independently.  The aggregate is compared with *every*
    single member; a flag passes when the aggregate's variance is no larger
    than the smallest member variance.  ``critic_spec`` lets the critic part
    use a different generator (e.g. a positive mean so that ``c_q`` is
    meaningful); it defaults to ``spec``.  ``workers > 1`` draws the
    chunks in separate processes; results do not depend on it.
    """
    if replications < MIN_REPLICATIONS:
        raise ValueError(f"replications must be at least {MIN_REPLICATIONS}")
    if n_actors < 1 or n_critics < 1:
        raise ValueError("ensemble sizes must be positive")
    if workers < 1:
        raise ValueError("workers must be positive")
    critic_spec = critic_spec or spec
    # The partition into chunks (and each chunk's seeds) depends only on the
    # replication count, so any worker count reproduces the same draws.
    sizes = [min(CHUNK, replications - start) for start in range(0, replications, CHUNK)]
    seeds = np.random.SeedSequence(spec.seed).spawn(2 * len(sizes))
    jobs = [(spec, critic_spec, n_actors, n_critics, size, seeds[2 * k], seeds[2 * k + 1])
            for k, size in enumerate(sizes)]
    if workers == 1 or len(jobs) == 1:
        parts = [_draw_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_draw_chunk, jobs))
    actors = np.concatenate([a for a, _ in parts])
    critics = np.concatenate([c for _, c in parts])

    actor_vars = actors.var(axis=0, ddof=1)
    critic_vars = critics.var(axis=0, ddof=1)
    var_median = float(np.var(median(actors, axis=-1), ddof=1))
    quant = quantile(critics, q, axis=-1)
    var_quant = float(np.var(quant, ddof=1))

    mean_values = float(critics.mean())
    if abs(mean_values) > 10 * critics.std() / math.sqrt(critics.size) and abs(mean_values) > 1e-12:
        c_q = float(np.mean(quant)) / mean_values
    else:
        c_q = math.nan
    eps_c = n_critics / c_q ** 2 if c_q == c_q and c_q != 0 else math.nan
    degenerate = bool(actor_vars.min() == 0 or critic_vars.min() == 0)
    return VarianceReport(
        var_single_actor=float(actor_vars.mean()),
        var_median_actors=var_median,
        var_single_critic=float(critic_vars.mean()),
        var_quantile_critics=var_quant,
        c_q_estimate=c_q,
        epsilon_A=float(n_actors),
        epsilon_C=eps_c,
        actor_pass=bool(var_median <= actor_vars.min() * (1 + 1e-12)),
        critic_pass=bool(var_quant <= critic_vars.min() * (1 + 1e-12)),
        degenerate=degenerate,
        actor_variances=actor_vars,
        critic_variances=critic_vars,
    )


# -------------------------------------------------- order-statistic oracle

def frozen_distribution(spec: GenerationSpec):
    """The scipy distribution of one entry for the i.i.d. families."""
    m, s = spec.mean, spec.std
    if spec.family == "normal":
        return stats.norm(m, s)
    if spec.family == "uniform":
        half = s * math.sqrt(3.0)
        return stats.uniform(m - half, 2 * half)
    if spec.family == "exponential":
        return stats.expon(m - s, s)
    raise ValueError(f"no closed-form oracle for family {spec.family!r}")


def _bounds(dist):
    return float(dist.ppf(1e-13)), float(dist.ppf(1 - 1e-13))


def _log_coef(n: int, a: int, b: int, c: int) -> float:
    """log of n! / (a! b! c!)."""
    return (special.gammaln(n + 1) - special.gammaln(a + 1) - special.gammaln(b + 1)
            - special.gammaln(c + 1))


def order_statistic_moment(dist, n: int, r: int, power: int = 1) -> float:
    """E[X_(r)^power] for the r-th smallest (1-based) of n i.i.d. draws."""
    lc = _log_coef(n, r - 1, 0, n - r)
    lo, hi = _bounds(dist)

    def integrand(x):
        F = dist.cdf(x)
        return x ** power * math.exp(lc + (r - 1) * _log(F) + (n - r) * _log(1 - F)) * dist.pdf(x)

    val, _ = integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-11, epsrel=1e-10)
    return val


def adjacent_cross_moment(dist, n: int, r: int, points: int = 40_001) -> float:
    """E[X_(r) X_(r+1)] from the joint density of two neighbouring order statistics.

    The inner integral over ``y > x`` is accumulated on a fine grid
    (total minus a cumulative Simpson sum) and the outer one uses Simpson
    on the same grid; this is far faster than nested adaptive quadrature
    and accurate to well below the Monte-Carlo tolerances it serves.
    """
    lc = _log_coef(n, r - 1, 0, n - r - 1)
    lo, hi = _bounds(dist)
    x = np.linspace(lo, hi, points)
    F, f = dist.cdf(x), dist.pdf(x)
    with np.errstate(divide="ignore"):
        upper = x * np.exp((n - r - 1) * np.log1p(-F)) * f if n - r - 1 else x * f
        lower = x * np.exp(lc + (r - 1) * np.log(F)) * f if r - 1 else x * math.exp(lc) * f
    # inner[k] = integral of upper over [x_k, hi]
    running = integrate.cumulative_simpson(upper, x=x, initial=0.0)
    inner = running[-1] - running
    return float(integrate.simpson(lower * inner, x=x))


def _log(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def quantile_estimator_moments(dist, n: int, q: float) -> tuple[float, float]:
    """Mean and variance of the interpolated sample q-quantile of n i.i.d. draws.

    The estimator is ``(1 - w) X_(k) + w X_(k+1)`` with ``h = q (n - 1)``,
    ``k = floor(h) + 1`` (1-based) and ``w = h - floor(h)``.
    """
    h = q * (n - 1)
    k = math.floor(h) + 1
    w = h - math.floor(h)
    m1 = order_statistic_moment(dist, n, k)
    s1 = order_statistic_moment(dist, n, k, 2)
    if w == 0:
        return m1, s1 - m1 ** 2
    m2 = order_statistic_moment(dist, n, k + 1)
    s2 = order_statistic_moment(dist, n, k + 1, 2)
    c12 = adjacent_cross_moment(dist, n, k)
    mean = (1 - w) * m1 + w * m2
    second = (1 - w) ** 2 * s1 + w ** 2 * s2 + 2 * w * (1 - w) * c12
    return mean, second - mean ** 2


@functools.lru_cache(maxsize=None)
def median_variance_ratio_oracle(n: int) -> float:
    """Var[sample median of n standard normals] / Var[one draw]."""
    return quantile_estimator_moments(stats.norm(), n, 0.5)[1]


@functools.lru_cache(maxsize=None)
def c_q_oracle(spec: GenerationSpec, n: int, q: float) -> float:
    """Limit of the Monte-Carlo c_q estimate as replications grow."""
    if spec.seed:
        return c_q_oracle(dataclasses.replace(spec, seed=0), n, q)
    dist = frozen_distribution(spec)
    return quantile_estimator_moments(dist, n, q)[0] / float(dist.mean())


# ---------------------------------------------------------------- the suite

CSV_COLUMNS = ("check", "family", "n_actors", "n_critics", "q", "samples", "e_critic_min",
               "e_mid", "e_critic_max", "e_actor_min", "e_actor_max", "max_violation",
               "var_single", "var_aggregate", "ratio", "ratio_oracle", "c_q", "c_q_oracle",
               "epsilon", "variance_spread", "asserted", "passed")


@dataclass
class SuiteResult:
    passed: bool
    report: str
    csv: str
    rows: list[dict]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if v != v else repr(v)
    return str(v)


def run_suite(n_actors=(1, 2, 5, 10), n_critics=(1, 2, 5, 10), qs=(0.0, 0.2, 0.5, 1.0),
              replications: int = 100_000, seed: int = 0,
              sandwich_total: int = 100_000, workers: int = 1) -> SuiteResult:
    """Every check over the requested grid; assertable checks decide ``passed``.

    ``sandwich_total`` random ensembles are split evenly over the
    ``(N_A, N_C)`` cells and each one is checked at every ``q``.  Variance
    checks assert only for the symmetric i.i.d. families; skewed and
    correlated generators are reported.
    """
    if replications < MIN_REPLICATIONS:
        raise ValueError(f"replications must be at least {MIN_REPLICATIONS}")
    for q in qs:
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {q}")
    per_cell = max(1, math.ceil(sandwich_total / (len(n_actors) * len(n_critics))))
    rows: list[dict] = []
    lines = ["Ensemble estimator checks", "=" * 25, ""]
    seeds = iter(np.random.SeedSequence(seed).spawn(10_000))

    lines.append(f"Sandwich checks ({per_cell} random ensembles per (N_A, N_C) cell, "
                 f"normal entries, q in {list(qs)})")
    worst = 0.0
    for na in n_actors:
        for nc in n_critics:
            rng = np.random.default_rng(next(seeds))
            batch = draw(GenerationSpec(), (per_cell, na, nc), rng)
            ref = rng.standard_normal(per_cell)
            for q in qs:
                # the pointwise part of the report covers both pointwise bounds
                rep = check_sandwich(batch, q, ref)
                violation = max(rep.max_violation, rep.pointwise_violation)
                worst = max(worst, violation)
                rows.append(dict(check="sandwich", family="normal", n_actors=na, n_critics=nc,
                                 q=q, samples=per_cell, e_critic_min=rep.critic_min,
                                 e_mid=rep.mid, e_critic_max=rep.critic_max,
                                 e_actor_min=rep.actor_min, e_actor_max=rep.actor_max,
                                 max_violation=violation, asserted=True, passed=rep.passed))
    n_bad = sum(1 for r in rows if r["check"] == "sandwich" and not r["passed"])
    lines.append(f"  cells: {len(rows)}, failing: {n_bad}, worst violation: {worst:.3g}")
    lines.append("")

    lines.append(f"Variance checks ({replications} replications)")
    families = [GenerationSpec("normal"), GenerationSpec("uniform"),
                GenerationSpec("lognormal"), GenerationSpec("exponential"),
                GenerationSpec("correlated", rho=0.5)]
    for gen in families:
        asserted = gen.iid_symmetric
        tag = "asserted" if asserted else "reported only"
        for na in n_actors:
            spec = GenerationSpec(gen.family, 0.0, 1.0, int(next(seeds).generate_state(1)[0]),
                                  gen.rho)
            rep = mc_variance_check(spec, na, 1, 0.5, replications, workers=workers)
            oracle = median_variance_ratio_oracle(na) if gen.family == "normal" else None
            rows.append(dict(check="actor_variance", family=gen.family, n_actors=na,
                             samples=replications, var_single=rep.var_single_actor,
                             var_aggregate=rep.var_median_actors, ratio=rep.actor_ratio,
                             epsilon=rep.epsilon_A, variance_spread=rep.actor_spread,
                             ratio_oracle=oracle, asserted=asserted, passed=rep.actor_pass))
            extra = f", oracle {oracle:.4f}" if oracle is not None else ""
            lines.append(f"  actors  {gen.family:<11} N_A={na:<3} Var[median]/Var[single] = "
                         f"{rep.actor_ratio:.4f}{extra} ({tag}: "
                         f"{'ok' if rep.actor_pass else 'violated'})")
        for nc in n_critics:
            for q in qs:
                spec = GenerationSpec(gen.family, 5.0, 1.0,
                                      int(next(seeds).generate_state(1)[0]), gen.rho)
                rep = mc_variance_check(spec, 1, nc, q, replications, workers=workers)
                oracle = None
                if gen.family in ("normal", "uniform", "exponential"):
                    oracle = c_q_oracle(spec, nc, q)
                rows.append(dict(check="critic_variance", family=gen.family, n_critics=nc, q=q,
                                 samples=replications, var_single=rep.var_single_critic,
                                 var_aggregate=rep.var_quantile_critics,
                                 ratio=rep.critic_ratio, c_q=rep.c_q_estimate,
                                 c_q_oracle=oracle, epsilon=rep.epsilon_C,
                                 variance_spread=rep.critic_spread, asserted=asserted,
                                 passed=rep.critic_pass))
                extra = f" (oracle {oracle:.4f})" if oracle is not None else ""
                lines.append(f"  critics {gen.family:<11} N_C={nc:<3} q={q:<4} "
                             f"Var ratio = {rep.critic_ratio:.4f}, c_q = {rep.c_q_estimate:.4f}"
                             f"{extra}, eps_C = {rep.epsilon_C:.3f} ({tag}: "
                             f"{'ok' if rep.critic_pass else 'violated'})")
    failed = [r for r in rows if r["asserted"] and not r["passed"]]
    lines.append("")
    lines.append(f"{len(rows)} checks, {sum(r['asserted'] for r in rows)} asserted, "
                 f"{len(failed)} failed: {'PASS' if not failed else 'FAIL'}")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in CSV_COLUMNS])
    return SuiteResult(not failed, "\n".join(lines) + "\n", buf.getvalue(), rows)
