"""Cox proportional-hazards fitting and the Wilcoxon signed-rank test."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import (
    LengthMismatch,
    NoEvents,
    NonConvergence,
    SingularInformation,
)

WALD_Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class SurvivalRecord:
    id: str
    time: float  # follow-up, weeks
    event: int   # 0 censored, 1 died
    covariates: dict[str, float]

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"record {self.id}: time must be > 0")
        if self.event not in (0, 1):
            raise ValueError(f"record {self.id}: event must be 0 or 1")


@dataclass(frozen=True)
class CoxFit:
    covariates: tuple[str, ...]
    beta: np.ndarray
    se: np.ndarray
    hr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    p: np.ndarray
    log_partial_likelihood: float
    null_log_likelihood: float
    iterations: int
    converged: bool

    def rows(self) -> list[dict[str, float | str]]:
        out = []
        for i, name in enumerate(self.covariates):
            out.append({
                "variable": name,
                "beta": float(self.beta[i]),
                "se": float(self.se[i]),
                "hr": float(self.hr[i]),
                "ci_low": float(self.ci_low[i]),
                "ci_high": float(self.ci_high[i]),
                "p": float(self.p[i]),
            })
        return out


def _design(records: list[SurvivalRecord], covariate_names: list[str]):
    times = np.array([r.time for r in records], dtype=np.float64)
    events = np.array([r.event for r in records], dtype=np.int64)
    rows = []
    for r in records:
        try:
            rows.append([float(r.covariates[name]) for name in covariate_names])
        except KeyError as exc:
            raise ValueError(f"record {r.id} is missing covariate {exc}") from exc
    x = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    return times, events, x


def _partial_likelihood(beta: np.ndarray, times: np.ndarray, events: np.ndarray,
                        x: np.ndarray, ties: str):
    """Log partial likelihood with gradient and observed information.

    Walks event times in descending order, accumulating risk-set sums of
    exp(eta), x exp(eta) and x x^T exp(eta). Breslow uses the full risk set
    for every event in a tie group; Efron steps the tied events' own mass
    out of the denominator.
    """
    n, p = x.shape
    eta = x @ beta
    shift = eta.max()  # guards exp overflow; cancels in all ratios
    w = np.exp(eta - shift)
    wx = w[:, None] * x
    wxx = wx[:, :, None] * x[:, None, :]

    order = np.argsort(-times, kind="stable")
    loglik = 0.0
    grad = np.zeros(p)
    info = np.zeros((p, p))
    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))

    i = 0
    while i < n:
        j = i
        t = times[order[i]]
        while j < n and times[order[j]] == t:
            j += 1
        group = order[i:j]
        s0 += w[group].sum()
        s1 += wx[group].sum(axis=0)
        s2 += wxx[group].sum(axis=0)

        dead = group[events[group] == 1]
        d = len(dead)
        if d:
            s_events = x[dead].sum(axis=0)
            loglik += float(s_events @ beta)
            if ties == "breslow":
                loglik -= d * (math.log(s0) + shift)
                grad += s_events - d * s1 / s0
                info += d * (s2 / s0 - np.outer(s1 / s0, s1 / s0))
            else:  # efron
                d0 = w[dead].sum()
                d1 = wx[dead].sum(axis=0)
                d2 = wxx[dead].sum(axis=0)
                for k in range(d):
                    f = k / d
                    s0k = s0 - f * d0
                    s1k = s1 - f * d1
                    s2k = s2 - f * d2
                    loglik -= math.log(s0k) + shift
                    grad += s_events / d - s1k / s0k
                    info += s2k / s0k - np.outer(s1k / s0k, s1k / s0k)
        i = j
    return loglik, grad, info


def cox_fit(records: list[SurvivalRecord], covariate_names: list[str],
            ties: str = "breslow", max_iter: int = 50,
            score_tol: float = 1e-8, step_tol: float = 1e-10,
            standardize: bool = False) -> CoxFit:
    """Newton-Raphson maximum partial likelihood from beta = 0.

    Step-halving backs off any iteration that decreases the likelihood.
    Convergence requires the score to vanish (max |score| < score_tol) or the
    step to collapse (norm < step_tol); exhausting max_iter raises
    NonConvergence, which is the signature of monotone likelihood.
    ``standardize`` rescales covariates internally for conditioning only; the
    reported coefficients are always in original units.
    """
    if ties not in ("breslow", "efron"):
        raise ValueError("ties must be 'breslow' or 'efron'")
    times, events, x = _design(records, covariate_names)
    n, p = x.shape
    if events.sum() == 0:
        raise NoEvents("at least one observed event is required")
    if n <= p:
        raise ValueError(f"need more records ({n}) than covariates ({p})")

    scale = np.ones(p)
    if standardize:
        scale = x.std(axis=0)
        if np.any(scale == 0):
            raise SingularInformation("constant covariate has no information")
        x = (x - x.mean(axis=0)) / scale

    beta = np.zeros(p)
    loglik, grad, info = _partial_likelihood(beta, times, events, x, ties)
    null_loglik = loglik
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SingularInformation(f"information matrix is singular: {exc}") from exc
        if np.max(np.abs(grad)) < score_tol:
            converged = True
            break
        # step halving on likelihood decrease
        factor = 1.0
        for _ in range(40):
            candidate = beta + factor * step
            new_loglik, new_grad, new_info = _partial_likelihood(
                candidate, times, events, x, ties)
            if new_loglik >= loglik - 1e-13:
                break
            factor /= 2.0
        beta, loglik, grad, info = candidate, new_loglik, new_grad, new_info
        if np.linalg.norm(factor * step) < step_tol:
            converged = np.max(np.abs(grad)) < math.sqrt(score_tol)
            break
    else:
        raise NonConvergence(
            f"no convergence in {max_iter} iterations "
            f"(max |score| = {np.max(np.abs(grad)):.3g}); "
            "check for monotone likelihood / complete separation"
        )
    if not converged and np.max(np.abs(grad)) < score_tol:
        converged = True
    if not converged:
        raise NonConvergence("Newton step collapsed before the score vanished")

    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(f"information matrix is singular: {exc}") from exc
    se = np.sqrt(np.diag(cov))

    beta = beta / scale
    se = se / scale
    z = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    pvals = np.array([math.erfc(abs(v) / math.sqrt(2.0)) for v in z])
    return CoxFit(
        covariates=tuple(covariate_names),
        beta=beta,
        se=se,
        hr=np.exp(beta),
        ci_low=np.exp(beta - WALD_Z_95 * se),
        ci_high=np.exp(beta + WALD_Z_95 * se),
        p=pvals,
        log_partial_likelihood=float(loglik),
        null_log_likelihood=float(null_loglik),
        iterations=iterations,
        converged=converged,
    )


@dataclass(frozen=True)
class SuiteEntry:
    covariates: tuple[str, ...]
    fit: CoxFit | None
    error: str | None


def cox_model_suite(records: list[SurvivalRecord],
                    model_specs: list[list[str]], **fit_kwargs) -> list[SuiteEntry]:
    """Fit a list of covariate specs; failing specs are flagged, not fatal."""
    out = []
    for spec in model_specs:
        try:
            fit = cox_fit(records, list(spec), **fit_kwargs)
            out.append(SuiteEntry(tuple(spec), fit, None))
        except (NoEvents, SingularInformation, NonConvergence, ValueError) as exc:
            out.append(SuiteEntry(tuple(spec), None, f"{type(exc).__name__}: {exc}"))
    return out


def write_suite_report(entries: list[SuiteEntry], path: str | Path) -> None:
    """Report CSV: one row per (model, variable) with p and HR (95% CI)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "variable", "p_value", "hr", "ci_low", "ci_high",
                         "beta", "se", "status"])
        for entry in entries:
            model = "+".join(entry.covariates)
            if entry.fit is None:
                writer.writerow([model, "", "", "", "", "", "", "", entry.error])
                continue
            for row in entry.fit.rows():
                writer.writerow([
                    model, row["variable"], repr(row["p"]), repr(row["hr"]),
                    repr(row["ci_low"]), repr(row["ci_high"]),
                    repr(row["beta"]), repr(row["se"]), "ok",
                ])


# --- Wilcoxon signed-rank ---------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+: sum of ranks of positive differences
    p_value: float
    n: int            # pairs remaining after dropping zero differences
    method: str       # "exact" or "normal"
    all_zero: bool = False


def _exact_two_sided_p(rank2: np.ndarray, w2: int) -> float:
    """Two-sided sign-flip p-value via the exact W+ distribution.

    ``rank2`` holds doubled ranks (integers even with midrank ties), so the
    distribution of the doubled statistic is over integers and the tail
    comparison is exact. p = P(|W - E| >= |w - E|).
    """
    total = int(rank2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in rank2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r else counts
        counts = counts + shifted
    e2_twice = total  # 2 * E[W2] = total, so compare |2w - total|
    distance = np.abs(2 * np.arange(total + 1) - e2_twice)
    observed = abs(2 * w2 - e2_twice)
    return float(counts[distance >= observed].sum() / counts.sum())


def wilcoxon_signed_rank(a, b, mode: str = "auto") -> WilcoxonResult:
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped; tied magnitudes share average ranks. The
    exact distribution (all sign assignments) is used for n <= 20 in auto
    mode, otherwise a normal approximation with tie and continuity
    corrections. All-zero differences return p = 1 with a flag.
    """
    if mode not in ("auto", "exact", "normal-approx"):
        raise ValueError("mode must be auto, exact or normal-approx")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch("paired samples must be 1-D and of equal length")
    diff = a - b
    diff = diff[diff != 0]
    n = diff.size
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, n=0,
                              method="degenerate", all_zero=True)

    ranks = rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())

    use_exact = mode == "exact" or (mode == "auto" and n <= 20)
    if use_exact and n <= 62:  # int64-safe range for the exact distribution
        rank2 = np.round(2 * ranks).astype(np.int64)
        w2 = int(round(2 * w_plus))
        p = _exact_two_sided_p(rank2, w2)
        return WilcoxonResult(statistic=w_plus, p_value=p, n=n, method="exact")

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(diff), return_counts=True)
    tie_term = float((tie_counts.astype(np.float64) ** 3 - tie_counts).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return WilcoxonResult(statistic=w_plus, p_value=1.0, n=n, method="normal")
    delta = w_plus - mean
    correction = 0.5 * np.sign(delta)
    z = (delta - correction) / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return WilcoxonResult(statistic=w_plus, p_value=p, n=n, method="normal")


# --- helpers ----------------------------------------------------------------

def dichotomize_mortality(records: list[SurvivalRecord],
                          horizon_weeks: float) -> list[tuple[str, int]]:
    """Binary status at a horizon: 0 deceased, 1 alive.

    Subjects censored before the horizon have unknown status and are dropped.
    """
    out = []
    for r in records:
        if r.time > horizon_weeks:
            out.append((r.id, 1))
        elif r.event == 1:
            out.append((r.id, 0))
    return out


def simulate_cohort(n: int, log_hr: float, seed: int,
                    covariate: str = "marker",
                    censor_time: float = 120.0) -> list[SurvivalRecord]:
    """Exponential-hazard cohort where the covariate multiplies the hazard.

    Useful for qualitative checks: fitting the cohort recovers a hazard ratio
    near exp(log_hr).
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, size=n)
    u = rng.uniform(size=n)
    base_rate = 1.0 / 60.0
    t = -np.log(u) / (base_rate * np.exp(log_hr * x))
    records = []
    for i in range(n):
        observed = min(float(t[i]), censor_time)
        records.append(SurvivalRecord(
            id=f"s{i:04d}",
            time=max(observed, 1e-6),
            event=int(t[i] <= censor_time),
            covariates={covariate: float(x[i])},
        ))
    return records


def read_survival_csv(path: str | Path) -> list[SurvivalRecord]:
    """Rows of id, time_weeks, event plus arbitrary numeric covariate columns."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            covariates = {
                key: float(value)
                for key, value in row.items()
                if key not in ("id", "time_weeks", "event") and value not in (None, "")
            }
            records.append(SurvivalRecord(
                id=row["id"],
                time=float(row["time_weeks"]),
                event=int(row["event"]),
                covariates=covariates,
            ))
    return records
