"""Statistical comparison toolkit: normality, variance homogeneity, mean
comparisons, and post-hoc pairwise tests.

Distribution tails are computed from special functions (regularized
incomplete beta/gamma, normal CDF); the studentized-range CDF integrates
the range-of-normal-order-statistics representation by adaptive
quadrature. The Wilcoxon rank-sum uses the exact permutation distribution
for small samples (midranks doubled to keep integer arithmetic) and the
tie-corrected normal approximation otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import betainc, gammaincc, ndtr, ndtri

from .errors import DataError

ALPHA = 0.05


@dataclass
class TestResult:
    name: str
    statistic: float
    p_value: float
    df: object = None  # float, (float, float), or None
    alpha: float = ALPHA
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-12 <= self.p_value <= 1 + 1e-12:
            raise DataError(f"p-value {self.p_value} outside [0, 1]")
        self.p_value = float(min(max(self.p_value, 0.0), 1.0))

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": self.df,
            "alpha": self.alpha,
            "significant": self.significant,
            "extras": self.extras,
        }


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail of Student's t via the regularized incomplete beta."""
    if not math.isfinite(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_sf(f: float, d1: float, d2: float) -> float:
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)))


def chi2_sf(x: float, df: float) -> float:
    return float(gammaincc(df / 2.0, x / 2.0))


def shapiro_wilk(x) -> TestResult:
    """W statistic and p-value via the standard regression approximation
    (valid for 3 <= n <= 5000)."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = len(x)
    if not 3 <= n <= 5000:
        raise DataError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[0] == x[-1]:
        raise DataError("Shapiro-Wilk is undefined for constant input")

    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    msq = float(np.dot(m, m))
    u = 1.0 / math.sqrt(n)
    a = np.empty(n, dtype=np.float64)
    cn = m[-1] / math.sqrt(msq)
    if n == 3:
        a[2] = math.sqrt(0.5)
        a[0] = -a[2]
        a[1] = 0.0
    else:
        an = (
            cn
            + 0.221157 * u
            - 0.147981 * u**2
            - 2.071190 * u**3
            + 4.434685 * u**4
            - 2.706056 * u**5
        )
        if n <= 5:
            phi = (msq - 2 * m[-1] ** 2) / (1 - 2 * an**2)
            a[1:-1] = m[1:-1] / math.sqrt(phi)
            a[-1] = an
            a[0] = -an
        else:
            cn1 = m[-2] / math.sqrt(msq)
            an1 = (
                cn1
                + 0.042981 * u
                - 0.293762 * u**2
                - 1.752461 * u**3
                + 5.682633 * u**4
                - 3.582633 * u**5
            )
            phi = (msq - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
            a[2:-2] = m[2:-2] / math.sqrt(phi)
            a[-1] = an
            a[-2] = an1
            a[0] = -an
            a[1] = -an1

    w_num = float(np.dot(a, x)) ** 2
    w_den = float(np.sum((x - x.mean()) ** 2))
    w = w_num / w_den
    w = min(w, 1.0)

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        p = min(max(p, 0.0), 1.0)
        return TestResult("shapiro_wilk", float(w), p, df=None)
    if n <= 11:
        g = -2.273 + 0.459 * n
        mu = 0.5440 - 0.39978 * n + 0.025054 * n**2 - 0.0006714 * n**3
        sigma = math.exp(1.3822 - 0.77857 * n + 0.062767 * n**2 - 0.0020322 * n**3)
        arg = g - math.log(1.0 - w)
        if arg <= 0:
            return TestResult("shapiro_wilk", float(w), 0.0, df=None)
        z = (-math.log(arg) - mu) / sigma
    else:
        ln_n = math.log(n)
        mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n**2 + 0.0038915 * ln_n**3
        sigma = math.exp(-0.4803 - 0.082676 * ln_n + 0.0030302 * ln_n**2)
        z = (math.log(1.0 - w) - mu) / sigma
    p = float(1.0 - ndtr(z))
    return TestResult("shapiro_wilk", float(w), p, df=None)


def bartlett(groups) -> TestResult:
    """Chi-square statistic for variance homogeneity across groups."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise DataError("Bartlett needs >= 2 groups with >= 2 values each")
    variances = [float(g.var(ddof=1)) for g in groups]
    if any(v == 0.0 for v in variances):
        raise DataError("Bartlett is undefined with a zero-variance group")
    ns = np.array([len(g) for g in groups], dtype=np.float64)
    big_n = float(ns.sum())
    sp2 = float(np.sum((ns - 1) * variances) / (big_n - k))
    num = (big_n - k) * math.log(sp2) - float(
        np.sum((ns - 1) * np.log(variances))
    )
    corr = 1.0 + (float(np.sum(1.0 / (ns - 1))) - 1.0 / (big_n - k)) / (3.0 * (k - 1))
    stat = num / corr
    return TestResult("bartlett", float(stat), chi2_sf(stat, k - 1), df=float(k - 1))


def anova_oneway(groups) -> TestResult:
    """One-way fixed-effects F test on group means."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise DataError("ANOVA needs >= 2 groups with >= 2 values each")
    all_vals = np.concatenate(groups)
    grand = float(all_vals.mean())
    big_n = len(all_vals)
    ss_between = float(sum(len(g) * (g.mean() - grand) ** 2 for g in groups))
    ss_within = float(sum(np.sum((g - g.mean()) ** 2) for g in groups))
    df1, df2 = float(k - 1), float(big_n - k)
    if ss_within == 0.0 and ss_between == 0.0:
        return TestResult("anova_oneway", 0.0, 1.0, df=(df1, df2))
    if ss_within == 0.0:
        return TestResult("anova_oneway", float("inf"), 0.0, df=(df1, df2))
    f = (ss_between / df1) / (ss_within / df2)
    return TestResult("anova_oneway", float(f), f_sf(f, df1, df2), df=(df1, df2))


def _srange_outer_density(s: float, df: float) -> float:
    """Density of sqrt(chi^2_df / df)."""
    if s <= 0:
        return 0.0
    log_dens = (
        math.log(2.0)
        + (df / 2.0) * math.log(df / 2.0)
        - math.lgamma(df / 2.0)
        + (df - 1.0) * math.log(s)
        - df * s * s / 2.0
    )
    return math.exp(log_dens)


def _range_cdf(r: float, k: int) -> float:
    """CDF of the range of k standard normal order statistics."""
    if r <= 0:
        return 0.0

    def integrand(z):
        return (
            math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            * (ndtr(z) - ndtr(z - r)) ** (k - 1)
        )

    val, _ = integrate.quad(integrand, -9.0, 9.0 + r, limit=200, epsabs=1e-11)
    return min(k * val, 1.0)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for the studentized range by adaptive quadrature over the
    scale-mixture representation; accuracy target 1e-4."""
    if q <= 0:
        return 0.0
    if df > 1e5:
        return _range_cdf(q, k)

    def integrand(s):
        return _srange_outer_density(s, df) * _range_cdf(q * s, k)

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=200, epsabs=1e-7)
    return min(max(val, 0.0), 1.0)


def studentized_range_critical(alpha: float, k: int, df: float) -> float:
    """q such that P(Q > q) = alpha."""
    target = 1.0 - alpha
    return float(
        optimize.brentq(
            lambda q: studentized_range_cdf(q, k, df) - target, 0.05, 60.0, xtol=1e-6
        )
    )


def tukey_hsd(groups, alpha: float = ALPHA) -> list:
    """All pairwise mean comparisons against studentized-range criticals
    (Tukey-Kramer standard errors for unequal group sizes)."""
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    if k < 2 or any(len(g) < 2 for g in groups):
        raise DataError("Tukey HSD needs >= 2 groups with >= 2 values each")
    ns = [len(g) for g in groups]
    big_n = sum(ns)
    df = float(big_n - k)
    mse = float(sum(np.sum((g - g.mean()) ** 2) for g in groups)) / df
    results = []
    for i in range(k):
        for j in range(i + 1, k):
            diff = float(groups[i].mean() - groups[j].mean())
            if mse == 0.0:
                q = 0.0 if diff == 0.0 else float("inf")
                p = 1.0 if diff == 0.0 else 0.0
            else:
                se = math.sqrt(mse / 2.0 * (1.0 / ns[i] + 1.0 / ns[j]))
                q = abs(diff) / se
                p = 1.0 - studentized_range_cdf(q, k, df)
            results.append(
                TestResult(
                    "tukey_hsd",
                    float(q),
                    float(p),
                    df=df,
                    alpha=alpha,
                    extras={"pair": (i, j), "mean_diff": diff, "n_groups": k},
                )
            )
    return results


def welch_t(x, y) -> TestResult:
    """Welch's unequal-variance t with Welch-Satterthwaite df."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 or len(y) < 2:
        raise DataError("Welch's t needs >= 2 values per sample")
    vx = float(x.var(ddof=1)) / len(x)
    vy = float(y.var(ddof=1)) / len(y)
    diff = float(x.mean() - y.mean())
    if vx + vy == 0.0:
        if diff == 0.0:
            return TestResult("welch_t", 0.0, 1.0, df=float(len(x) + len(y) - 2))
        return TestResult(
            "welch_t", math.copysign(float("inf"), diff), 0.0,
            df=float(len(x) + len(y) - 2),
        )
    t = diff / math.sqrt(vx + vy)
    df = (vx + vy) ** 2 / (
        vx**2 / (len(x) - 1) + vy**2 / (len(y) - 1)
    )
    return TestResult("welch_t", float(t), t_sf_two_sided(t, df), df=float(df))


def _midranks_doubled(values) -> np.ndarray:
    """Midranks scaled by 2 so ties stay integral."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    doubled = np.empty(len(values), dtype=np.int64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        doubled[order[i : j + 1]] = (i + j) + 2  # 2 * midrank
        i = j + 1
    return doubled


def _exact_ranksum_counts(doubled_ranks, nx):
    """Subset-size/sum table: counts[t] = number of nx-subsets of the
    doubled ranks with sum t, via dynamic programming."""
    total = int(doubled_ranks.sum())
    table = np.zeros((nx + 1, total + 1), dtype=np.float64)
    table[0, 0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        for c in range(min(nx, len(doubled_ranks)), 0, -1):
            table[c, r:] += table[c - 1, : total + 1 - r]
    return table[nx]


def wilcoxon_ranksum(x, y, alternative: str = "two-sided") -> TestResult:
    """Rank-sum test: exact permutation null when n_x + n_y <= 20, normal
    approximation with tie correction otherwise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = len(x), len(y)
    if nx < 1 or ny < 1:
        raise DataError("rank-sum needs >= 1 value per sample")
    combined = np.concatenate([x, y])
    doubled = _midranks_doubled(combined)
    w2 = int(doubled[:nx].sum())  # 2 * rank sum of x
    n = nx + ny
    mu2 = nx * (n + 1)  # 2 * null mean

    if n <= 20:
        counts = _exact_ranksum_counts(doubled, nx)
        total = counts.sum()
        sums = np.arange(len(counts))
        if alternative == "two-sided":
            p = counts[np.abs(sums - mu2) >= abs(w2 - mu2)].sum() / total
        elif alternative == "less":
            p = counts[sums <= w2].sum() / total
        else:
            p = counts[sums >= w2].sum() / total
        return TestResult(
            "wilcoxon_ranksum", w2 / 2.0, float(p), df=None,
            extras={"method": "exact", "alternative": alternative},
        )

    tie_sizes = np.unique(doubled, return_counts=True)[1].astype(np.float64)
    tie_term = float(np.sum(tie_sizes**3 - tie_sizes)) / (n * (n - 1.0))
    var_w = nx * ny / 12.0 * ((n + 1.0) - tie_term)
    if var_w <= 0:
        return TestResult(
            "wilcoxon_ranksum", w2 / 2.0, 1.0, df=None,
            extras={"method": "normal", "alternative": alternative},
        )
    z = (w2 - mu2) / 2.0 / math.sqrt(var_w)
    if alternative == "two-sided":
        p = 2.0 * (1.0 - ndtr(abs(z)))
    elif alternative == "less":
        p = float(ndtr(z))
    else:
        p = float(1.0 - ndtr(z))
    return TestResult(
        "wilcoxon_ranksum", w2 / 2.0, float(min(p, 1.0)), df=None,
        extras={"method": "normal", "alternative": alternative, "z": float(z)},
    )


def compare_pipelines(samples_a, samples_b, alpha: float = ALPHA) -> TestResult:
    """Welch when both samples pass the normality screen at `alpha`,
    Wilcoxon rank-sum otherwise; the routing decision is recorded."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if len(a) < 3 or len(b) < 3:
        raise DataError("pipeline comparison needs >= 3 values per sample")
    trail = {}
    normal = True
    for tag, sample in (("a", a), ("b", b)):
        try:
            sw = shapiro_wilk(sample)
            trail[f"shapiro_{tag}"] = {"W": sw.statistic, "p": sw.p_value}
            normal = normal and sw.p_value > alpha
        except DataError:
            # constant samples carry no evidence of non-normality either way
            trail[f"shapiro_{tag}"] = {"W": None, "p": None}
    if normal:
        result = welch_t(a, b)
    else:
        result = wilcoxon_ranksum(a, b)
    result.extras["routing"] = trail
    result.extras["routed_to"] = result.name
    return result
