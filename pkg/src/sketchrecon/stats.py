"""Feature significance testing and robust scaling.

The rank test computes its exact conditional permutation distribution
(tie-aware, via a subset-sum count over doubled midranks) whenever
n_a * n_b <= 400, and falls back to the tie- and continuity-corrected
normal approximation for larger samples. Two-sided p-values double the
smaller tail and clamp at 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DomainError, EmptySample
from .features import FEATURE_NAMES, FeatureMatrix, _GEO_FEATURES, _STY_FEATURES

EXACT_LIMIT = 400   # exact distribution while n_a * n_b <= this


def _midranks(pooled: np.ndarray) -> np.ndarray:
    """Fractional ranks (ties get the mean of their rank span), 1-based."""
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.shape[0])
    i = 0
    while i < pooled.shape[0]:
        j = i
        while j + 1 < pooled.shape[0] and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_tails(doubled: np.ndarray, n_a: int, s_obs: int) -> tuple[float, float]:
    """P(sum <= s_obs) and P(sum >= s_obs) for the doubled-midrank sum of a
    uniformly random n_a-subset, by exact subset counting."""
    total_s = int(doubled.sum())
    ways = np.zeros((n_a + 1, total_s + 1), dtype=np.int64)
    ways[0, 0] = 1
    for d in doubled:
        d = int(d)
        for k in range(n_a, 0, -1):
            if d == 0:
                ways[k] += ways[k - 1]
            else:
                ways[k, d:] += ways[k - 1, :-d]
    counts = ways[n_a]
    denom = int(counts.sum())
    lo = int(counts[: s_obs + 1].sum())
    hi = int(counts[s_obs:].sum())
    return lo / denom, hi / denom


def mann_whitney_u(sample_a, sample_b) -> dict[str, float]:
    """Two-sided Mann-Whitney U test.

    Returns {"u": min(U_a, U_b), "p": two-sided p-value}. Exact
    enumeration (tie-aware) when n_a * n_b <= 400, otherwise the normal
    approximation with tie and continuity corrections.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(ranks[:n_a].sum())
    u_a = r_a - n_a * (n_a + 1) / 2.0
    u_b = n_a * n_b - u_a
    u = min(u_a, u_b)

    if n_a * n_b <= EXACT_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        s_obs = int(round(2.0 * r_a))
        lo, hi = _exact_tails(doubled, n_a, s_obs)
        p = min(1.0, 2.0 * min(lo, hi))
        return {"u": u, "p": p}

    n = n_a + n_b
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(((tie_counts ** 3) - tie_counts).sum()) / (n * (n - 1))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0.0:
        return {"u": u, "p": 1.0}
    num = u_a - n_a * n_b / 2.0
    num -= 0.5 * np.sign(num)
    z = num / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return {"u": u, "p": p}


def benjamini_hochberg(p_values, alpha: float) -> np.ndarray:
    """Step-up false-discovery-rate control; returns per-index keep flags."""
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise DomainError("p-values must lie in [0, 1]")
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must lie in (0, 1)")
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    order = np.argsort(p, kind="stable")
    sorted_p = p[order]
    thresholds = (np.arange(1, m + 1) / m) * alpha
    passing = np.nonzero(sorted_p <= thresholds)[0]
    if passing.size == 0:
        return np.zeros(m, dtype=bool)
    cutoff = sorted_p[passing[-1]]
    return p <= cutoff


@dataclass(frozen=True)
class ScaleParams:
    """Per-feature 5th/95th percentiles fitted on training data."""

    p5: np.ndarray
    p95: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        span = self.p95 - self.p5
        out = np.zeros_like(values, dtype=np.float64)
        ok = span != 0.0
        out[:, ok] = (values[:, ok] - self.p5[ok]) / span[ok]
        return out

    def to_dict(self) -> dict:
        return {"p5": self.p5.tolist(), "p95": self.p95.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleParams":
        return cls(p5=np.asarray(d["p5"], dtype=np.float64),
                   p95=np.asarray(d["p95"], dtype=np.float64))


def robust_scale(values: np.ndarray) -> tuple[np.ndarray, ScaleParams]:
    """Scale columns by their 5th..95th percentile span (linear
    interpolation between order statistics). Constant columns map to 0.
    Values outside the span are not clamped."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateInput("robust_scale needs at least 2 rows")
    p5 = np.percentile(x, 5.0, axis=0)
    p95 = np.percentile(x, 95.0, axis=0)
    params = ScaleParams(p5=p5, p95=p95)
    return params.apply(x), params


@dataclass(frozen=True)
class FeatureSignificance:
    feature: str
    u_statistic: float
    p_value: float
    retained: bool


@dataclass(frozen=True)
class SignificanceReport:
    """Per-feature test results, sorted by ascending p-value."""

    entries: tuple[FeatureSignificance, ...]
    alpha: float

    def retained_features(self) -> list[str]:
        return [e.feature for e in self.entries if e.retained]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "features": [
                {"feature": e.feature, "u": e.u_statistic, "p": e.p_value,
                 "retained": e.retained}
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_text(self) -> str:
        lines = [
            f"{'Feature':<16} {'GEO':<4} {'STY':<4} {'p-value':<12} retained",
            "-" * 48,
        ]
        for e in self.entries:
            geo = "x" if e.feature in _GEO_FEATURES else " "
            sty = "x" if e.feature in _STY_FEATURES or e.feature in (
                "avg_pressure", "avg_tilt") else " "
            mark = "*" if e.retained else " "
            lines.append(
                f"{e.feature:<16} {geo:<4} {sty:<4} {e.p_value:<12.3e} {mark}"
            )
        lines.append("-" * 48)
        lines.append(f"alpha = {self.alpha:g}; * kept by the step-up rule")
        return "\n".join(lines)


def significance_report(matrix: FeatureMatrix, alpha: float = 0.05) -> SignificanceReport:
    """Run the per-feature rank test between the two stroke classes and
    apply the step-up retention rule across features."""
    if matrix.labels is None:
        raise EmptySample("labeled rows required for significance testing")
    labels = matrix.labels
    a_rows = matrix.values[labels == 1]
    b_rows = matrix.values[labels == 0]
    if a_rows.shape[0] == 0 or b_rows.shape[0] == 0:
        raise EmptySample("both stroke classes must be present")
    results = [mann_whitney_u(a_rows[:, k], b_rows[:, k])
               for k in range(len(FEATURE_NAMES))]
    p = np.array([r["p"] for r in results])
    retained = benjamini_hochberg(p, alpha)
    entries = [
        FeatureSignificance(FEATURE_NAMES[k], results[k]["u"],
                            float(p[k]), bool(retained[k]))
        for k in range(len(FEATURE_NAMES))
    ]
    entries.sort(key=lambda e: (e.p_value, e.feature))
    return SignificanceReport(entries=tuple(entries), alpha=alpha)
