"""Summary statistics, Welch's t-test and the T_conv report.

The Student-t tail probability comes from the regularized incomplete beta
function, evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .model import DebateRecord, ToxicityLevel

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


class InsufficientData(ValueError):
    pass


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b); converges fast for x < (a+1)/(a+b+2)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def t_sf(t: float, dof: float) -> float:
    """Upper tail P(T > t) of Student's t with ``dof`` degrees of freedom."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, dof: float) -> float:
    if t <= 0:
        return t_sf(-t, dof)
    return 1.0 - t_sf(t, dof)


@dataclass(frozen=True)
class GroupStats:
    label: ToxicityLevel
    n: int
    mean: float
    variance: float


@dataclass(frozen=True)
class Comparison:
    label: ToxicityLevel
    pct_increase: float
    t_stat: float
    welch_dof: float
    p_two_sided: float


@dataclass(frozen=True)
class WelchResult:
    t: float
    dof: float
    p: float


def _t_conv(records: Iterable[DebateRecord | int]) -> list[int]:
    return [r if isinstance(r, int) else r.outcome.t_conv for r in records]


def group_stats(records: Sequence[DebateRecord | int],
                label: ToxicityLevel | None = None) -> GroupStats:
    """Mean and n-1 sample variance of T_conv over converged runs."""
    for r in records:
        if isinstance(r, DebateRecord):
            if not r.valid:
                raise ValueError(f"run {r.run_id} did not converge")
            if label is None:
                label = r.toxicity
            elif r.toxicity is not label:
                raise ValueError("records mix toxicity conditions")
    values = _t_conv(records)
    n = len(values)
    if n < 2:
        raise InsufficientData(f"need at least 2 valid runs, got {n}")
    mean = math.fsum(values) / n
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return GroupStats(label or ToxicityLevel.NO, n, mean, variance)


def pct_increase(control: GroupStats, treatment: GroupStats) -> float:
    if control.mean <= 0:
        raise ValueError("control mean must be positive")
    return 100.0 * (treatment.mean - control.mean) / control.mean


def welch_test(a: GroupStats, b: GroupStats) -> WelchResult:
    """Two-sided Welch test of b.mean - a.mean."""
    if a.n < 2 or b.n < 2:
        raise InsufficientData("both groups need n ≥ 2")
    va, vb = a.variance / a.n, b.variance / b.n
    se2 = va + vb
    if se2 <= 0:
        raise ValueError("both variances are zero; the test is undefined")
    t = (b.mean - a.mean) / math.sqrt(se2)
    dof = se2 * se2 / (va * va / (a.n - 1) + vb * vb / (b.n - 1))
    p = min(1.0, 2.0 * t_sf(abs(t), dof))
    return WelchResult(t, dof, p)


def compare(control: GroupStats, treatment: GroupStats) -> Comparison:
    w = welch_test(control, treatment)
    return Comparison(treatment.label, pct_increase(control, treatment), w.t, w.dof, w.p)


def histogram(records: Iterable[DebateRecord | int], bin_width: int = 1) -> list[tuple[int, int]]:
    """(bin start, count) pairs for T_conv, ascending; empty bins omitted."""
    if bin_width < 1:
        raise ValueError("bin_width must be ≥ 1")
    counts = Counter(v - v % bin_width for v in _t_conv(records))
    return sorted(counts.items())


SUMMARY_FIELDS = ["level", "n", "mean", "variance", "pct_increase", "t", "dof", "p"]
WELCH_NOTE = "p: two-sided Welch t-test (unequal variances) against the control group"


def summary_rows(groups: Sequence[GroupStats], comparisons: Sequence[Comparison]) -> list[dict]:
    by_label = {c.label: c for c in comparisons}
    rows = []
    for g in sorted(groups, key=lambda g: g.label.order):
        c = by_label.get(g.label)
        rows.append({
            "level": g.label.value,
            "n": g.n,
            "mean": g.mean,
            "variance": g.variance,
            "pct_increase": None if c is None else c.pct_increase,
            "t": None if c is None else c.t_stat,
            "dof": None if c is None else c.welch_dof,
            "p": None if c is None else c.p_two_sided,
        })
    return rows


def summary_csv(groups: Sequence[GroupStats], comparisons: Sequence[Comparison]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in summary_rows(groups, comparisons):
        w.writerow({k: "-" if v is None else repr(v) if isinstance(v, float) else v
                    for k, v in row.items()})
    return buf.getvalue()


def summary_text(groups: Sequence[GroupStats], comparisons: Sequence[Comparison]) -> str:
    header = f"{'Toxicity-Level':<15}{'N':>6}{'mean':>9}{'Var':>9}{'% increase':>12}{'p':>12}"
    lines = [header, "-" * len(header)]
    for row in summary_rows(groups, comparisons):
        pct = "-" if row["pct_increase"] is None else f"{row['pct_increase']:.2f}"
        p = "-" if row["p"] is None else f"{row['p']:.3g}"
        lines.append(f"{row['level']:<15}{row['n']:>6}{row['mean']:>9.2f}"
                     f"{row['variance']:>9.2f}{pct:>12}{p:>12}")
    if comparisons:
        lines.append(WELCH_NOTE)
    return "\n".join(lines)


def histogram_csv(hist: Sequence[tuple[int, int]]) -> str:
    return "t_conv,count\n" + "".join(f"{b},{c}\n" for b, c in hist)


def render_report(groups: Sequence[GroupStats], comparisons: Sequence[Comparison],
                  histograms: dict[ToxicityLevel, list[tuple[int, int]]] | None = None,
                  out_dir: str | Path | None = None) -> str:
    """Text report; with ``out_dir`` also writes summary.csv and hist_<level>.csv."""
    if not any(g.label is ToxicityLevel.NO for g in groups):
        raise InsufficientData("the report needs a control (no toxicity) group")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(summary_csv(groups, comparisons), encoding="utf-8")
        for level, hist in (histograms or {}).items():
            (out / f"hist_{level.value}.csv").write_text(histogram_csv(hist), encoding="utf-8")
    return summary_text(groups, comparisons)


def read_summary_csv(text: str) -> list[dict]:
    """Inverse of :func:`summary_csv` (floats round-trip exactly via repr)."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {"level": row["level"], "n": int(row["n"])}
        for k in SUMMARY_FIELDS[2:]:
            parsed[k] = None if row[k] == "-" else float(row[k])
        rows.append(parsed)
    return rows


@dataclass
class Analysis:
    groups: list[GroupStats]
    comparisons: list[Comparison]
    histograms: dict[ToxicityLevel, list[tuple[int, int]]]
    excluded: dict[ToxicityLevel, str]


def analyze(records: Iterable[DebateRecord]) -> Analysis:
    """Group runs by condition, drop failed/capped runs, compare against control.

    A condition with fewer than two converged runs is excluded (and the
    reason recorded) rather than reported.
    """
    by_level: dict[ToxicityLevel, list[DebateRecord]] = {}
    for r in records:
        by_level.setdefault(r.toxicity, []).append(r)
    groups, hists, excluded = [], {}, {}
    for level in sorted(by_level, key=lambda lv: lv.order):
        runs = by_level[level]
        valid = [r for r in runs if r.valid]
        if len(valid) < 2:
            failed = sum(r.outcome.status.value == "failed" for r in runs)
            excluded[level] = (f"{len(valid)} valid runs out of {len(runs)} "
                               f"({failed} failed, {len(runs) - len(valid) - failed} capped)")
            continue
        groups.append(group_stats(valid, level))
        hists[level] = histogram(valid)
    control = next((g for g in groups if g.label is ToxicityLevel.NO), None)
    if control is None:
        reason = excluded.get(ToxicityLevel.NO, "no control log given")
        raise InsufficientData(f"no valid runs for the control group: {reason}")
    comparisons = [compare(control, g) for g in groups if g is not control]
    return Analysis(groups, comparisons, hists, excluded)
