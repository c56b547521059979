from __future__ import annotations

import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from madsim.model import ToxicityLevel
from madsim.stats import (
    GroupStats,
    InsufficientData,
    betainc,
    compare,
    group_stats,
    histogram,
    histogram_csv,
    pct_increase,
    read_summary_csv,
    render_report,
    summary_csv,
    t_cdf,
    t_sf,
    welch_test,
)

NO, MILD, MOD = ToxicityLevel.NO, ToxicityLevel.MILD, ToxicityLevel.MODERATE

# reference group sizes and moments for the three conditions
CONTROL = GroupStats(NO, 162, 9.40, 7.84)
MILD_G = GroupStats(MILD, 158, 11.30, 8.27)
MOD_G = GroupStats(MOD, 160, 11.75, 8.94)


def binomial_betainc(a: int, b: int, x: float) -> float:
    """I_x(a, b) for integer a, b as a binomial tail."""
    n = a + b - 1
    return math.fsum(math.comb(n, j) * x**j * (1 - x) ** (n - j) for j in range(a, n + 1))


class TestBetainc:
    @pytest.mark.parametrize("a", range(1, 11))
    @pytest.mark.parametrize("b", range(1, 11))
    def test_integer_parameters(self, a, b):
        for x in (0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99):
            assert betainc(a, b, x) == pytest.approx(binomial_betainc(a, b, x), abs=1e-12)

    @given(st.floats(0.1, 200), st.floats(0.1, 200), st.floats(0, 1))
    def test_against_mpmath(self, a, b, x):
        ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert betainc(a, b, x) == pytest.approx(ref, rel=1e-9, abs=1e-14)

    def test_edges(self):
        assert betainc(2, 3, 0.0) == 0.0
        assert betainc(2, 3, 1.0) == 1.0

    @pytest.mark.parametrize("args", [(0, 1, 0.5), (1, -1, 0.5), (1, 1, 1.5)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            betainc(*args)

    @given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 1))
    def test_symmetry(self, a, b, x):
        assert betainc(a, b, x) == pytest.approx(1 - betainc(b, a, 1 - x), abs=1e-12)


# Student-t CDFs with elementary closed forms
CLOSED_T = {
    1: lambda t: 0.5 + math.atan(t) / math.pi,
    2: lambda t: 0.5 + t / (2 * math.sqrt(2 + t * t)),
    3: lambda t: 0.5 + (t / (math.sqrt(3) * (1 + t * t / 3)) + math.atan(t / math.sqrt(3)))
    / math.pi,
    4: lambda t: 0.5 + 0.375 * t / math.sqrt(1 + t * t / 4) * (1 - t * t / (12 * (1 + t * t / 4))),
}


class TestStudentT:
    @pytest.mark.parametrize("dof", sorted(CLOSED_T))
    @pytest.mark.parametrize("t", [-30.0, -4.0, -1.5, -0.3, 0.0, 0.7, 2.0, 6.5, 50.0])
    def test_closed_forms(self, dof, t):
        assert t_cdf(t, dof) == pytest.approx(CLOSED_T[dof](t), abs=1e-12)

    def test_centre(self):
        for dof in (1, 2.5, 30, 317.15):
            assert t_cdf(0.0, dof) == 0.5

    def test_large_dof_is_normal(self):
        for t in (-3, -1, 0.5, 2, 4):
            normal = 0.5 * (1 + math.erf(t / math.sqrt(2)))
            assert abs(t_cdf(t, 1000) - normal) < 1e-3

    def test_monotone(self):
        xs = [x / 10 for x in range(-100, 101)]
        cdf = [t_cdf(x, 7.5) for x in xs]
        assert all(a <= b for a, b in zip(cdf, cdf[1:]))

    def test_infinite(self):
        assert t_sf(math.inf, 5) == 0.0 and t_sf(-math.inf, 5) == 1.0

    @pytest.mark.parametrize("t,dof", [(5.9863, 317.15), (7.2776, 318.07), (1.3, 3.3)])
    def test_tail_against_mpmath(self, t, dof):
        with mpmath.workdps(50):
            nu = mpmath.mpf(dof)
            ref = mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, nu / (nu + mpmath.mpf(t) ** 2),
                                 regularized=True) / 2
        assert t_sf(t, dof) == pytest.approx(float(ref), rel=1e-10)


class TestWelch:
    def test_reference_mild(self):
        w = welch_test(CONTROL, MILD_G)
        assert w.t == pytest.approx(5.9863134389595849, rel=1e-12)
        assert w.dof == pytest.approx(317.15028614221556, rel=1e-12)
        assert w.p == pytest.approx(5.8049089084659477e-9, rel=1e-8)

    def test_reference_moderate(self):
        w = welch_test(CONTROL, MOD_G)
        assert w.t == pytest.approx(7.2775977418927669, rel=1e-12)
        assert w.dof == pytest.approx(318.0654984833984, rel=1e-12)
        assert w.p == pytest.approx(2.6752446250292385e-12, rel=1e-8)

    def test_antisymmetric(self):
        ab, ba = welch_test(CONTROL, MILD_G), welch_test(MILD_G, CONTROL)
        assert ab.t == -ba.t and ab.dof == ba.dof and ab.p == ba.p

    def test_identical_groups(self):
        w = welch_test(CONTROL, GroupStats(MILD, 162, 9.40, 7.84))
        assert w.t == 0.0 and w.p == 1.0

    def test_zero_variance(self):
        with pytest.raises(ValueError):
            welch_test(GroupStats(NO, 3, 2, 0), GroupStats(MILD, 3, 2, 0))

    def test_too_small(self):
        with pytest.raises(InsufficientData):
            welch_test(GroupStats(NO, 1, 2, 0), CONTROL)


class TestDescriptive:
    def test_constant(self):
        g = group_stats([2, 2, 2])
        assert (g.n, g.mean, g.variance) == (3, 2.0, 0.0)

    def test_sample_variance(self):
        g = group_stats([8, 10, 12])
        assert (g.mean, g.variance) == (10.0, 4.0)

    def test_needs_two(self):
        with pytest.raises(InsufficientData):
            group_stats([5])

    def test_pct_increase(self):
        assert pct_increase(CONTROL, MOD_G) == pytest.approx(25.00, abs=0.005)
        assert pct_increase(CONTROL, MILD_G) == pytest.approx(20.21, abs=0.005)

    def test_histogram(self):
        assert histogram([2, 2, 3]) == [(2, 2), (3, 1)]
        assert histogram([2, 3, 4, 7], bin_width=2) == [(2, 2), (4, 1), (6, 1)]
        assert histogram_csv([(2, 2), (3, 1)]) == "t_conv,count\n2,2\n3,1\n"


class TestReport:
    def test_control_only(self):
        text = render_report([CONTROL], [])
        assert "-" in text.splitlines()[-1]
        row = read_summary_csv(summary_csv([CONTROL], []))[0]
        assert row["pct_increase"] is None and row["p"] is None

    def test_row_order(self):
        groups = [MOD_G, CONTROL, MILD_G]
        comps = [compare(CONTROL, MOD_G), compare(CONTROL, MILD_G)]
        rows = read_summary_csv(summary_csv(groups, comps))
        assert [r["level"] for r in rows] == ["no", "mild", "moderate"]

    def test_csv_roundtrip(self):
        comps = [compare(CONTROL, MILD_G), compare(CONTROL, MOD_G)]
        rows = read_summary_csv(summary_csv([CONTROL, MILD_G, MOD_G], comps))
        assert rows[1]["pct_increase"] == comps[0].pct_increase
        assert rows[2]["p"] == comps[1].p_two_sided
        assert rows[2]["dof"] == comps[1].welch_dof

    def test_needs_control(self):
        with pytest.raises(InsufficientData):
            render_report([MILD_G], [])

    def test_writes_files(self, tmp_path):
        render_report([CONTROL, MILD_G], [compare(CONTROL, MILD_G)],
                      {NO: [(2, 1)], MILD: [(3, 4)]}, tmp_path)
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "hist_mild.csv").read_text() == "t_conv,count\n3,4\n"

    def test_text_two_decimals(self):
        text = render_report([CONTROL, MOD_G], [compare(CONTROL, MOD_G)])
        assert "25.00" in text and "9.40" in text and "11.75" in text
