import io
import json
import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geosmd.effect_size import EffectEstimate, SmdMethod, arithmetic_estimate, geometric_cohen
from geosmd.errors import InsufficientStudies, StudyEstimationError, StudyParseError
from geosmd.meta import (
    FOREST_FIELDS,
    SUMMARY_ID,
    SdRatioWarning,
    compute_effects,
    forest_data,
    meta_result_dict,
    parse_studies,
    pool_by_subgroup,
    pool_random_effects,
    write_forest_csv,
    write_forest_json,
)

from _oracles import dersimonian_laird

Z_975 = 1.959963984540054
HEADER = "study_id,n_case,mean_case,sd_case,n_control,mean_control,sd_control"

THREE = f"""{HEADER}
A,20,1.2,1.0,20,0.4,1.1
B,15,0.9,0.8,18,0.1,0.9
C,30,2.0,1.5,25,1.1,1.3
"""


def eff(theta, se, label=None):
    return EffectEstimate(None, theta, se, theta - Z_975 * se, theta + Z_975 * se, 0.05, label)


class TestParse:
    def test_three_rows(self):
        studies = parse_studies(THREE)
        assert [s.study_id for s in studies] == ["A", "B", "C"]
        assert studies[1].case.n == 15 and studies[1].control.sd == 0.9
        assert studies[0].subgroup is None

    def test_path_and_file_object(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text(THREE, encoding="utf-8")
        assert parse_studies(str(path)) == parse_studies(THREE)
        with open(path, newline="") as fh:
            assert parse_studies(fh) == parse_studies(THREE)

    def test_header_only(self):
        assert parse_studies(HEADER + "\n") == []

    def test_blank_rows_skipped(self):
        text = THREE.replace("\nB,", "\n\nB,")
        assert len(parse_studies(text)) == 3

    @pytest.mark.parametrize(
        "row,field",
        [
            ("X,20,1.0,0,20,0.0,1.0", "sd_case"),
            ("X,20,1.0,1.0,20,0.0,-2", "sd_control"),
            ("X,1,1.0,1.0,20,0.0,1.0", "n_case"),
            ("X,20.5,1.0,1.0,20,0.0,1.0", "n_case"),
            ("X,20,,1.0,20,0.0,1.0", "mean_case"),
            ("X,20,1.0,1.0,20,abc,1.0", "mean_control"),
            ("X,20,1.0,1.0,20,0.0,nan", "sd_control"),
            (",20,1.0,1.0,20,0.0,1.0", "study_id"),
        ],
    )
    def test_row_errors(self, row, field):
        with pytest.raises(StudyParseError) as info:
            parse_studies(f"{HEADER}\nA,20,1.2,1.0,20,0.4,1.1\n{row}\n")
        assert info.value.row == 3
        assert info.value.field == field
        assert "row 3" in str(info.value)

    def test_duplicate_id(self):
        with pytest.raises(StudyParseError) as info:
            parse_studies(THREE + "B,5,1,1,5,0,1\n")
        assert info.value.row == 5 and info.value.field == "study_id"

    def test_missing_column(self):
        with pytest.raises(StudyParseError) as info:
            parse_studies("study_id,n_case\nA,3\n")
        assert info.value.row == 1

    def test_subgroup_column(self):
        text = HEADER + ",subgroup\nA,10,1,1,10,0,1,x\nB,10,1,1,10,0,1,\n"
        studies = parse_studies(text)
        assert studies[0].subgroup == "x" and studies[1].subgroup is None


class TestComputeEffects:
    def test_order_and_labels(self):
        effects = compute_effects(parse_studies(THREE), SmdMethod("geometric", "hedges", 0.5))
        assert [e.label for e in effects] == ["A", "B", "C"]

    def test_sd_ratio_warning(self):
        studies = parse_studies(f"{HEADER}\nS,12,3.1,0.76,12,2.0,0.04\n")
        with pytest.warns(SdRatioWarning, match="19"):
            compute_effects(studies, SmdMethod("geometric", "hedges", 0.5))

    def test_no_warning_in_range(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            compute_effects(parse_studies(THREE), SmdMethod("geometric", "cohen", 0.5))

    def test_equal_sd_studies_pooled_matches_geometric(self):
        text = f"{HEADER}\nA,10,1.0,1.3,14,0.2,1.3\nB,25,0.5,0.7,20,0.9,0.7\n"
        studies = parse_studies(text)
        pooled = compute_effects(studies, SmdMethod("pooled", "cohen"))
        geo = compute_effects(studies, SmdMethod("geometric", "cohen", 0.5))
        for a, b in zip(pooled, geo):
            assert abs(a.point - b.point) <= 1e-9

    def test_empty(self):
        with pytest.raises(InsufficientStudies):
            compute_effects([], SmdMethod("geometric"))

    def test_error_names_study(self):
        studies = parse_studies(f"{HEADER}\nA,10,1,1,10,0,1\nTiny,2,1,1,2,0,1\n")
        with pytest.raises(StudyEstimationError) as info:
            compute_effects(studies, SmdMethod("glass", "hedges", 0))
        assert info.value.study_id == "Tiny"

    def test_geometric_at_least_arithmetic(self):
        studies = parse_studies(THREE)
        for s in studies:
            g = geometric_cohen(s.pair, 0.5).point
            a = arithmetic_estimate(s.pair, SmdMethod("arithmetic", "cohen", 0.5)).point
            assert abs(g) >= abs(a)


class TestPooling:
    def test_identical_effects(self):
        r = pool_random_effects([eff(1.0, 0.5), eff(1.0, 0.5)])
        assert r.pooled == 1.0 and r.tau2 == 0.0 and r.q_stat == 0.0 and r.i2 == 0.0

    def test_worksheet(self):
        thetas, ses = (0.2, 0.5, 0.8), (0.1, 0.2, 0.3)
        r = pool_random_effects([eff(t, s) for t, s in zip(thetas, ses)])
        ref = dersimonian_laird(thetas, ses, Z_975)
        assert r.pooled == pytest.approx(ref["pooled"], rel=1e-14)
        assert r.tau2 == pytest.approx(ref["tau2"], rel=1e-14)
        assert r.q_stat == pytest.approx(ref["q"], rel=1e-14)
        assert r.se == pytest.approx(ref["se"], rel=1e-14)
        assert r.ci_low == pytest.approx(ref["ci_low"], rel=1e-13)
        assert r.ci_high == pytest.approx(ref["ci_high"], rel=1e-13)
        # frozen worksheet values
        assert r.pooled == pytest.approx(0.41689140668634805, rel=1e-14)
        assert r.tau2 == pytest.approx(0.04857142857142858, rel=1e-14)
        assert r.q_stat == pytest.approx(4.775510204081632, rel=1e-14)
        assert r.i2 == pytest.approx((4.775510204081632 - 2) / 4.775510204081632, rel=1e-14)
        assert r.p_value == pytest.approx(math.erfc(r.pooled / r.se / math.sqrt(2)), rel=1e-12)

    def test_equal_se_simple_mean(self):
        thetas = [0.31, 0.27, 0.35, 0.29]
        r = pool_random_effects([eff(t, 0.4) for t in thetas])
        assert r.tau2 == 0.0
        assert r.pooled == math.fsum(thetas) / 4

    def test_too_few(self):
        with pytest.raises(InsufficientStudies):
            pool_random_effects([eff(1.0, 0.1)])

    def test_bad_se(self):
        with pytest.raises(ValueError):
            pool_random_effects([eff(1.0, 0.1), eff(1.0, 0.0)])

    def test_alpha(self):
        effects = [eff(0.2, 0.1), eff(0.5, 0.2)]
        narrow = pool_random_effects(effects, alpha=0.2)
        wide = pool_random_effects(effects, alpha=0.01)
        assert wide.ci_high - wide.ci_low > narrow.ci_high - narrow.ci_low


effect_lists = st.lists(
    st.tuples(st.floats(-5, 5, allow_nan=False), st.floats(0.01, 3, allow_nan=False)), min_size=2, max_size=12
)


@settings(max_examples=200, deadline=None)
@given(data=effect_lists)
def test_pooled_within_range(data):
    r = pool_random_effects([eff(t, s) for t, s in data])
    thetas = [t for t, _ in data]
    assert min(thetas) <= r.pooled <= max(thetas)
    assert r.tau2 >= 0.0 and 0.0 <= r.i2 < 1.0
    assert 0.0 <= r.p_value <= 1.0


@settings(max_examples=100, deadline=None)
@given(data=effect_lists, perm=st.randoms(use_true_random=False))
def test_permutation_invariance(data, perm):
    shuffled = list(data)
    perm.shuffle(shuffled)
    a = pool_random_effects([eff(t, s) for t, s in data])
    b = pool_random_effects([eff(t, s) for t, s in shuffled])
    # fsum makes the sums order-free; only the pooled mean keeps one division
    assert a.tau2 == b.tau2 and a.q_stat == b.q_stat and a.se == b.se
    assert a.pooled == pytest.approx(b.pooled, rel=1e-15, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(data=effect_lists)
def test_against_rational_worksheet(data):
    thetas, ses = zip(*data)
    r = pool_random_effects([eff(t, s) for t, s in data])
    ref = dersimonian_laird(thetas, ses, Z_975)
    scale = max(1.0, max(abs(t) for t in thetas))
    assert abs(r.pooled - ref["pooled"]) <= 1e-12 * scale
    assert abs(r.tau2 - ref["tau2"]) <= 1e-12 * max(1.0, ref["tau2"])


@settings(max_examples=50, deadline=None)
@given(thetas=st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=10), se=st.floats(0.05, 2))
def test_equal_se_zero_tau_is_simple_mean(thetas, se):
    r = pool_random_effects([eff(t, se) for t in thetas])
    if r.tau2 == 0.0:
        expected = math.fsum(thetas) / len(thetas)
        assert r.pooled == min(max(expected, min(thetas)), max(thetas))


class TestForest:
    def setup_method(self):
        self.effects = compute_effects(parse_studies(THREE), SmdMethod("geometric", "hedges", 0.5))
        self.result = pool_random_effects(self.effects)

    def test_rows(self):
        rows = forest_data(self.effects, self.result)
        assert len(rows) == 4
        assert rows[-1]["study_id"] == SUMMARY_ID
        assert rows[-1]["point"] == self.result.pooled
        assert abs(math.fsum(r["weight_pct"] for r in rows[:-1]) - 100.0) <= 1e-9
        assert [r["study_id"] for r in rows[:-1]] == ["A", "B", "C"]

    def test_csv(self):
        buf = io.StringIO()
        write_forest_csv(forest_data(self.effects, self.result), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == ",".join(FOREST_FIELDS)
        assert len(lines) == 5
        assert float(lines[-1].split(",")[1]) == self.result.pooled

    def test_json(self):
        buf = io.StringIO()
        write_forest_json(forest_data(self.effects, self.result), buf, self.result)
        doc = json.loads(buf.getvalue())
        assert len(doc["studies"]) == 3
        assert doc["summary"]["point"] == self.result.pooled
        assert doc["result"]["method"] == "geometric-hedges(w=0.5)"

    def test_mismatch(self):
        with pytest.raises(ValueError):
            forest_data(self.effects[:2], self.result)


def test_subgroups():
    text = HEADER + ",subgroup\n" + "\n".join(
        [
            "A,20,1.2,1.0,20,0.4,1.1,adult",
            "B,15,0.9,0.8,18,0.1,0.9,adult",
            "C,30,2.0,1.5,25,1.1,1.3,child",
            "D,12,1.4,1.1,12,0.6,1.0,child",
            "E,40,0.7,1.0,40,0.5,1.0,elderly",
        ]
    ) + "\n"
    studies = parse_studies(text)
    effects = compute_effects(studies, SmdMethod("geometric", "hedges", 0.5))
    out = pool_by_subgroup(studies, effects)
    assert list(out) == ["adult", "child", None]
    assert out[None].k == 5 and out["adult"].k == 2
    assert out["adult"] == pool_random_effects(effects[:2])
    assert meta_result_dict(out[None])["k"] == 5


def test_single_stratum():
    studies = parse_studies(THREE)
    effects = compute_effects(studies, SmdMethod("geometric", "hedges", 0.5))
    assert list(pool_by_subgroup(studies, effects)) == [None]
