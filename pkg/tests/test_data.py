import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pubbound.data import (
    DiagnosticStudy,
    SchemaError,
    UnivariateObservation,
    apply_continuity_correction,
    ingest_dta_csv,
    ingest_univariate_csv,
    load_troponin,
    to_bivariate,
    troponin_path,
    write_dta_csv,
    write_univariate_csv,
)


def _write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_troponin_rows():
    studies = load_troponin()
    assert len(studies) == 20
    assert studies[6] == DiagnosticStudy("7", 23, 50, 5, 63)
    assert studies[0] == DiagnosticStudy("1", 0, 14, 0, 22)


def test_troponin_fixture_text():
    lines = troponin_path().read_text(encoding="utf-8").splitlines()
    assert lines[0] == "study_id,tp,fp,fn,tn"
    assert lines[7] == "7,23,50,5,63"
    assert len(lines) == 21


def test_header_only_gives_empty_list(tmp_path):
    assert ingest_dta_csv(_write(tmp_path, "study_id,tp,fp,fn,tn\n")) == []


@pytest.mark.parametrize(
    "body, row, column",
    [
        ("a,1,2,3,4\nb,1,-2,3,4\n", 2, "fp"),
        ("a,1,2,x,4\n", 1, "fn"),
        ("a,1,2,3\n", 1, "tn"),
        ("a,1,2,3,4,5\n", 1, None),
        ("a,1,2,3,nan\n", 1, "tn"),
    ],
)
def test_dta_schema_errors_name_row_and_column(tmp_path, body, row, column):
    path = _write(tmp_path, "study_id,tp,fp,fn,tn\n" + body)
    with pytest.raises(SchemaError) as info:
        ingest_dta_csv(path)
    assert info.value.row == row
    assert info.value.column == column
    assert f"row {row}" in str(info.value)


def test_bad_header(tmp_path):
    with pytest.raises(SchemaError) as info:
        ingest_dta_csv(_write(tmp_path, "study,tp,fp,fn,tn\n"))
    assert info.value.row == 0


def test_univariate_ingest(tmp_path):
    path = _write(tmp_path, "study_id,y,se\na,-0.5,0.2\nb,0,1\n")
    assert ingest_univariate_csv(path) == [
        UnivariateObservation("a", -0.5, 0.2),
        UnivariateObservation("b", 0.0, 1.0),
    ]


def test_univariate_rejects_nonpositive_se(tmp_path):
    path = _write(tmp_path, "study_id,y,se\na,-0.5,0.2\nc,1.2,-0.1\n")
    with pytest.raises(SchemaError, match="non-positive") as info:
        ingest_univariate_csv(path)
    assert info.value.row == 2


def test_continuity_correction():
    out = apply_continuity_correction(
        [
            DiagnosticStudy("1", 0, 14, 0, 22),
            DiagnosticStudy("7", 23, 50, 5, 63),
            DiagnosticStudy("z", 0, 0, 0, 0),
        ]
    )
    assert out[0].cells == (0.5, 14.5, 0.5, 22.5)
    assert out[1].cells == (23, 50, 5, 63)
    assert out[2].cells == (0.5, 0.5, 0.5, 0.5)


def test_to_bivariate_row7():
    ob = to_bivariate(DiagnosticStudy("7", 23, 50, 5, 63))
    assert ob.y1 == pytest.approx(1.5261, abs=1e-4)
    assert ob.s1_sq == pytest.approx(0.24348, abs=1e-5)
    assert ob.y2 == pytest.approx(0.23111, abs=1e-5)
    assert ob.s2_sq == pytest.approx(0.03587, abs=1e-5)


def test_to_bivariate_symmetric_and_corrected():
    ob = to_bivariate(DiagnosticStudy("s", 1, 1, 1, 1))
    assert (ob.y1, ob.y2, ob.s1_sq, ob.s2_sq) == (0.0, 0.0, 2.0, 2.0)
    ob = to_bivariate(DiagnosticStudy("1", 0.5, 14.5, 0.5, 22.5))
    assert ob.y1 == 0.0
    assert ob.y2 == pytest.approx(0.4394, abs=1e-4)


def test_to_bivariate_requires_correction():
    with pytest.raises(ValueError, match="continuity"):
        to_bivariate(DiagnosticStudy("1", 0, 14, 0, 22))


counts = st.integers(min_value=0, max_value=500)
tables = st.lists(
    st.tuples(counts, counts, counts, counts).map(lambda c: DiagnosticStudy("s", *c)),
    min_size=1,
    max_size=10,
)


@given(tables)
def test_correction_idempotent(studies):
    once = apply_continuity_correction(studies)
    assert apply_continuity_correction(once) == once
    for st_ in once:
        assert all(c > 0 for c in st_.cells)


@given(tables)
def test_transform_always_finite(studies):
    for st_ in apply_continuity_correction(studies):
        ob = to_bivariate(st_)
        assert all(math.isfinite(v) for v in (ob.y1, ob.y2, ob.s1_sq, ob.s2_sq))
        assert ob.s1_sq > 0 and ob.s2_sq > 0


@settings(max_examples=50)
@given(
    st.lists(
        st.tuples(
            st.text(alphabet="abcxyz0123456789_", min_size=1, max_size=6),
            st.floats(0, 1e6, allow_nan=False),
            st.floats(0, 1e6, allow_nan=False),
            st.floats(0, 1e6, allow_nan=False),
            st.floats(0, 1e6, allow_nan=False),
        ),
        max_size=8,
    )
)
def test_dta_round_trip(tmp_path_factory, rows):
    studies = [DiagnosticStudy(*r) for r in rows]
    path = tmp_path_factory.mktemp("rt") / "t.csv"
    write_dta_csv(studies, path)
    assert ingest_dta_csv(path) == studies


@settings(max_examples=50)
@given(
    st.lists(
        st.tuples(
            st.text(alphabet="abc123", min_size=1, max_size=4),
            st.floats(-1e3, 1e3, allow_nan=False),
            st.floats(1e-6, 1e3, allow_nan=False),
        ),
        max_size=8,
    )
)
def test_univariate_round_trip(tmp_path_factory, rows):
    obs = [UnivariateObservation(*r) for r in rows]
    path = tmp_path_factory.mktemp("rt") / "u.csv"
    write_univariate_csv(obs, path)
    assert ingest_univariate_csv(path) == obs
