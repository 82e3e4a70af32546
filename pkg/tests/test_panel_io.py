import numpy as np
import pytest

from fatmt.panel_io import (
    GroundTruth,
    PanelData,
    PanelError,
    load_panel,
    normalize_covariates,
    standardize_responses,
    write_panel,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def toy_files(tmp_path):
    y = _write(tmp_path / "y.csv", "period,a,b,c\n1,0.1,0.2,0.3\n2,0.0,-0.1,0.5\n3,1,2,3\n4,0.4,0.4,0.4\n5,-1,0,1\n")
    x = _write(tmp_path / "x.csv", "period,mkt\n1,0.5\n2,-0.5\n3,1.5\n4,0.0\n5,0.25\n")
    return y, x


def test_load_toy_dimensions(toy_files):
    panel = load_panel(*toy_files)
    assert (panel.n_units, panel.n_periods, panel.n_covariates) == (3, 5, 1)
    assert panel.unit_ids == ("a", "b", "c")
    assert panel.covariate_names == ("mkt",)
    np.testing.assert_array_equal(panel.responses[2], [0.3, 0.5, 3, 0.4, 1])


def test_units_as_rows_matches_default(tmp_path, toy_files):
    panel = load_panel(*toy_files)
    lines = ["unit,1,2,3,4,5"]
    for uid, row in zip(panel.unit_ids, panel.responses):
        lines.append(",".join([uid, *map(repr, row.tolist())]))
    yt = _write(tmp_path / "yt.csv", "\n".join(lines) + "\n")
    other = load_panel(yt, toy_files[1], units_as_rows=True)
    np.testing.assert_array_equal(other.responses, panel.responses)
    assert other.unit_ids == panel.unit_ids


def test_period_mismatch(tmp_path, toy_files):
    y = _write(tmp_path / "y4.csv", "period,a,b,c\n1,0,0,1\n2,1,0,0\n3,0,1,0\n4,1,1,1\n")
    with pytest.raises(PanelError, match="dimension mismatch"):
        load_panel(y, toy_files[1])


def test_nan_cell(tmp_path, toy_files):
    y = _write(tmp_path / "ynan.csv", "period,a,b,c\n1,0,0,1\n2,NaN,0,0\n3,0,1,0\n4,1,1,1\n5,2,2,2\n")
    with pytest.raises(PanelError, match="non-numeric"):
        load_panel(y, toy_files[1])


def test_text_cell(tmp_path, toy_files):
    y = _write(tmp_path / "ytxt.csv", "period,a,b,c\n1,0,0,1\n2,abc,0,0\n3,0,1,0\n4,1,1,1\n5,2,2,2\n")
    with pytest.raises(PanelError, match="non-numeric"):
        load_panel(y, toy_files[1])


def test_too_few_periods():
    with pytest.raises(PanelError, match="T >= p \\+ 2"):
        PanelData(np.ones((3, 3)), np.ones((3, 2)))


def test_missing_file(tmp_path, toy_files):
    with pytest.raises(PanelError, match="not found"):
        load_panel(tmp_path / "nope.csv", toy_files[1])


def test_normalize_demeans():
    panel = PanelData(np.zeros((2, 3)), np.array([[1.0], [2.0], [3.0]]))
    out = normalize_covariates(panel)
    np.testing.assert_allclose(out.covariates.ravel(), [-1, 0, 1], atol=1e-15)


def test_normalize_idempotent_and_leaves_responses(rng):
    panel = PanelData(rng.standard_normal((4, 9)), rng.normal(3.0, 2.0, (9, 2)))
    once = normalize_covariates(panel)
    twice = normalize_covariates(once)
    assert np.all(np.abs(once.covariates.mean(axis=0)) < 1e-12)
    np.testing.assert_allclose(twice.covariates, once.covariates, atol=1e-12)
    np.testing.assert_array_equal(once.responses, panel.responses)


def test_round_trip_bit_identical(tmp_path, rng):
    panel = normalize_covariates(PanelData(rng.standard_normal((5, 7)) * 1e-3, rng.standard_normal((7, 2))))
    write_panel(panel, tmp_path / "y.csv", tmp_path / "x.csv")
    back = load_panel(tmp_path / "y.csv", tmp_path / "x.csv")
    np.testing.assert_array_equal(back.responses, panel.responses)
    np.testing.assert_array_equal(back.covariates, panel.covariates)
    assert back.unit_ids == panel.unit_ids


def test_standardize_opt_in(rng):
    panel = PanelData(rng.normal(0, 3, (4, 20)), rng.standard_normal((20, 1)))
    out = standardize_responses(panel)
    np.testing.assert_allclose(out.responses.std(axis=1), 1.0)


def test_ground_truth_sets():
    truth = GroundTruth(np.array([0.0, 1.0, 0.0, -2.0]))
    np.testing.assert_array_equal(truth.nonnull_set, [1, 3])
    np.testing.assert_array_equal(truth.null_set, [0, 2])
    assert truth.n_null + truth.n_nonnull == truth.n_units
