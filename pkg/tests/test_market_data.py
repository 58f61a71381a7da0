"""Panel loading, validation, quality filtering, returns, and windowing."""

from datetime import date

import numpy as np
import pytest

import synth
from mstport import errors, market_data as md


# ---------------------------------------------------------------------------
# loading: long format
# ---------------------------------------------------------------------------


def test_long_round_trip_preserves_values(tmp_path):
    table = synth.random_walk_table(4, 30, seed=5)
    path = tmp_path / "prices.csv"
    synth.write_long_csv(table, path)
    loaded = md.load_prices(path, md.FORMAT_LONG)
    assert loaded.dates == table.dates
    assert loaded.tickers == table.tickers
    np.testing.assert_array_equal(loaded.adj_close, table.adj_close)
    np.testing.assert_array_equal(loaded.open_px, table.open_px)
    assert not loaded.mask.any()


def test_long_masks_invalid_cells(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "date,ticker,open,adj_close\n"
        "2021-01-04,A,10.0,11.0\n"
        "2021-01-04,B,5.0,0.0\n"      # non-positive close -> masked
        "2021-01-05,A,,12.0\n"         # blank open -> masked (opens present elsewhere)
        "2021-01-05,B,5.0,abc\n"       # non-numeric close -> masked
    )
    table = md.load_prices(path)
    assert table.shape == (2, 2)
    assert int(table.mask.sum()) == 3
    assert not table.mask[0, 0]
    assert table.mask[0, 1] and table.mask[1, 0] and table.mask[1, 1]
    assert np.isnan(table.adj_close[0, 1])


def test_long_absent_pair_is_masked_not_error(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "date,ticker,open,adj_close\n"
        "2021-01-04,A,10.0,11.0\n"
        "2021-01-04,B,20.0,21.0\n"
        "2021-01-05,A,11.0,12.0\n"
    )
    table = md.load_prices(path)
    assert table.shape == (2, 2)
    assert int(table.mask.sum()) == 1
    assert table.mask[1, 1]


def test_long_skips_malformed_rows(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "date,ticker,open,adj_close\n"
        "2021-01-04,A,10.0,11.0\n"
        "not-a-date,A,10.0,11.0\n"
        "2021-01-05,A\n"
        "2021-01-05,,10.0,11.0\n"
        "2021-01-05,A,10.5,11.5\n"
    )
    table = md.load_prices(path)
    assert table.shape == (2, 1)
    assert not table.mask.any()


def test_long_duplicate_pair_rejected(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "date,ticker,open,adj_close\n"
        "2021-01-04,A,10.0,11.0\n"
        "2021-01-04,A,10.0,11.5\n"
    )
    with pytest.raises(errors.DataError, match="duplicate"):
        md.load_prices(path)


def test_long_rejects_bad_header_and_empty(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("day,symbol,open,close\n2021-01-04,A,1,2\n")
    with pytest.raises(errors.DataError, match="header"):
        md.load_prices(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(errors.DataError, match="empty"):
        md.load_prices(empty)
    no_rows = tmp_path / "norows.csv"
    no_rows.write_text("date,ticker,open,adj_close\nnot-a-date,A,1,2\n")
    with pytest.raises(errors.DataError, match="zero valid rows"):
        md.load_prices(no_rows)


def test_long_without_any_opens_drops_open_matrix(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(
        "date,ticker,open,adj_close\n"
        "2021-01-04,A,,11.0\n"
        "2021-01-05,A,,12.0\n"
    )
    table = md.load_prices(path)
    assert table.open_px is None
    assert not table.mask.any()


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(errors.DataError, match="cannot read"):
        md.load_prices(tmp_path / "nope.csv")


# ---------------------------------------------------------------------------
# loading: wide format
# ---------------------------------------------------------------------------


def test_wide_round_trip_with_open_sibling(tmp_path):
    table = synth.random_walk_table(3, 12, seed=6)
    path = tmp_path / "panel.csv"
    synth.write_wide_csv(table, path)
    assert (tmp_path / "panel.open.csv").exists()
    loaded = md.load_prices(path, md.FORMAT_WIDE)
    assert loaded.tickers == table.tickers
    np.testing.assert_array_equal(loaded.adj_close, table.adj_close)
    np.testing.assert_array_equal(loaded.open_px, table.open_px)


def test_wide_without_sibling_has_no_opens(tmp_path):
    table = synth.random_walk_table(3, 12, seed=6, with_opens=False)
    path = tmp_path / "panel.csv"
    synth.write_wide_csv(table, path)
    loaded = md.load_prices(path, md.FORMAT_WIDE)
    assert loaded.open_px is None


def test_wide_sibling_mismatch_rejected(tmp_path):
    table = synth.random_walk_table(3, 12, seed=6)
    path = tmp_path / "panel.csv"
    synth.write_wide_csv(table, path)
    sibling = tmp_path / "panel.open.csv"
    text = sibling.read_text().replace("S01", "S09")
    sibling.write_text(text)
    with pytest.raises(errors.DataError, match="do not match"):
        md.load_prices(path, md.FORMAT_WIDE)


def test_wide_sorts_ticker_columns(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text(
        "date,ZZ,AA\n"
        "2021-01-04,5.0,1.0\n"
        "2021-01-05,6.0,2.0\n"
    )
    table = md.load_prices(path, md.FORMAT_WIDE)
    assert table.tickers == ("AA", "ZZ")
    np.testing.assert_array_equal(table.adj_close[:, 0], [1.0, 2.0])


def test_unknown_format_rejected(tmp_path):
    path = tmp_path / "panel.csv"
    path.write_text("date,A\n2021-01-04,1.0\n")
    with pytest.raises(errors.DataError, match="unknown price format"):
        md.load_prices(path, "parquet")


# ---------------------------------------------------------------------------
# table invariants
# ---------------------------------------------------------------------------


def test_table_rejects_unsorted_dates_and_duplicate_tickers():
    days = synth.day_range(2)
    grid = np.full((2, 2), 10.0)
    mask = np.zeros((2, 2), dtype=bool)
    with pytest.raises(errors.DataError, match="strictly increasing"):
        md.PriceTable((days[1], days[0]), ("A", "B"), grid, mask)
    with pytest.raises(errors.DataError, match="duplicate"):
        md.PriceTable(days, ("A", "A"), grid, mask)


def test_table_rejects_nonpositive_unmasked_price():
    days = synth.day_range(2)
    grid = np.array([[10.0, -1.0], [10.0, 2.0]])
    mask = np.zeros((2, 2), dtype=bool)
    with pytest.raises(errors.DataError, match="strictly positive"):
        md.PriceTable(days, ("A", "B"), grid, mask)
    # the same cell masked is fine
    mask[0, 1] = True
    table = md.PriceTable(days, ("A", "B"), grid, mask)
    assert np.isnan(table.adj_close[0, 1])


def test_table_arrays_are_frozen():
    table = synth.flat_table(2, 3)
    with pytest.raises(ValueError):
        table.adj_close[0, 0] = 1.0


# ---------------------------------------------------------------------------
# quality filter / selection
# ---------------------------------------------------------------------------


def _table_with_missing_fracs() -> md.PriceTable:
    # 100 days x 3 tickers with masked fractions 0.03, 0.12, 0.30
    table = synth.flat_table(3, 100)
    cells = [(i, 0) for i in range(3)]
    cells += [(i, 1) for i in range(12)]
    cells += [(i, 2) for i in range(30)]
    return synth.with_masked(table, cells)


def test_quality_filter_is_strict_threshold():
    table = _table_with_missing_fracs()
    kept_tight = md.quality_filter(table, 0.05)
    assert kept_tight.tickers == ("S00",)
    kept_loose = md.quality_filter(table, 0.20)
    assert kept_loose.tickers == ("S00", "S01")
    # exactly at the boundary is excluded
    boundary = md.quality_filter(table, 0.12)
    assert boundary.tickers == ("S00",)


def test_quality_filter_empty_result_is_error():
    table = _table_with_missing_fracs()
    with pytest.raises(errors.DataError, match="removed every ticker"):
        md.quality_filter(table, 0.01)
    with pytest.raises(errors.DataError):
        md.quality_filter(table, -0.5)


def test_select_and_drop_tickers():
    table = synth.random_walk_table(4, 10, seed=1)
    sub = md.select_tickers(table, ["S02", "S00"])
    assert sub.tickers == ("S02", "S00")
    np.testing.assert_array_equal(sub.adj_close[:, 1], table.adj_close[:, 0])
    dropped = md.drop_tickers(table, {"S01"})
    assert dropped.tickers == ("S00", "S02", "S03")
    with pytest.raises(errors.DataError):
        md.drop_tickers(table, set(table.tickers))
    with pytest.raises(errors.DataError, match="unknown ticker"):
        md.select_tickers(table, ["S99"])


# ---------------------------------------------------------------------------
# returns
# ---------------------------------------------------------------------------


def test_returns_on_known_prices():
    days = synth.day_range(3)
    grid = np.array([[100.0], [90.0], [99.0]])
    table = md.PriceTable(days, ("A",), grid, np.zeros((3, 1), dtype=bool))
    rets = md.compute_returns(table)
    assert rets.dates == days[1:]
    np.testing.assert_allclose(rets.returns[:, 0], [-0.10, 0.10], atol=1e-12)


def test_returns_mask_covers_both_endpoints():
    table = synth.random_walk_table(2, 6, seed=3)
    table = synth.with_masked(table, [(2, 1)])
    rets = md.compute_returns(table)
    # return rows 1 (P2/P1) and 2 (P3/P2) lose the masked price
    assert rets.mask[1, 1] and rets.mask[2, 1]
    assert not rets.mask[:, 0].any()
    assert np.isnan(rets.returns[1, 1])


def test_returns_round_trip_reconstructs_prices():
    table = synth.random_walk_table(5, 60, seed=11)
    rets = md.compute_returns(table)
    rebuilt = table.adj_close[0] * np.cumprod(1.0 + rets.returns, axis=0)
    np.testing.assert_allclose(rebuilt, table.adj_close[1:], rtol=1e-12)


def test_returns_require_two_dates():
    table = synth.flat_table(2, 1)
    with pytest.raises(errors.InsufficientHistory):
        md.compute_returns(table)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


def test_window_slices_inclusive_end():
    rets = synth.random_returns(3, 50, seed=2)
    win = md.window(rets, end_index=29, length=30)
    assert win.shape == (30, 3)
    assert win.dates[-1] == rets.dates[29]
    assert win.dates[0] == rets.dates[0]
    np.testing.assert_array_equal(win.returns, rets.returns[:30])


def test_window_bounds_checked():
    rets = synth.random_returns(3, 50, seed=2)
    with pytest.raises(errors.InsufficientHistory, match="beyond"):
        md.window(rets, end_index=50, length=10)
    with pytest.raises(errors.InsufficientHistory):
        md.window(rets, end_index=8, length=10)
    with pytest.raises(ValueError):
        md.window(rets, end_index=8, length=0)
