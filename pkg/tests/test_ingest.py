import numpy as np
import pytest

from wildfire_genome.exceptions import DuplicateCellId, MissingColumn
from wildfire_genome.ingest import (
    format_cell_id, load_cell_table, parse_cell_id, partition_by_region, write_cell_table,
)

from conftest import FEATURES, INDICATORS, cell_row, write_rows


def test_three_well_formed_rows_load_with_empty_report(tmp_path):
    path = write_rows(tmp_path / "c.csv", [cell_row(i, "A") for i in (1, 2, 3)])
    table = load_cell_table(path)
    assert len(table) == 3
    assert table.report.rejected == []
    assert table.report.accepted_count == 3
    assert table.indicators.shape == (3, 7) and table.features.shape == (3, 20)


def test_probability_above_one_rejects_only_that_row(tmp_path):
    rows = [cell_row(1, "A"), cell_row(2, "A", BP=1.5), cell_row(3, "A")]
    table = load_cell_table(write_rows(tmp_path / "c.csv", rows))
    assert len(table) == 2
    assert table.report.rejected == [{"row": 2, "column": "BP", "reason": "OutOfRange"}]
    assert sorted(table.cell_ids.tolist()) == [1, 3]


def test_duplicate_cell_id_in_region_names_the_id(tmp_path):
    path = write_rows(tmp_path / "c.csv", [cell_row(0xABC, "A"), cell_row(0xABC, "A")])
    with pytest.raises(DuplicateCellId, match="abc"):
        load_cell_table(path)


def test_same_cell_id_in_two_regions_is_allowed(tmp_path):
    table = load_cell_table(write_rows(tmp_path / "c.csv", [cell_row(7, "A"), cell_row(7, "B")]))
    assert len(table) == 2


def test_missing_column_raises(tmp_path):
    columns = ["cell_id", "region_id", *INDICATORS[:-1], *FEATURES]
    path = write_rows(tmp_path / "c.csv", [cell_row(1, "A")], columns)
    with pytest.raises(MissingColumn, match="Exposure"):
        load_cell_table(path)


@pytest.mark.parametrize("field,value,reason", [
    ("WHP", "abc", "UnparseableValue"),
    ("WHP", "", "MissingValue"),
    ("WHP", "nan", "UnparseableValue"),
    ("WHP", "-1", "OutOfRange"),
    ("Exposure", "1.01", "OutOfRange"),
    ("tsp_nf_pct", "101", "OutOfRange"),
    ("cell_id", "zz", "UnparseableValue"),
])
def test_row_level_rejections(tmp_path, field, value, reason):
    rows = [cell_row(1, "A"), cell_row(2, "A")]
    rows[1][field] = value
    table = load_cell_table(write_rows(tmp_path / "c.csv", rows))
    assert len(table) == 1
    assert table.report.rejected[0]["reason"] == reason
    assert table.report.rejected[0]["column"] == field


def test_percent_features_are_scaled_to_fractions(tmp_path):
    table = load_cell_table(write_rows(tmp_path / "c.csv", [cell_row(1, "A", tsp_nf_pct=35, elevation=35)]))
    X = table.feature_matrix()
    assert X[0, FEATURES.index("tsp_nf_pct")] == pytest.approx(0.35)
    assert X[0, FEATURES.index("elevation")] == 35.0


def test_cell_id_hex_round_trip():
    for value in (0, 1, 0x8828308281FFFFF, 2**64 - 1):
        assert parse_cell_id(format_cell_id(value)) == value
    assert parse_cell_id("0xFF") == 255
    with pytest.raises(ValueError):
        parse_cell_id(format(2**64, "x"))


def test_write_then_load_is_identity(tmp_path, small_table):
    write_cell_table(small_table, tmp_path / "t.csv")
    again = load_cell_table(tmp_path / "t.csv")
    assert again.equals(small_table)
    write_cell_table(again, tmp_path / "u.csv")
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "u.csv").read_bytes()


def test_partition_sizes(tmp_path):
    rows = [cell_row(i, "A") for i in range(5)] + [cell_row(i, "B") for i in range(7)]
    parts = partition_by_region(load_cell_table(write_rows(tmp_path / "c.csv", rows)))
    assert list(parts) == ["A", "B"]
    assert [len(p) for p in parts.values()] == [5, 7]


def test_single_region_partition_is_identity(small_table):
    part = small_table.take(np.flatnonzero(small_table.region_ids == "A"))
    parts = partition_by_region(part)
    assert list(parts) == ["A"] and parts["A"].equals(part)


def test_empty_table_gives_empty_partition(tmp_path):
    table = load_cell_table(write_rows(tmp_path / "c.csv", []))
    assert len(table) == 0
    assert partition_by_region(table) == {}


def test_canonical_orders_by_cell_id(small_table):
    ids = small_table.canonical().cell_ids
    assert np.all(ids[1:] > ids[:-1])
