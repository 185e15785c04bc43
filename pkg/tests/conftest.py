import csv

import numpy as np
import pytest

from wildfire_genome.schema import FeatureSchema, IndicatorSchema
from wildfire_genome.synth import DriverSpec, RegionSpec, SynthConfig, generate

INDICATORS = IndicatorSchema().names
FEATURES = list(FeatureSchema().names)


def cell_row(cell_id, region, **overrides):
    """One valid CSV row as a dict; keyword overrides replace single fields."""
    row = {"cell_id": format(cell_id, "x"), "region_id": region}
    row.update({name: "0.5" for name in INDICATORS})
    row.update({name: "10.0" for name in FEATURES})
    row.update({k: str(v) for k, v in overrides.items()})
    return row


def write_rows(path, rows, columns=None):
    columns = columns or ["cell_id", "region_id", *INDICATORS, *FEATURES]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


@pytest.fixture(scope="session")
def small_table():
    config = SynthConfig((RegionSpec("A", 400), RegionSpec("B", 300, DriverSpec(sign=-1))), seed=3)
    return generate(config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    """Remember one acceptance outcome; all of them are printed in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
