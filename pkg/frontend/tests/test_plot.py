"""Renderer tests, including the mean-aggregation oracle check.

The independent recomputation below reads the raw file with the csv module
and computes plain-sum means, sharing no code with the package.
"""

import csv

import numpy as np
import pytest

from wsr_sweep_plot import PlotSpec, aggregate, load_records, render

HEADER = "L_m,variant,seed,wsr_bps_hz,iterations,converged,wall_s"


def write_table(path, rows):
    lines = [HEADER] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def sweep_file(tmp_path):
    rows = []
    rng = np.random.default_rng(7)
    for li, l_m in enumerate((20.0, 30.0, 40.0)):
        for vi, variant in enumerate(("no-ris", "ideal-ris")):
            for trial in range(5):
                wsr = 50.0 - l_m / 10 + 3 * vi + rng.uniform()
                rows.append([repr(l_m), variant, 1000 + trial, repr(float(wsr)),
                             7, "true", repr(0.25)])
    path = tmp_path / "sweep.csv"
    write_table(path, rows)
    return path


def independent_means(path):
    sums, counts = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["variant"], float(row["L_m"]))
            sums[key] = sums.get(key, 0.0) + float(row["wsr_bps_hz"])
            counts[key] = counts.get(key, 0) + 1
    return {key: sums[key] / counts[key] for key in sums}


class TestLoadAndAggregate:
    def test_single_variant_single_point(self, tmp_path):
        path = tmp_path / "one.csv"
        write_table(path, [[repr(25.0), "no-ris", 1, repr(4.5), 3, "true", repr(0.1)]])
        curves = aggregate(load_records(path))
        assert len(curves) == 1
        assert curves[0].distances.tolist() == [25.0]
        assert curves[0].means.tolist() == [4.5]

    def test_mean_matches_independent_recomputation(self, sweep_file):
        curves = aggregate(load_records(sweep_file))
        expected = independent_means(sweep_file)
        for curve in curves:
            for l_m, mean in zip(curve.distances, curve.means):
                assert mean == pytest.approx(expected[(curve.variant, l_m)], abs=1e-12)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("L_m,variant,seed\n25.0,no-ris,1\n")
        with pytest.raises(ValueError, match="wsr_bps_hz"):
            load_records(path)

    def test_empty_input_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError):
            load_records(path)
        path.write_text(HEADER + "\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_records(path)


class TestRender:
    def test_writes_image_with_curve_per_variant(self, sweep_file, tmp_path):
        out = tmp_path / "figure.png"
        curves = render(PlotSpec(input_path=str(sweep_file), output_path=str(out)))
        assert out.exists() and out.stat().st_size > 0
        assert sorted(c.variant for c in curves) == ["ideal-ris", "no-ris"]

    def test_confidence_band_and_labels(self, sweep_file, tmp_path):
        out = tmp_path / "banded.png"
        curves = render(PlotSpec(input_path=str(sweep_file), output_path=str(out),
                                 labels={"no-ris": "baseline"}, confidence_band=True))
        assert out.exists()
        assert all(np.all(c.std_errors >= 0) for c in curves)

    def test_deterministic_output(self, sweep_file, tmp_path):
        out1, out2 = tmp_path / "a.png", tmp_path / "b.png"
        render(PlotSpec(input_path=str(sweep_file), output_path=str(out1)))
        render(PlotSpec(input_path=str(sweep_file), output_path=str(out2)))
        assert out1.read_bytes() == out2.read_bytes()

    def test_cli_round_trip(self, sweep_file, tmp_path, capsys):
        from wsr_sweep_plot.plot import main
        out = tmp_path / "cli.png"
        assert main(["--input", str(sweep_file), "--output", str(out), "--band"]) == 0
        assert out.exists()
        assert main(["--input", str(tmp_path / "missing.csv"),
                     "--output", str(out)]) == 1
