import numpy as np
import pytest

from ris_cellfree.cli import main
from ris_cellfree.experiment import (ConfigError, ExperimentSpec, SweepRecord,
                                     cell_seed, db_to_linear, dbm_to_watts,
                                     emit_results, parse_config, parse_records,
                                     run_sweep, summarize)

FULL_CONFIG = """\
# tiny sweep for tests
num_bs = 2
num_ris = 1
num_users = 2
num_subcarriers = 1
bs_antennas = 2
user_antennas = 1
ris_elements = 2
p_bmax_db = 0
noise_dbm = -120
bs_positions = 0,10; 0,-10
ris_positions = 30,5
user_circle_radius_m = 1.0
l_start_m = 25
l_stop_m = 35
l_step_m = 10
trials = 2
variants = no-ris, ideal-ris
seed = 3
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text(FULL_CONFIG)
    return path


class TestParseConfig:
    def test_full_parse(self, config_file):
        spec = parse_config(config_file)
        assert spec.scenario.num_bs == 2
        assert spec.scenario.max_power == (1.0, 1.0)          # 0 dB -> 1 W
        assert spec.scenario.noise_power == pytest.approx(1e-15)   # -120 dBm
        assert spec.distances() == [25.0, 35.0]
        assert spec.variants == ("no-ris", "ideal-ris")

    def test_db_conversions(self):
        assert db_to_linear(0.0) == pytest.approx(1.0)
        assert db_to_linear(3.0) == pytest.approx(10 ** 0.3)
        assert dbm_to_watts(-120.0) == pytest.approx(1e-15)
        assert dbm_to_watts(30.0) == pytest.approx(1.0)

    def test_empty_file_lists_all_missing_keys(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(path)
        message = str(excinfo.value)
        for key in ("num_bs", "p_bmax_db", "noise_dbm", "variants", "seed"):
            assert key in message

    def test_unknown_key_names_key_and_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(FULL_CONFIG + "bogus_key = 7\n")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(path)
        assert "bogus_key" in str(excinfo.value)
        assert ":20" in str(excinfo.value)

    def test_malformed_value_names_key_and_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(FULL_CONFIG.replace("trials = 2", "trials = two"))
        with pytest.raises(ConfigError) as excinfo:
            parse_config(path)
        assert "trials" in str(excinfo.value)

    def test_unknown_variant_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(FULL_CONFIG.replace("variants = no-ris, ideal-ris",
                                            "variants = magic-ris"))
        with pytest.raises(ValueError):
            parse_config(path)

    def test_spec_invariants(self):
        from ris_cellfree.channels import ScenarioConfig
        scenario = ScenarioConfig()
        with pytest.raises(ValueError):
            ExperimentSpec(scenario, 10.0, 5.0, 1.0, 1, ("no-ris",), None, 0)
        with pytest.raises(ValueError):
            ExperimentSpec(scenario, 5.0, 10.0, 0.0, 1, ("no-ris",), None, 0)
        with pytest.raises(ValueError):
            ExperimentSpec(scenario, 5.0, 10.0, 1.0, 0, ("no-ris",), None, 0)


class TestEmitResults:
    def _record(self, **overrides):
        base = dict(l_m=30.0, variant="no-ris", seed=12, wsr_bps_hz=4.25,
                    iterations=9, converged=True, wall_s=0.125)
        base.update(overrides)
        return SweepRecord(**base)

    def test_single_record_two_lines(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_results([self._record()], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == "L_m,variant,seed,wsr_bps_hz,iterations,converged,wall_s"

    def test_round_trip_exact(self, tmp_path):
        path = tmp_path / "out.csv"
        records = [self._record(l_m=30.0, variant="ideal-ris", wsr_bps_hz=1/3),
                   self._record(l_m=30.0, variant="no-ris", wsr_bps_hz=np.pi),
                   self._record(l_m=25.0, variant="no-ris", wall_s=0.7)]
        emit_results(records, path)
        back = parse_records(path)
        expected = sorted(records, key=lambda r: (r.l_m, r.variant != "no-ris"))
        assert back == expected

    def test_column_order_fixed_regardless_of_variants(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_results([self._record(variant="continuous-phase")], p1)
        emit_results([self._record(variant="no-ris")], p2)
        assert p1.read_text().splitlines()[0] == p2.read_text().splitlines()[0]

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_results([], tmp_path / "out.csv")


class TestSweep:
    def test_cell_seed_is_variant_independent_and_stable(self):
        assert cell_seed(3, 0, 1) == cell_seed(3, 0, 1)
        assert cell_seed(3, 0, 1) != cell_seed(3, 0, 2)
        assert cell_seed(3, 0, 1) != cell_seed(4, 0, 1)

    def test_rerun_is_deterministic_except_wall_time(self, config_file, tmp_path):
        spec = parse_config(config_file)
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        rec1, fail1 = run_sweep(type(spec)(**{**spec.__dict__, "output_path": str(out1)}))
        rec2, fail2 = run_sweep(type(spec)(**{**spec.__dict__, "output_path": str(out2)}))
        assert not fail1 and not fail2
        for a, b in zip(rec1, rec2):
            assert (a.l_m, a.variant, a.seed, a.wsr_bps_hz, a.iterations,
                    a.converged) == (b.l_m, b.variant, b.seed, b.wsr_bps_hz,
                                     b.iterations, b.converged)

    def test_no_ris_variant_equals_zero_ris_scenario(self, config_file):
        # forcing R=0 in the base scenario makes ideal-ris the same code path
        spec = parse_config(config_file)
        from dataclasses import replace
        zero_ris = replace(spec, scenario=replace(spec.scenario, num_ris=0))
        records, _ = run_sweep(zero_ris)
        by_variant = {}
        for rec in records:
            by_variant.setdefault(rec.variant, []).append(rec.wsr_bps_hz)
        assert by_variant["no-ris"] == pytest.approx(by_variant["ideal-ris"])

    def test_incremental_file_and_canonical_rewrite(self, config_file, tmp_path):
        spec = parse_config(config_file)
        from dataclasses import replace
        out = tmp_path / "sweep.csv"
        records, failures = run_sweep(replace(spec, output_path=str(out)))
        assert not failures
        back = parse_records(out)
        assert back == records
        # canonical order: L ascending, then variant in canonical order
        keys = [(r.l_m, r.variant) for r in back]
        assert keys == sorted(keys, key=lambda t: (t[0], t[1] != "no-ris"))

    def test_summarize_contains_each_group(self, config_file):
        spec = parse_config(config_file)
        records, _ = run_sweep(spec)
        table = summarize(records)
        assert "no-ris" in table and "ideal-ris" in table
        assert "25" in table and "35" in table

    def test_parallel_workers_match_sequential(self, config_file, tmp_path):
        spec = parse_config(config_file)
        from dataclasses import replace
        seq, _ = run_sweep(replace(spec, output_path=str(tmp_path / "seq.csv")))
        par, _ = run_sweep(replace(spec, output_path=str(tmp_path / "par.csv")),
                           workers=2)
        strip = lambda recs: [(r.l_m, r.variant, r.seed, r.wsr_bps_hz, r.iterations,
                               r.converged) for r in recs]
        assert strip(seq) == strip(par)


class TestCli:
    def test_validate_subcommand_passes(self, capsys):
        code = main(["validate", "--seed", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS" in out and "FAIL" not in out

    def test_run_subcommand_writes_results(self, config_file, tmp_path, capsys):
        out = tmp_path / "cli.csv"
        code = main(["run", "--config", str(config_file), "--output", str(out),
                     "--trials", "1"])
        assert code == 0
        assert out.exists()
        stdout = capsys.readouterr().out
        assert "mean_wsr" in stdout
        assert len(parse_records(out)) == 2 * 2   # 2 distances x 2 variants x 1 trial

    def test_single_subcommand_prints_trace(self, config_file, capsys):
        code = main(["single", "--config", str(config_file), "--l-m", "30",
                     "--variant", "ideal-ris"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "final wsr" in stdout
        assert "per-BS power" in stdout

    def test_run_without_output_errors(self, config_file, capsys):
        code = main(["run", "--config", str(config_file)])
        assert code == 2
