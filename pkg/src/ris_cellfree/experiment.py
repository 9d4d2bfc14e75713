"""Distance-sweep experiment harness.

Sweeps the user-cluster distance L, runs seeded Monte-Carlo trials for each
requested variant and persists one record per (L, variant, trial) cell.
Cell seeds derive from (root seed, L index, trial) only -- never from the
variant -- so every variant sees identical user drops and direct channels
and the variant curves are paired sample by sample.

Variants:
  no-ris           -- the scenario with the RIS count forced to zero;
  ideal-ris        -- reflection coefficients anywhere in the unit disk;
  continuous-phase -- unit-modulus coefficients (projected each iteration).
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channels import ScenarioConfig, generate_channels, place_users
from .metrics import MODE_RELAXED, MODE_UNIT_MODULUS, PhaseConfig
from .optimizer import OptimizerFailure, OptimizerOptions, run

VARIANTS = ("no-ris", "ideal-ris", "continuous-phase")

RESULT_COLUMNS = ("L_m", "variant", "seed", "wsr_bps_hz", "iterations",
                  "converged", "wall_s")


class ConfigError(ValueError):
    """Malformed experiment configuration file."""


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig
    l_start: float
    l_stop: float
    l_step: float
    trials: int
    variants: tuple
    output_path: str | None
    seed: int

    def __post_init__(self):
        if self.l_start > self.l_stop:
            raise ValueError("l_start must be <= l_stop")
        if self.l_step <= 0:
            raise ValueError("l_step must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.variants:
            raise ValueError("at least one variant is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}; choose from {VARIANTS}")

    def distances(self) -> list[float]:
        out = []
        value = self.l_start
        while value <= self.l_stop + 1e-9:
            out.append(round(value, 9))
            value += self.l_step
        return out


@dataclass
class SweepRecord:
    l_m: float
    variant: str
    seed: int
    wsr_bps_hz: float
    iterations: int
    converged: bool
    wall_s: float


# ---------------------------------------------------------------------------
# Configuration file parsing: plain "key = value" lines, '#' comments
# ---------------------------------------------------------------------------

def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_float_list(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_positions(text: str) -> tuple:
    pairs = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        xy = [tok for tok in chunk.split(",") if tok.strip()]
        if len(xy) != 2:
            raise ValueError(f"expected 'x,y' pairs separated by ';', got {chunk!r}")
        pairs.append((float(xy[0]), float(xy[1])))
    return tuple(pairs)


def _parse_variants(text: str) -> tuple:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def db_to_linear(db: float) -> float:
    """Power ratio of a dB figure: x dB -> 10^(x/10)."""
    return float(10.0 ** (db / 10.0))


def dbm_to_watts(dbm: float) -> float:
    """Absolute power of a dBm figure: -120 dBm -> 1e-15 W."""
    return float(10.0 ** ((dbm - 30.0) / 10.0))


_REQUIRED_KEYS = {
    "num_bs": _parse_int,
    "num_ris": _parse_int,
    "num_users": _parse_int,
    "num_subcarriers": _parse_int,
    "bs_antennas": _parse_int,
    "user_antennas": _parse_int,
    "ris_elements": _parse_int,
    "p_bmax_db": _parse_float_list,
    "noise_dbm": _parse_float,
    "l_start_m": _parse_float,
    "l_stop_m": _parse_float,
    "l_step_m": _parse_float,
    "trials": _parse_int,
    "variants": _parse_variants,
    "seed": _parse_int,
}

_OPTIONAL_KEYS = {
    "bs_positions": _parse_positions,
    "ris_positions": _parse_positions,
    "user_circle_radius_m": _parse_float,
    "user_weights": _parse_float_list,
    "bs_user_ref_loss_db": _parse_float,
    "bs_user_exponent": _parse_float,
    "bs_ris_ref_loss_db": _parse_float,
    "bs_ris_exponent": _parse_float,
    "ris_user_ref_loss_db": _parse_float,
    "ris_user_exponent": _parse_float,
    "output": str.strip,
}


def parse_config(path) -> ExperimentSpec:
    """Read a key=value experiment file; dB/dBm figures become linear watts."""
    path = Path(path)
    raw: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path.name}:{line_no}: expected 'key = value', got {line!r}")
        key, value = body.split("=", 1)
        key = key.strip().lower()
        if key not in _REQUIRED_KEYS and key not in _OPTIONAL_KEYS:
            raise ConfigError(f"{path.name}:{line_no}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"{path.name}:{line_no}: duplicate key '{key}'")
        raw[key] = (value.strip(), line_no)

    missing = [k for k in _REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"{path.name}: missing required keys: {', '.join(sorted(missing))}")

    values: dict = {}
    for key, (text, line_no) in raw.items():
        parser = _REQUIRED_KEYS.get(key) or _OPTIONAL_KEYS[key]
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"{path.name}:{line_no}: malformed value for '{key}': {exc}") from exc

    pmax = tuple(db_to_linear(db) for db in values["p_bmax_db"])
    scenario_kwargs = dict(
        num_bs=values["num_bs"], num_ris=values["num_ris"],
        num_users=values["num_users"], num_subcarriers=values["num_subcarriers"],
        bs_antennas=values["bs_antennas"], user_antennas=values["user_antennas"],
        ris_elements=values["ris_elements"],
        max_power=pmax if len(pmax) > 1 else pmax[0],
        noise_power=dbm_to_watts(values["noise_dbm"]),
        user_circle_center=(values["l_start_m"], 0.0),
        rng_seed=values["seed"],
    )
    for cfg_key, spec_key in (("bs_positions", "bs_positions"),
                              ("ris_positions", "ris_positions"),
                              ("user_circle_radius_m", "user_circle_radius"),
                              ("user_weights", "user_weights"),
                              ("bs_user_ref_loss_db", "bs_user_ref_loss_db"),
                              ("bs_user_exponent", "bs_user_exponent"),
                              ("bs_ris_ref_loss_db", "bs_ris_ref_loss_db"),
                              ("bs_ris_exponent", "bs_ris_exponent"),
                              ("ris_user_ref_loss_db", "ris_user_ref_loss_db"),
                              ("ris_user_exponent", "ris_user_exponent")):
        if cfg_key in values:
            scenario_kwargs[spec_key] = values[cfg_key]

    try:
        scenario = ScenarioConfig(**scenario_kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path.name}: {exc}") from exc

    return ExperimentSpec(
        scenario=scenario,
        l_start=values["l_start_m"], l_stop=values["l_stop_m"], l_step=values["l_step_m"],
        trials=values["trials"], variants=values["variants"],
        output_path=values.get("output"), seed=values["seed"],
    )


# ---------------------------------------------------------------------------
# Sweep execution
# ---------------------------------------------------------------------------

def cell_seed(root_seed: int, l_index: int, trial: int) -> int:
    """Variant-independent per-cell seed (shared channels across variants)."""
    ss = np.random.SeedSequence([int(root_seed), int(l_index), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def _cell_config(scenario: ScenarioConfig, l_m: float, variant: str,
                 seed: int) -> ScenarioConfig:
    num_ris = 0 if variant == "no-ris" else scenario.num_ris
    return replace(scenario, user_circle_center=(l_m, 0.0), num_ris=num_ris,
                   rng_seed=seed)


def run_cell(scenario: ScenarioConfig, l_m: float, variant: str, trial: int,
             seed: int, max_outer_iterations: int = 100) -> tuple[SweepRecord, str | None]:
    """Run one optimization cell; solver failures yield a non-converged record.

    The ideal-RIS cell is a local method over a feasible set that contains
    every unit-modulus point, so it additionally runs the unit-modulus
    variant at the same seed and refines that (feasible) solution within
    the relaxed set, reporting the better outcome.  Monotonicity of the
    refinement guarantees the ideal result never falls below the
    continuous-phase one on the same channels.
    """
    config = _cell_config(scenario, l_m, variant, seed)
    mode = MODE_UNIT_MODULUS if variant == "continuous-phase" else MODE_RELAXED
    options = OptimizerOptions(max_outer_iterations=max_outer_iterations,
                               phase_mode=mode)
    start = time.perf_counter()
    error = None
    try:
        rng = np.random.default_rng(seed)
        positions = place_users(config, rng)
        channels = generate_channels(config, positions, rng)
        result = run(config, channels, options, rng)

        if variant == "ideal-ris" and config.num_ris > 0:
            try:
                # second start: refine the projected-constraint solution
                rng_u = np.random.default_rng(seed)
                place_users(config, rng_u)
                channels_u = generate_channels(config, positions, rng_u)
                unit_opts = OptimizerOptions(max_outer_iterations=max_outer_iterations,
                                             phase_mode=MODE_UNIT_MODULUS)
                unit = run(config, channels_u, unit_opts, rng_u)
                refined = run(config, channels, options,
                              np.random.default_rng(seed),
                              initial_state=(PhaseConfig(unit.phases.theta, MODE_RELAXED),
                                             unit.precoder))
                if refined.wsr_trace[-1] > result.wsr_trace[-1]:
                    result = refined
            except OptimizerFailure:
                pass            # best-effort second start; keep the base run

        record = SweepRecord(l_m=l_m, variant=variant, seed=seed,
                             wsr_bps_hz=float(result.wsr_trace[-1]),
                             iterations=result.iterations_used,
                             converged=bool(result.converged),
                             wall_s=time.perf_counter() - start)
    except OptimizerFailure as exc:
        trace = exc.wsr_trace
        record = SweepRecord(l_m=l_m, variant=variant, seed=seed,
                             wsr_bps_hz=float(trace[-1]) if trace.size else 0.0,
                             iterations=int(trace.size), converged=False,
                             wall_s=time.perf_counter() - start)
        error = f"L={l_m} variant={variant} trial={trial}: {exc}"
    return record, error


def _record_row(record: SweepRecord) -> list:
    return [repr(float(record.l_m)), record.variant, str(record.seed),
            repr(float(record.wsr_bps_hz)), str(record.iterations),
            "true" if record.converged else "false", repr(float(record.wall_s))]


def run_sweep(spec: ExperimentSpec, workers: int = 1,
              log=None) -> tuple[list[SweepRecord], list[str]]:
    """Execute every (L, variant, trial) cell; returns records plus failure messages.

    Completed cells are appended to the output file as they finish so an
    interrupted run keeps its finished rows; on success the file is
    rewritten in canonical order via :func:`emit_results`.
    """
    log = log or (lambda msg: None)
    distances = spec.distances()
    variants = tuple(v for v in VARIANTS if v in spec.variants)
    cells = [(li, l_m, variant, trial)
             for li, l_m in enumerate(distances)
             for variant in variants
             for trial in range(spec.trials)]

    out_path = Path(spec.output_path) if spec.output_path else None
    sink = None
    writer = None
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        sink = out_path.open("w", encoding="utf-8", newline="")
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        sink.flush()

    results: dict[tuple, SweepRecord] = {}
    failures: list[str] = []

    def _store(key, record, error):
        results[key] = record
        if error:
            failures.append(error)
        if writer is not None:
            writer.writerow(_record_row(record))
            sink.flush()
        log(f"[{len(results)}/{len(cells)}] L={record.l_m:g} {record.variant} "
            f"trial={key[3]} wsr={record.wsr_bps_hz:.4f}")

    try:
        if workers <= 1:
            for li, l_m, variant, trial in cells:
                seed = cell_seed(spec.seed, li, trial)
                record, error = run_cell(spec.scenario, l_m, variant, trial, seed)
                _store((li, l_m, variant, trial), record, error)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = {}
                for li, l_m, variant, trial in cells:
                    seed = cell_seed(spec.seed, li, trial)
                    fut = pool.submit(run_cell, spec.scenario, l_m, variant, trial, seed)
                    futures[fut] = (li, l_m, variant, trial)
                for fut in concurrent.futures.as_completed(futures):
                    record, error = fut.result()
                    _store(futures[fut], record, error)
    finally:
        if sink is not None:
            sink.close()

    ordered = [results[key] for key in sorted(results.keys(),
                                              key=lambda c: (c[0], variants.index(c[2]), c[3]))]
    if out_path is not None:
        emit_results(ordered, out_path)
    return ordered, failures


def emit_results(records: list[SweepRecord], path) -> None:
    """Write the canonical results table: fixed columns, deterministic row order."""
    if not records:
        raise ValueError("no records to emit")
    variant_rank = {v: i for i, v in enumerate(VARIANTS)}
    ordered = sorted(records, key=lambda r: (r.l_m, variant_rank.get(r.variant, len(VARIANTS))))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for record in ordered:
            writer.writerow(_record_row(record))


def parse_records(path) -> list[SweepRecord]:
    """Read back a results table produced by :func:`emit_results`."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty results file")
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header!r}")
        records = []
        for row in reader:
            records.append(SweepRecord(
                l_m=float(row[0]), variant=row[1], seed=int(row[2]),
                wsr_bps_hz=float(row[3]), iterations=int(row[4]),
                converged=row[5] == "true", wall_s=float(row[6])))
    return records


def summarize(records: list[SweepRecord]) -> str:
    """Mean WSR per (L, variant), formatted as a small text table."""
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        groups.setdefault((rec.l_m, rec.variant), []).append(rec.wsr_bps_hz)
    variant_rank = {v: i for i, v in enumerate(VARIANTS)}
    out = io.StringIO()
    out.write(f"{'L_m':>8}  {'variant':<18}{'trials':>7}  {'mean_wsr':>12}\n")
    for (l_m, variant) in sorted(groups, key=lambda k: (k[0], variant_rank.get(k[1], 99))):
        vals = groups[(l_m, variant)]
        out.write(f"{l_m:>8g}  {variant:<18}{len(vals):>7}  {np.mean(vals):>12.4f}\n")
    return out.getvalue()
