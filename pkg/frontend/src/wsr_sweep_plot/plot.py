"""Figure renderer for distance-sweep result tables.

Consumes the delimited output of the sweep harness (columns L_m, variant,
seed, wsr_bps_hz, iterations, converged, wall_s) and draws one curve per
variant: mean weighted sum-rate against the user-cluster distance, with an
optional +-1 standard-error band.  No coupling to the simulator beyond the
file format.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = ("L_m", "variant", "wsr_bps_hz")

DEFAULT_LABELS = {
    "no-ris": "No RIS",
    "ideal-ris": "Ideal RIS",
    "continuous-phase": "Continuous phase shift",
}


@dataclass
class PlotSpec:
    input_path: str
    output_path: str
    labels: dict = field(default_factory=dict)
    confidence_band: bool = False


@dataclass
class Curve:
    variant: str
    distances: np.ndarray
    means: np.ndarray
    std_errors: np.ndarray


def load_records(path) -> list[dict]:
    """Read the sweep table; raises a descriptive error on a bad header."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty input file")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing required columns: {', '.join(missing)}")
        records = [{"L_m": float(row["L_m"]), "variant": row["variant"],
                    "wsr_bps_hz": float(row["wsr_bps_hz"])} for row in reader]
    if not records:
        raise ValueError(f"{path}: no data rows")
    return records


def aggregate(records: list[dict]) -> list[Curve]:
    """Mean and standard error per (variant, distance), one curve per variant."""
    groups: dict[str, dict[float, list[float]]] = {}
    order: list[str] = []
    for rec in records:
        if rec["variant"] not in groups:
            groups[rec["variant"]] = {}
            order.append(rec["variant"])
        groups[rec["variant"]].setdefault(rec["L_m"], []).append(rec["wsr_bps_hz"])
    curves = []
    for variant in order:
        distances = np.array(sorted(groups[variant]))
        means = np.array([np.mean(groups[variant][l]) for l in distances])
        errs = np.array([
            (np.std(groups[variant][l], ddof=1) / np.sqrt(len(groups[variant][l]))
             if len(groups[variant][l]) > 1 else 0.0)
            for l in distances])
        curves.append(Curve(variant, distances, means, errs))
    return curves


def render(spec: PlotSpec) -> list[Curve]:
    """Draw the figure and write it to spec.output_path; returns the curves."""
    curves = aggregate(load_records(spec.input_path))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for curve in curves:
        label = spec.labels.get(curve.variant) or DEFAULT_LABELS.get(curve.variant,
                                                                     curve.variant)
        line, = ax.plot(curve.distances, curve.means, marker="o", label=label)
        if spec.confidence_band and np.any(curve.std_errors > 0):
            ax.fill_between(curve.distances,
                            curve.means - curve.std_errors,
                            curve.means + curve.std_errors,
                            alpha=0.2, color=line.get_color())
    ax.set_xlabel("user-cluster distance L (m)")
    ax.set_ylabel("weighted sum-rate (bit/s/Hz)")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()

    out = Path(spec.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    # strip volatile metadata so identical inputs give identical bytes
    suffix = out.suffix.lower()
    metadata = None
    if suffix == ".svg":
        metadata = {"Date": None}
    elif suffix == ".pdf":
        metadata = {"CreationDate": None}
    fig.savefig(out, dpi=150, metadata=metadata)
    plt.close(fig)
    return curves


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wsr-sweep-plot",
        description="Plot mean weighted sum-rate against distance from a sweep table")
    parser.add_argument("--input", required=True, help="sweep results CSV")
    parser.add_argument("--output", required=True, help="image path (.png/.svg/.pdf)")
    parser.add_argument("--format", help="image format override (default: from suffix)")
    parser.add_argument("--band", action="store_true",
                        help="draw a +-1 standard-error band per curve")
    args = parser.parse_args(argv)

    output = args.output
    if args.format:
        stem = Path(output)
        output = str(stem.with_suffix("." + args.format.lstrip(".")))
    try:
        curves = render(PlotSpec(input_path=args.input, output_path=output,
                                 confidence_band=args.band))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {output} with {len(curves)} curve(s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
