"""Command line front end.

Loads a network from a JSON file or a built-in preset, maps it, then runs the
functional bit-level simulation, the timing model, or both. Reports land as a
human-readable table plus a JSON document with stable field order; a short
summary prints to stdout. Exit status: 0 on success, 1 when the functional
run diverges from the oracle, 2 on mapping or configuration failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import engine, timing
from .mapper import (
    MappingError,
    MappingPlan,
    NetworkDescription,
    footprint_bits,
    map_network,
    network_from_json,
    network_to_json,
    plan_residual,
    plan_to_text,
    validate_plan,
)
from .presets import PRESET_NAMES, preset
from .subarray import ConfigurationError
from .timing import TimingParams


class RunConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    rows: int = 256
    cols: int = 256
    column_size: int | None = None       # defaults to cols
    subarrays_per_bank: int | None = None
    banks: int | None = None             # defaults to layers + reserved
    mode: str = "both"                   # functional | timing | both
    seed: int = 0
    images: int = 4
    tree_width: int | None = None
    timing: TimingParams = field(default_factory=TimingParams)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise RunConfigError("subarray dimensions must be positive")
        if self.column_size is None:
            self.column_size = self.cols
        if self.column_size > self.cols:
            raise RunConfigError("column_size cannot exceed the subarray width")
        if self.mode not in ("functional", "timing", "both"):
            raise RunConfigError(f"unknown mode {self.mode!r}")
        if self.images < 1:
            raise RunConfigError("need at least one image")


def load_network(path: str | Path) -> NetworkDescription:
    p = Path(path)
    if not p.exists():
        raise MappingError(f"network file {p} does not exist")
    return network_from_json(p.read_text())


def save_network(net: NetworkDescription, path: str | Path) -> None:
    Path(path).write_text(network_to_json(net))


# --------------------------------------------------------------------------
# Report assembly
# --------------------------------------------------------------------------

def _build_report(
    net: NetworkDescription,
    config: RunConfig,
    plan: MappingPlan,
    latencies,
    pipeline,
    residual_ns: float,
    functional,
) -> dict:
    per_layer = []
    for place, lat in zip(plan.layers, latencies):
        per_layer.append(
            {
                "layer": place.layer_index,
                "kind": place.kind,
                "mac_size": place.mac_size,
                "macs_total": place.macs_total,
                "passes": place.passes,
                "subarrays_used": place.subarrays_used,
                "multiply_ns": lat.multiply_ns,
                "reduce_ns": lat.reduce_ns,
                "sfu_ns": lat.sfu_ns,
                "transpose_ns": lat.transpose_ns,
                "transfer_ns": lat.transfer_ns,
                "total_ns": lat.total_ns,
                "aap_count": lat.aap_count,
                "footprint_bits": footprint_bits(
                    net.layers[place.layer_index], net.precision
                ),
                "placed_bits": place.placed_bits(),
                "padding_bits": place.padding_bits(),
            }
        )
    report = {
        "network": net.name,
        "precision": net.precision,
        "parallelism": list(net.parallelism),
        "mode": config.mode,
        "seed": config.seed,
        "geometry": {
            "rows": config.rows,
            "cols": config.cols,
            "column_size": config.column_size,
            "subarrays_per_bank": config.subarrays_per_bank,
            "banks": config.banks,
        },
        "per_layer": per_layer,
        "aap_total": sum(e["aap_count"] for e in per_layer),
        "footprint_bits_total": sum(e["footprint_bits"] for e in per_layer),
        "pipeline": {
            "images": pipeline.images,
            "fill_ns": pipeline.fill_ns,
            "steady_state_per_image_ns": pipeline.steady_state_ns,
            "total_ns": pipeline.total_ns,
            "residual_overhead_ns": residual_ns,
        },
        "area_power": timing.area_power_report(),
        "energy_nj_derived_from_table": timing.energy_estimate_nj(
            pipeline.total_ns
        ),
    }
    if functional is not None:
        report["functional"] = {
            "passed": functional.passed,
            "mismatch": functional.mismatch,
            "trace_aap_total": functional.total_aap(),
        }
    return report


def _format_table(report: dict) -> str:
    lines = [
        f"network {report['network']}  precision {report['precision']} bits  "
        f"mode {report['mode']}  seed {report['seed']}",
        "",
        f"{'layer':>5} {'kind':>6} {'macs':>10} {'passes':>6} "
        f"{'multiply_ns':>14} {'reduce_ns':>14} {'sfu_ns':>12} "
        f"{'transfer_ns':>12} {'total_ns':>14}",
    ]
    for e in report["per_layer"]:
        lines.append(
            f"{e['layer']:>5} {e['kind']:>6} {e['macs_total']:>10} "
            f"{e['passes']:>6} {e['multiply_ns']:>14.2f} {e['reduce_ns']:>14.2f} "
            f"{e['sfu_ns']:>12.2f} {e['transfer_ns']:>12.2f} {e['total_ns']:>14.2f}"
        )
    pipe = report["pipeline"]
    lines += [
        "",
        f"pipeline: fill {pipe['fill_ns']:.2f} ns, steady "
        f"{pipe['steady_state_per_image_ns']:.2f} ns/image, "
        f"total({pipe['images']}) {pipe['total_ns']:.2f} ns",
        f"footprint {report['footprint_bits_total']} bits, "
        f"multiply AAPs {report['aap_total']}",
        "",
        "component        area_um2      pct      power_nw      pct",
    ]
    ap = report["area_power"]
    for name in ap["area_um2"]:
        lines.append(
            f"{name:<14} {ap['area_um2'][name]:>10} {ap['area_pct'][name]:>8.4f} "
            f"{ap['power_nw'][name]:>13.3f} {ap['power_pct'][name]:>8.4f}"
        )
    if "functional" in report:
        f = report["functional"]
        verdict = "PASS" if f["passed"] else f"FAIL: {f['mismatch']}"
        lines += ["", f"functional check: {verdict}"]
    return "\n".join(lines) + "\n"


def emit_report(report: dict, fmt: str, path: str | Path) -> Path:
    """Write the report as a table or JSON document; JSON re-parses losslessly."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "table":
        out.write_text(_format_table(report))
    elif fmt == "json":
        out.write_text(json.dumps(report, indent=2) + "\n")
    else:
        raise RunConfigError(f"unknown report format {fmt!r}")
    return out


# --------------------------------------------------------------------------
# Run driver
# --------------------------------------------------------------------------

def run(net: NetworkDescription, config: RunConfig,
        output_dir: str | Path | None = None) -> tuple[int, dict]:
    """Map, simulate and report. Returns (exit_status, report)."""
    column_size = config.column_size
    plan = map_network(net, column_size, config.subarrays_per_bank)
    violations = validate_plan(plan, net)
    if violations:
        raise MappingError("; ".join(violations))

    residual = []
    banks = config.banks
    if banks is None:
        banks = len(net.layers) + len(net.residual_edges)
    if banks < len(net.layers) + len(net.residual_edges):
        raise MappingError(
            f"{banks} banks cannot host {len(net.layers)} layers plus "
            f"{len(net.residual_edges)} reserved banks"
        )
    if net.residual_edges:
        residual = plan_residual(net, banks)
    plan.reserved_banks = residual

    tree_width = config.tree_width or 4096
    latencies = timing.network_latencies(net, plan, config.timing, tree_width)
    pipeline = timing.pipeline_schedule(latencies, config.images)
    residual_ns = timing.residual_overhead(
        residual, net.precision, config.timing, column_size
    )

    functional = None
    status = 0
    if config.mode in ("functional", "both"):
        functional = engine.run_functional(
            net, plan, config.rows, config.cols, config.seed,
            config.tree_width,
        )
        if not functional.passed:
            status = 1
        elif config.mode == "both":
            # Cross-check the executed traces against the analytic counts.
            # The timing model charges one broadcast command sequence per
            # pass; the traces log it once per subarray.
            expected_events = sum(
                place.subarrays_used * lat.aap_count
                for place, lat in zip(plan.layers, latencies)
            )
            if functional.total_aap() != expected_events:
                status = 1
                functional.mismatch = (
                    f"traces logged {functional.total_aap()} AAPs, "
                    f"timing model expected {expected_events}"
                )

    report = _build_report(
        net, config, plan, latencies, pipeline, residual_ns, functional
    )
    if output_dir is not None:
        out = Path(output_dir)
        emit_report(report, "json", out / "report.json")
        emit_report(report, "table", out / "report.txt")
        (out / "plan.txt").write_text(plan_to_text(plan))
    return status, report


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------

def _parse_parallelism(value: str) -> list[int] | str:
    if value.upper() in ("P1", "P2", "P3", "P4", "P5"):
        return value.upper()
    try:
        return [int(v) for v in value.split(",")]
    except ValueError:
        raise RunConfigError(
            f"parallelism must be P1..P5 or a comma list, got {value!r}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pimsim",
        description="Functional and timing simulator for bit-serial in-DRAM "
                    "DNN inference.",
    )
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="network description JSON file")
    src.add_argument("--preset", choices=PRESET_NAMES, help="built-in workload")
    parser.add_argument("--precision", type=int, default=4,
                        help="operand bit width n (default 4)")
    parser.add_argument("--parallelism", default="P1",
                        help="parallelism preset (P1..P5) or comma list")
    parser.add_argument("--timing-config", help="key = value timing file")
    parser.add_argument("--rows", type=int, default=None,
                        help="subarray rows (default 256, timing mode 4096)")
    parser.add_argument("--cols", type=int, default=None,
                        help="subarray columns (default 256, timing mode 4096)")
    parser.add_argument("--column-size", type=int, default=None,
                        help="mappable columns per subarray (default: cols)")
    parser.add_argument("--subarrays-per-bank", type=int, default=None)
    parser.add_argument("--banks", type=int, default=None)
    parser.add_argument("--mode", choices=("functional", "timing", "both"),
                        default="both")
    parser.add_argument("--images", type=int, default=4,
                        help="batch size for the pipeline schedule")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", default="out",
                        help="directory for report files")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.model:
            net = load_network(args.model)
            if args.parallelism != "P1" or not net.parallelism:
                par = _parse_parallelism(args.parallelism)
                if isinstance(par, str):
                    raise RunConfigError(
                        "P-vectors only apply to presets; give a comma list"
                    )
                net = NetworkDescription(
                    net.name, net.precision, net.layers, par,
                    net.residual_edges,
                )
        else:
            par = _parse_parallelism(args.parallelism)
            if isinstance(par, str):
                net = preset(args.preset, par, precision=args.precision)
            else:
                net = preset(args.preset, "P1", precision=args.precision)
                net = NetworkDescription(
                    net.name, net.precision, net.layers, par,
                    net.residual_edges,
                )

        params = TimingParams()
        if args.timing_config:
            params = TimingParams.from_text(Path(args.timing_config).read_text())

        # Timing-only runs default to the full-size array; functional runs
        # default to a desk-scale subarray that finishes in seconds.
        default_dim = 4096 if args.mode == "timing" else 256
        config = RunConfig(
            rows=args.rows or default_dim,
            cols=args.cols or default_dim,
            column_size=args.column_size,
            subarrays_per_bank=args.subarrays_per_bank,
            banks=args.banks,
            mode=args.mode,
            seed=args.seed,
            images=args.images,
            timing=params,
        )
        status, report = run(net, config, args.output)
    except (MappingError, RunConfigError, ConfigurationError,
            timing.TimingConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    pipe = report["pipeline"]
    print(
        f"{report['network']}: mode {report['mode']}, "
        f"{len(report['per_layer'])} layers, "
        f"pipeline total {pipe['total_ns']:.2f} ns for {pipe['images']} images"
    )
    if "functional" in report:
        f = report["functional"]
        print("functional: PASS" if f["passed"]
              else f"functional: FAIL ({f['mismatch']})")
    print(f"reports written to {args.output}/")
    return status


if __name__ == "__main__":
    sys.exit(main())
