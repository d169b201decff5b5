"""Latency, area and power model.

Every in-subarray command costs one AAP window (t_aap). Within a bank the
phases of a layer run in fixed order: multiply across all subarrays in
parallel (stacked operand pairs serialize), bit-plane reduction through the
shared adder tree (one subarray batch at a time), the SFU chain, the
transpose unit, then the inter-bank RowClone transfer. Banks pipeline across
images: all banks compute in parallel, then transfers run sequentially in
reverse layer order, so the steady-state window is the slowest bank plus the
whole transfer window.

Synthesized-logic delays carry a 1.215x penalty for implementation in a DRAM
process; it applies exactly once, to logic cycles only, never to DRAM row
timing. Defaults follow DDR3-1600 (t_aap = tRAS 35 ns + tRP 13.75 ns); all
values are overridable configuration, not measured ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .mapper import LayerPlacement, LayerSpec, MappingPlan, NetworkDescription
from .mapper import ResidualAssignment, map_network
from .subarray import mul_aap_count

SFU_UNITS = ("relu", "batchnorm", "quantize", "pool", "transpose")


class TimingConfigError(ValueError):
    """Non-positive or malformed timing parameter."""


@dataclass
class TimingParams:
    t_aap: float = 48.75                  # ns per ACTIVATE-ACTIVATE-PRECHARGE
    t_row_read: float = 35.0              # ns per bit-plane row read
    logic_clock: float = 1.0              # ns per datapath cycle, pre-penalty
    tree_levels: int = 12                 # pipeline depth of the 4096 tree
    sfu_cycles: dict = field(
        default_factory=lambda: {u: 1 for u in SFU_UNITS}
    )
    t_rowclone_interbank: float = 97.5    # ns per row moved between banks
    dram_logic_penalty: float = 1.215     # DRAM-process delay on logic blocks

    def __post_init__(self):
        for name in ("t_aap", "t_row_read", "logic_clock",
                     "t_rowclone_interbank", "dram_logic_penalty"):
            if getattr(self, name) <= 0:
                raise TimingConfigError(f"{name} must be positive")
        if self.tree_levels < 1:
            raise TimingConfigError("tree_levels must be positive")
        for unit in SFU_UNITS:
            if self.sfu_cycles.get(unit, 0) < 0:
                raise TimingConfigError(f"sfu_cycles.{unit} must be >= 0")

    @property
    def logic_ns(self) -> float:
        return self.logic_clock * self.dram_logic_penalty

    def to_text(self) -> str:
        lines = [
            f"t_aap = {self.t_aap}",
            f"t_row_read = {self.t_row_read}",
            f"logic_clock = {self.logic_clock}",
            f"tree_levels = {self.tree_levels}",
            f"t_rowclone_interbank = {self.t_rowclone_interbank}",
            f"dram_logic_penalty = {self.dram_logic_penalty}",
        ]
        lines += [f"sfu_cycles.{u} = {self.sfu_cycles[u]}" for u in SFU_UNITS]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TimingParams":
        params = cls()
        cycles = dict(params.sfu_cycles)
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TimingConfigError(f"expected 'name = value': {raw!r}")
            name, value = (part.strip() for part in line.split("=", 1))
            if name.startswith("sfu_cycles."):
                unit = name.split(".", 1)[1]
                if unit not in SFU_UNITS:
                    raise TimingConfigError(f"unknown SFU unit {unit!r}")
                cycles[unit] = int(value)
            elif name == "tree_levels":
                params = replace(params, tree_levels=int(value))
            elif name in ("t_aap", "t_row_read", "logic_clock",
                          "t_rowclone_interbank", "dram_logic_penalty"):
                params = replace(params, **{name: float(value)})
            else:
                raise TimingConfigError(f"unknown timing field {name!r}")
        return replace(params, sfu_cycles=cycles)


@dataclass
class LayerLatency:
    layer_index: int
    multiply_ns: float
    reduce_ns: float
    sfu_ns: float
    transpose_ns: float
    transfer_ns: float
    aap_count: int

    @property
    def total_ns(self) -> float:
        return (self.multiply_ns + self.reduce_ns + self.sfu_ns
                + self.transpose_ns + self.transfer_ns)

    @property
    def busy_ns(self) -> float:
        """In-bank time, the pipeline stage cost without the transfer."""
        return self.total_ns - self.transfer_ns


def _pow2ceil(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


def _tree_loads_per_pass(place: LayerPlacement, tree_width: int) -> int:
    """Row-buffer loads needed to reduce one pass through the shared tree."""
    if place.macs_per_pass == 0:
        return 0
    ms = place.mac_size
    if ms > tree_width:
        return place.macs_per_pass * -(-ms // tree_width)
    per_load = tree_width // _pow2ceil(ms)
    full, rem = divmod(place.macs_per_pass, place.macs_per_subarray)
    loads = full * -(-place.macs_per_subarray // per_load)
    if rem:
        loads += -(-rem // per_load)
    return loads


def layer_latency(
    place: LayerPlacement,
    layer: LayerSpec,
    n: int,
    params: TimingParams,
    tree_width: int = 4096,
) -> LayerLatency:
    """Phase breakdown for one layer on its bank.

    multiply: mul_aap_count(n) * t_aap per stacked pair (passes serialize).
    reduce: per tree load, a levels-deep pipeline fill at logic rate plus 2n
    bit-plane row reads at DRAM row rate. sfu/transpose: one element per unit
    cycle at the penalized logic rate. transfer: RowClone rows to move the
    layer output, at row granularity of the column width.
    """
    if place.macs_total == 0:
        return LayerLatency(place.layer_index, 0.0, 0.0, 0.0, 0.0, 0.0, 0)
    passes = place.passes
    mul_aaps = mul_aap_count(n) * passes
    multiply_ns = mul_aaps * params.t_aap

    loads = _tree_loads_per_pass(place, tree_width) * passes
    reduce_ns = loads * (
        params.tree_levels * params.logic_ns + 2 * n * params.t_row_read
    )

    chain_cycles = sum(
        params.sfu_cycles[u] for u in ("relu", "batchnorm", "quantize", "pool")
    )
    sfu_ns = place.macs_total * chain_cycles * params.logic_ns

    outputs = layer.output_elements()
    transpose_ns = outputs * params.sfu_cycles["transpose"] * params.logic_ns

    rows = -(-outputs * n // place.column_size)
    transfer_ns = rows * params.t_rowclone_interbank
    return LayerLatency(
        layer_index=place.layer_index,
        multiply_ns=multiply_ns,
        reduce_ns=reduce_ns,
        sfu_ns=sfu_ns,
        transpose_ns=transpose_ns,
        transfer_ns=transfer_ns,
        aap_count=mul_aaps,
    )


@dataclass
class Occupancy:
    image: int
    bank: int
    start_ns: float
    end_ns: float


@dataclass
class PipelineReport:
    images: int
    fill_ns: float
    steady_state_ns: float
    total_ns: float
    occupancy: list[Occupancy]


def pipeline_schedule(
    latencies: list[LayerLatency], num_images: int
) -> PipelineReport:
    """Multi-bank pipeline over a batch of images.

    Banks compute in parallel; the inter-bank transfers (all banks except the
    last) serialize into one window per image slot. An image therefore flows
    with per-bank start offsets of the upstream busy plus transfer times, and
    consecutive images are spaced by the steady-state window:

        steady = max(bank busy) + sum(inter-bank transfers)
        fill   = sum(bank busy) + sum(inter-bank transfers)
        total(B) = fill + (B - 1) * steady
    """
    if num_images < 1:
        raise TimingConfigError("need at least one image")
    if not latencies:
        return PipelineReport(num_images, 0.0, 0.0, 0.0, [])
    busy = [lat.busy_ns for lat in latencies]
    transfers = [lat.transfer_ns for lat in latencies[:-1]]
    window = sum(transfers)
    steady = max(busy) + window
    fill = sum(busy) + window
    total = fill + (num_images - 1) * steady

    occupancy = []
    prefix = 0.0
    prefixes = []
    for b in range(len(latencies)):
        prefixes.append(prefix)
        prefix += busy[b] + (transfers[b] if b < len(transfers) else 0.0)
    for image in range(num_images):
        t0 = image * steady
        for b, p in enumerate(prefixes):
            occupancy.append(Occupancy(image, b, t0 + p, t0 + p + busy[b]))
    return PipelineReport(num_images, fill, steady, total, occupancy)


def residual_overhead(
    assignments: list[ResidualAssignment],
    n: int,
    params: TimingParams,
    row_width: int,
) -> float:
    """Extra nanoseconds for skip connections through reserved banks.

    Per skip: two inbound RowClone windows (shortcut and branch output), one
    in-DRAM addition of 4n+1 AAPs, and one outbound transfer window.
    """
    total = 0.0
    for res in assignments:
        rows = -(-res.transfer_bits // row_width)
        window = rows * params.t_rowclone_interbank
        total += 3 * window + (4 * n + 1) * params.t_aap
    return total


# --------------------------------------------------------------------------
# Area and power reference tables
# --------------------------------------------------------------------------

AREA_UM2 = {
    "4096 Adder": 514877,
    "Accumulator": 804,
    "Relu": 431,
    "Maxpool": 983,
    "Batchnorm": 506,
    "Quantize": 91,
}

AREA_PCT = {
    "4096 Adder": 99.47373,
    "Accumulator": 0.15532,
    "Relu": 0.083269,
    "Maxpool": 0.189915,
    "Batchnorm": 0.097759,
    "Quantize": 0.017581,
}

POWER_NW = {
    "4096 Adder": 13200190.9,
    "Accumulator": 177765.864,
    "Relu": 109913.671,
    "Maxpool": 127562.373,
    "Batchnorm": 120541.29,
    "Quantize": 28366.738,
}

POWER_PCT = {
    "4096 Adder": 95.9014,
    "Accumulator": 1.2915,
    "Relu": 0.7985,
    "Maxpool": 0.9268,
    "Batchnorm": 0.8758,
    "Quantize": 0.2061,
}

# 256x8 dual-port SRAM used by the transpose unit, reported separately from
# the component table above.
TRANSPOSE_SRAM_AREA_UM2 = 30534.894


def area_power_report() -> dict:
    return {
        "area_um2": dict(AREA_UM2),
        "area_pct": dict(AREA_PCT),
        "power_nw": dict(POWER_NW),
        "power_pct": dict(POWER_PCT),
        "area_total_um2": sum(AREA_UM2.values()),
        "power_total_nw": round(sum(POWER_NW.values()), 6),
        "transpose_sram_area_um2": TRANSPOSE_SRAM_AREA_UM2,
    }


def energy_estimate_nj(active_ns: float) -> dict:
    """Coarse energy: table power times active time. Derived from the
    component table, not a measured result."""
    return {name: p * active_ns * 1e-9 for name, p in POWER_NW.items()}


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

def network_latencies(
    net: NetworkDescription,
    plan: MappingPlan,
    params: TimingParams,
    tree_width: int = 4096,
) -> list[LayerLatency]:
    return [
        layer_latency(place, layer, net.precision, params, tree_width)
        for place, layer in zip(plan.layers, net.layers)
    ]


def precision_sweep(
    net: NetworkDescription,
    n_values: list[int],
    column_size: int,
    params: TimingParams,
    tree_width: int = 4096,
) -> list[dict]:
    """Full-pipeline latency at each precision; asserts strict growth in n."""
    series = []
    for n in sorted(n_values):
        if n < 1:
            raise TimingConfigError(f"precision {n} is invalid")
        swept = NetworkDescription(
            name=net.name,
            precision=n,
            layers=[replace(layer) for layer in net.layers],
            parallelism=list(net.parallelism),
            residual_edges=list(net.residual_edges),
        )
        plan = map_network(swept, column_size)
        lats = network_latencies(swept, plan, params, tree_width)
        report = pipeline_schedule(lats, 1)
        series.append(
            {
                "n": n,
                "total_ns": report.total_ns,
                "multiply_ns": math.fsum(l.multiply_ns for l in lats),
            }
        )
    for prev, cur in zip(series, series[1:]):
        if not cur["total_ns"] > prev["total_ns"]:
            raise TimingConfigError(
                f"latency not strictly increasing from n={prev['n']} "
                f"to n={cur['n']}"
            )
    return series
