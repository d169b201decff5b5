"""Layer-to-bank mapping: every multiplication of every MAC gets a
(bank, subarray, column, pair-depth) home.

One layer per bank. Within a bank, MACs are packed left to right, one
multiplication per column; a MAC never splits across subarrays, so a MAC that
would straddle restarts at column 1 of the next subarray and the leftover
columns stay empty (tracked as straddle padding). The parallelism divisor k
splits the output filters (or neurons) into k groups; each group is mapped
from subarray 1 column 1 again, stacking its operand pairs deeper in the same
columns, to be executed as sequential passes. Activations are shared by the
stacked pairs of a column; weights are per pass.

All placements of a layer share one geometry, so the plan stores arithmetic
descriptors rather than one record per multiplication (large conv layers
reach billions of multiplications). Per-MAC coordinates are derived on
demand.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict


class MappingError(ValueError):
    """The network cannot be placed under the given geometry."""


# --------------------------------------------------------------------------
# Network description
# --------------------------------------------------------------------------

@dataclass
class LayerSpec:
    """Geometry of one conv or linear layer.

    Conv fields: input H x W x I, O output filters, K x L kernel, padding p,
    stride s, optional pool window (max pool, stride = window). Linear fields:
    w1 input neurons, w2 output neurons. k is the per-layer parallelism
    divisor.
    """

    kind: str
    H: int = 0
    W: int = 0
    I: int = 0
    O: int = 0
    K: int = 0
    L: int = 0
    p: int = 0
    s: int = 1
    pool: int | None = None
    w1: int = 0
    w2: int = 0
    k: int = 1

    def output_hw(self) -> tuple[int, int]:
        if self.kind != "conv":
            raise MappingError("output_hw is defined for conv layers")
        oh = (self.H - self.K + 2 * self.p) // self.s + 1
        ow = (self.W - self.L + 2 * self.p) // self.s + 1
        return oh, ow

    def output_elements(self) -> int:
        """Elements leaving the layer, after any pooling."""
        if self.kind == "linear":
            return self.w2
        oh, ow = self.output_hw()
        if self.pool and self.pool > 1:
            oh, ow = oh // self.pool, ow // self.pool
        return self.O * oh * ow

    def stride_notes(self) -> list[str]:
        """Non-blocking alignment notes; output sizes floor when the stride
        does not divide evenly (standard framework behavior)."""
        notes = []
        if self.kind == "conv" and self.s > 1:
            if (self.H - self.K + 2 * self.p) % self.s:
                notes.append(
                    f"(H-K+2p)={self.H - self.K + 2 * self.p} not divisible "
                    f"by s={self.s}; output height floors"
                )
            if (self.W - self.L + 2 * self.p) % self.s:
                notes.append(
                    f"(W-L+2p)={self.W - self.L + 2 * self.p} not divisible "
                    f"by s={self.s}; output width floors"
                )
        return notes

    def validate(self) -> list[str]:
        issues = []
        if self.kind == "conv":
            if min(self.H, self.W, self.I, self.O, self.K, self.L) < 1:
                issues.append("conv dimensions must be positive")
            if self.s < 1:
                issues.append("stride must be positive")
            if self.O % self.k:
                issues.append(f"k={self.k} does not divide O={self.O}")
        elif self.kind == "linear":
            if min(self.w1, self.w2) < 1:
                issues.append("linear dimensions must be positive")
            if self.w2 % self.k:
                issues.append(f"k={self.k} does not divide w2={self.w2}")
        else:
            issues.append(f"unknown layer kind {self.kind!r}")
        return issues


def conv_layer(H, W, I, O, K, L=None, p=0, s=1, pool=None, k=1) -> LayerSpec:
    return LayerSpec(
        kind="conv", H=H, W=W, I=I, O=O, K=K, L=K if L is None else L,
        p=p, s=s, pool=pool, k=k,
    )


def linear_layer(w1, w2, k=1) -> LayerSpec:
    return LayerSpec(kind="linear", w1=w1, w2=w2, k=k)


@dataclass
class NetworkDescription:
    name: str
    precision: int
    layers: list[LayerSpec]
    parallelism: list[int] = field(default_factory=list)
    residual_edges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.parallelism:
            self.parallelism = [1] * len(self.layers)
        if len(self.parallelism) != len(self.layers):
            raise MappingError(
                f"parallelism vector of {len(self.parallelism)} entries "
                f"for {len(self.layers)} layers"
            )
        for layer, k in zip(self.layers, self.parallelism):
            layer.k = k

    def validate(self) -> list[str]:
        issues = []
        if self.precision < 1:
            issues.append("precision must be at least 1 bit")
        for idx, layer in enumerate(self.layers):
            issues.extend(f"layer {idx}: {msg}" for msg in layer.validate())
        for src, dst in self.residual_edges:
            if not (0 <= src < dst < len(self.layers)):
                issues.append(f"residual edge ({src}, {dst}) out of order or range")
        return issues


# --------------------------------------------------------------------------
# Counting
# --------------------------------------------------------------------------

def num_macs(layer: LayerSpec) -> int:
    """Dot products per output filter of a conv layer.

    ((H-K+2p)/s + 1) * ((W-L+2p)/s + 1), with floor division so legacy
    geometries that are not stride-aligned still evaluate.
    """
    if layer.kind != "conv":
        raise MappingError("num_macs is defined for conv layers")
    oh, ow = layer.output_hw()
    return oh * ow


def mac_size(layer: LayerSpec) -> int:
    """Multiplications in one dot product: K*L*I for conv, w1 for linear."""
    if layer.kind == "conv":
        return layer.K * layer.L * layer.I
    return layer.w1


def total_macs(layer: LayerSpec) -> int:
    if layer.kind == "conv":
        return num_macs(layer) * layer.O
    return layer.w2


def total_multiplications(layer: LayerSpec) -> int:
    return total_macs(layer) * mac_size(layer)


def footprint_bits(layer: LayerSpec, n: int) -> int:
    """Worst-case (k = 1) operand footprint in bits.

    Conv: O * ((H-K+2p)/s+1) * ((W-L+2p)/s+1) * (I*L*K) * 2n.
    Linear: w1 * w2 * 2n.
    """
    if n < 1:
        raise MappingError("precision must be at least 1 bit")
    return total_multiplications(layer) * 2 * n


# --------------------------------------------------------------------------
# Placement
# --------------------------------------------------------------------------

@dataclass
class LayerPlacement:
    """Closed-form placement of one layer inside its bank.

    MAC ids are global and consecutive: conv MAC f*num_macs+q is output
    position q of filter f; linear MAC j is neuron j. Pass p holds MACs
    [p*macs_per_pass, (p+1)*macs_per_pass), laid out identically, stacked at
    pair depth p.
    """

    layer_index: int
    bank: int
    kind: str
    mac_size: int
    macs_total: int
    passes: int
    macs_per_pass: int
    macs_per_subarray: int
    subarrays_used: int
    column_size: int
    precision: int
    channel_positions: int      # MACs per output channel (1 for linear)

    @property
    def padding_cols_per_full_subarray(self) -> int:
        return self.column_size - self.macs_per_subarray * self.mac_size

    def mac_location(self, mac_id: int) -> tuple[int, int, int, int]:
        """(pass, sub_no, col_no, pair_depth) for a MAC; 1-based sub/col."""
        if not 0 <= mac_id < self.macs_total:
            raise MappingError(f"mac {mac_id} outside 0..{self.macs_total - 1}")
        p, m = divmod(mac_id, self.macs_per_pass)
        sub, slot = divmod(m, self.macs_per_subarray)
        return p, sub + 1, slot * self.mac_size + 1, p

    def mac_channel(self, mac_id: int) -> int:
        return mac_id // self.channel_positions

    def subarray_batches(self, pass_idx: int):
        """Yield (subarray index, [(mac_id, col0), ...]) for one pass."""
        base = pass_idx * self.macs_per_pass
        for sub in range(self.subarrays_used):
            lo = sub * self.macs_per_subarray
            hi = min(lo + self.macs_per_subarray, self.macs_per_pass)
            if lo >= hi:
                return
            yield sub, [
                (base + m, (m - lo) * self.mac_size) for m in range(lo, hi)
            ]

    def placed_bits(self) -> int:
        """Operand bits actually stored: shared activations plus one weight
        set per stacked pair."""
        cols = self.macs_per_pass * self.mac_size
        return cols * self.precision * (self.passes + 1)

    def occupied_bits(self) -> int:
        """Bits of column capacity consumed, straddle padding included."""
        full, rem = divmod(self.macs_per_pass, self.macs_per_subarray)
        cols = full * self.column_size + rem * self.mac_size
        return cols * self.precision * (self.passes + 1)

    def padding_bits(self) -> int:
        return self.occupied_bits() - self.placed_bits()


@dataclass
class ResidualAssignment:
    edge: tuple[int, int]
    reserved_bank: int
    transfer_bits: int
    steps: tuple[str, ...] = (
        "rowclone_shortcut_in",
        "rowclone_branch_in",
        "majority_add",
        "rowclone_out",
    )


@dataclass
class MappingPlan:
    column_size: int
    subarrays_per_bank: int | None
    precision: int
    layers: list[LayerPlacement]
    reserved_banks: list[ResidualAssignment] = field(default_factory=list)


def _place_layer(
    idx: int, layer: LayerSpec, n: int, column_size: int,
    subarrays_per_bank: int | None,
) -> LayerPlacement:
    ms = mac_size(layer)
    if ms > column_size:
        raise MappingError(
            f"layer {idx}: MAC of {ms} multiplications exceeds "
            f"column_size {column_size}; a MAC cannot span subarrays"
        )
    total = total_macs(layer)
    k = layer.k
    outputs = layer.O if layer.kind == "conv" else layer.w2
    if outputs % k:
        raise MappingError(f"layer {idx}: k={k} does not divide {outputs}")
    macs_per_pass = total // k
    mps = column_size // ms
    subs = -(-macs_per_pass // mps)
    if subarrays_per_bank is not None and subs > subarrays_per_bank:
        raise MappingError(
            f"layer {idx}: needs {subs} subarrays at k={k}, bank has "
            f"{subarrays_per_bank} (short by {subs - subarrays_per_bank})"
        )
    return LayerPlacement(
        layer_index=idx,
        bank=idx,
        kind=layer.kind,
        mac_size=ms,
        macs_total=total,
        passes=k,
        macs_per_pass=macs_per_pass,
        macs_per_subarray=mps,
        subarrays_used=subs,
        column_size=column_size,
        precision=n,
        channel_positions=num_macs(layer) if layer.kind == "conv" else 1,
    )


def map_network(
    net: NetworkDescription,
    column_size: int,
    subarrays_per_bank: int | None = None,
) -> MappingPlan:
    """Assign every layer to a bank and every MAC to subarray columns."""
    issues = net.validate()
    if issues:
        raise MappingError("; ".join(issues))
    placements = [
        _place_layer(i, layer, net.precision, column_size, subarrays_per_bank)
        for i, layer in enumerate(net.layers)
    ]
    return MappingPlan(
        column_size=column_size,
        subarrays_per_bank=subarrays_per_bank,
        precision=net.precision,
        layers=placements,
    )


def plan_residual(
    net: NetworkDescription, total_banks: int
) -> list[ResidualAssignment]:
    """Reserve one bank per skip connection, from the top bank downward.

    Each assignment schedules both inbound copies, the in-DRAM addition and
    the outbound transfer to the destination bank.
    """
    used = len(net.layers)
    free = total_banks - used
    if len(net.residual_edges) > free:
        raise MappingError(
            f"{len(net.residual_edges)} skip connections need reserved banks "
            f"but only {max(free, 0)} banks are free "
            f"({total_banks} total, {used} layer banks)"
        )
    assignments = []
    for e_idx, (src, dst) in enumerate(net.residual_edges):
        bits = net.layers[src].output_elements() * net.precision
        assignments.append(
            ResidualAssignment(
                edge=(src, dst),
                reserved_bank=total_banks - 1 - e_idx,
                transfer_bits=bits,
            )
        )
    return assignments


# --------------------------------------------------------------------------
# Validation and serialization
# --------------------------------------------------------------------------

def validate_plan(plan: MappingPlan, net: NetworkDescription) -> list[str]:
    """Check the mapping rules; returns a list of violations (empty = clean).

    Checked per layer: MACs stay inside one subarray, columns stay in range,
    no (subarray, column, pair) is claimed twice, placement count matches the
    analytic multiplication count, capacity bounds, and the occupied-bits
    bound against the worst-case footprint.
    """
    issues: list[str] = []
    if len(plan.layers) != len(net.layers):
        return [f"plan has {len(plan.layers)} layers, network {len(net.layers)}"]
    for place, layer in zip(plan.layers, net.layers):
        tag = f"layer {place.layer_index}"
        ms = place.mac_size
        if ms != mac_size(layer):
            issues.append(f"{tag}: plan mac_size {ms} != {mac_size(layer)}")
        if place.macs_per_subarray < 1:
            issues.append(f"{tag}: MAC spans subarrays (size {ms} > "
                          f"column_size {place.column_size})")
            continue
        if place.macs_per_subarray * ms > place.column_size:
            issues.append(f"{tag}: MAC spans subarrays or overruns column_size")
        last_col = (place.macs_per_subarray - 1) * ms + ms
        if last_col > place.column_size:
            issues.append(f"{tag}: col_no exceeds column_size ({last_col})")
        if place.macs_total * ms != total_multiplications(layer):
            issues.append(
                f"{tag}: placed {place.macs_total * ms} multiplications, "
                f"expected {total_multiplications(layer)}"
            )
        if place.passes * place.macs_per_pass != place.macs_total:
            issues.append(f"{tag}: passes do not cover all MACs")
        if (
            plan.subarrays_per_bank is not None
            and place.subarrays_used > plan.subarrays_per_bank
        ):
            issues.append(
                f"{tag}: uses {place.subarrays_used} subarrays, bank has "
                f"{plan.subarrays_per_bank}"
            )
        if place.passes == 1 and place.occupied_bits() > footprint_bits(
            layer, plan.precision
        ) + place.padding_bits():
            issues.append(f"{tag}: occupied bits exceed footprint plus padding")
        # Spot-check slot uniqueness on a bounded prefix of each pass. MACs
        # start at multiples of mac_size and fit the subarray (checked above),
        # so distinct start slots imply disjoint column ranges.
        seen = set()
        for p in range(place.passes):
            for mac in range(
                p * place.macs_per_pass,
                p * place.macs_per_pass + min(place.macs_per_pass, 512),
            ):
                _, sub, col, depth = place.mac_location(mac)
                key = (sub, col, depth)
                if key in seen:
                    issues.append(f"{tag}: slot {key} assigned twice")
                    break
                seen.add(key)
    return issues


def plan_to_text(plan: MappingPlan, expand_limit: int = 10000) -> str:
    """Serialize a plan; layers small enough also list per-MAC entries."""
    lines = [
        f"plan column_size={plan.column_size} "
        f"subarrays_per_bank={plan.subarrays_per_bank or 0} "
        f"precision={plan.precision}"
    ]
    for pl in plan.layers:
        lines.append(
            f"layer index={pl.layer_index} bank={pl.bank} kind={pl.kind} "
            f"mac_size={pl.mac_size} macs_total={pl.macs_total} "
            f"passes={pl.passes} macs_per_pass={pl.macs_per_pass} "
            f"macs_per_subarray={pl.macs_per_subarray} "
            f"subarrays_used={pl.subarrays_used} "
            f"channel_positions={pl.channel_positions}"
        )
        if pl.macs_total <= expand_limit:
            for mac in range(pl.macs_total):
                _, sub, col, depth = pl.mac_location(mac)
                lines.append(
                    f"  mac_id={mac} sub_no={sub} col_no={col} pair_depth={depth}"
                )
    for res in plan.reserved_banks:
        lines.append(
            f"reserved bank={res.reserved_bank} src={res.edge[0]} "
            f"dst={res.edge[1]} bits={res.transfer_bits}"
        )
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> MappingPlan:
    header = None
    layers = []
    reserved = []
    for line in text.strip().splitlines():
        line = line.strip()
        if not line or line.startswith("mac_id="):
            continue
        kind, _, rest = line.partition(" ")
        fields = dict(kv.split("=") for kv in rest.split())
        if kind == "plan":
            header = fields
        elif kind == "layer":
            layers.append(
                LayerPlacement(
                    layer_index=int(fields["index"]),
                    bank=int(fields["bank"]),
                    kind=fields["kind"],
                    mac_size=int(fields["mac_size"]),
                    macs_total=int(fields["macs_total"]),
                    passes=int(fields["passes"]),
                    macs_per_pass=int(fields["macs_per_pass"]),
                    macs_per_subarray=int(fields["macs_per_subarray"]),
                    subarrays_used=int(fields["subarrays_used"]),
                    column_size=int(header["column_size"]),
                    precision=int(header["precision"]),
                    channel_positions=int(fields["channel_positions"]),
                )
            )
        elif kind == "reserved":
            reserved.append(
                ResidualAssignment(
                    edge=(int(fields["src"]), int(fields["dst"])),
                    reserved_bank=int(fields["bank"]),
                    transfer_bits=int(fields["bits"]),
                )
            )
    if header is None:
        raise MappingError("missing plan header")
    return MappingPlan(
        column_size=int(header["column_size"]),
        subarrays_per_bank=int(header["subarrays_per_bank"]) or None,
        precision=int(header["precision"]),
        layers=layers,
        reserved_banks=reserved,
    )


# --------------------------------------------------------------------------
# Network file I/O
# --------------------------------------------------------------------------

def network_to_json(net: NetworkDescription) -> str:
    doc = {
        "name": net.name,
        "precision": net.precision,
        "parallelism": list(net.parallelism),
        "layers": [
            {k: v for k, v in asdict(layer).items() if k != "k"}
            for layer in net.layers
        ],
        "residual_edges": [list(e) for e in net.residual_edges],
    }
    return json.dumps(doc, indent=2) + "\n"


def network_from_json(text: str) -> NetworkDescription:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MappingError(f"network file is not valid JSON: {exc}") from exc
    for key in ("name", "precision", "layers"):
        if key not in doc:
            raise MappingError(f"network file is missing the {key!r} field")
    layers = []
    for idx, entry in enumerate(doc["layers"]):
        if "kind" not in entry:
            raise MappingError(f"layer {idx}: missing 'kind'")
        known = {f for f in LayerSpec.__dataclass_fields__}
        bad = set(entry) - known
        if bad:
            raise MappingError(f"layer {idx}: unknown fields {sorted(bad)}")
        layers.append(LayerSpec(**entry))
    net = NetworkDescription(
        name=doc["name"],
        precision=int(doc["precision"]),
        layers=layers,
        parallelism=[int(k) for k in doc.get("parallelism", [])],
        residual_edges=[tuple(e) for e in doc.get("residual_edges", [])],
    )
    issues = net.validate()
    if issues:
        raise MappingError("; ".join(issues))
    return net
