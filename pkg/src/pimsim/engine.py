"""End-to-end functional execution: place operands, run every bank, compare
against the reference oracle.

Synthetic workloads draw seeded uniform n-bit integers for the input image
and all weights. Each layer gets its own set of subarray states sized by the
mapping plan; activations are written once per column, weights once per
stacked pair, then bank_execute drives multiply, reduction, accumulation and
the SFU chain. Layer outputs feed the next layer in (channel, position)
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .datapath import BankAccounting, SfuParams, bank_execute
from .mapper import (
    LayerPlacement,
    LayerSpec,
    MappingPlan,
    NetworkDescription,
    num_macs,
)
from .subarray import (
    COMPUTE_ROW_COUNT,
    ConfigurationError,
    SubarrayState,
    new_subarray,
    write_operand_column,
)


@dataclass
class LayerRun:
    outputs: list[int]
    accounting: BankAccounting
    trace_summaries: list[dict] = field(default_factory=list)


@dataclass
class FunctionalResult:
    layer_runs: list[LayerRun]
    oracle_outputs: list[np.ndarray]
    mismatch: str | None = None

    @property
    def passed(self) -> bool:
        return self.mismatch is None

    def total_aap(self) -> int:
        return sum(run.accounting.aap_total for run in self.layer_runs)


def default_quant_shift(layer: LayerSpec, n: int) -> int:
    """Deterministic requantization shift: scale the worst-case MAC sum back
    into n bits."""
    from .mapper import mac_size

    worst = mac_size(layer) * ((1 << n) - 1) ** 2
    if worst <= 0:
        return 0
    return max(0, worst.bit_length() - n)


def synth_weights(rng: np.random.Generator, layer: LayerSpec, n: int) -> np.ndarray:
    hi = 1 << n
    if layer.kind == "conv":
        return rng.integers(0, hi, size=(layer.O, layer.I, layer.K, layer.L),
                            dtype=np.int64)
    return rng.integers(0, hi, size=(layer.w2, layer.w1), dtype=np.int64)


def synth_input(rng: np.random.Generator, layer: LayerSpec, n: int) -> np.ndarray:
    hi = 1 << n
    if layer.kind == "conv":
        return rng.integers(0, hi, size=(layer.I, layer.H, layer.W), dtype=np.int64)
    return rng.integers(0, hi, size=(layer.w1,), dtype=np.int64)


def mac_operands(
    layer: LayerSpec, x: np.ndarray, w: np.ndarray, mac_id: int
) -> list[tuple[int, int]]:
    """(activation, weight) pairs for one MAC, in column order."""
    if layer.kind == "linear":
        xf = np.asarray(x).reshape(-1)
        return [(int(xf[i]), int(w[mac_id, i])) for i in range(layer.w1)]
    positions = num_macs(layer)
    f, q = divmod(mac_id, positions)
    oh, ow = layer.output_hw()
    oy, ox = divmod(q, ow)
    pairs = []
    for ic in range(layer.I):
        for ky in range(layer.K):
            for kx in range(layer.L):
                iy = oy * layer.s + ky - layer.p
                ix = ox * layer.s + kx - layer.p
                act = 0
                if 0 <= iy < layer.H and 0 <= ix < layer.W:
                    act = int(x[ic, iy, ix])
                pairs.append((act, int(w[f, ic, ky, kx])))
    return pairs


def build_bank(place: LayerPlacement, rows: int, cols: int, n: int
               ) -> list[SubarrayState]:
    needed = COMPUTE_ROW_COUNT + (n - 1) + 2 * n + (place.passes + 1) * n
    if rows < needed:
        raise ConfigurationError(
            f"layer {place.layer_index}: {rows} rows cannot stack "
            f"{place.passes} pairs at n={n} (need {needed})"
        )
    if place.column_size > cols:
        raise ConfigurationError(
            f"column_size {place.column_size} exceeds subarray width {cols}"
        )
    return [new_subarray(rows, cols, n) for _ in range(place.subarrays_used)]


def place_operands(
    subarrays: list[SubarrayState],
    place: LayerPlacement,
    layer: LayerSpec,
    x: np.ndarray,
    w: np.ndarray,
) -> None:
    for p in range(place.passes):
        for sub_idx, macs in place.subarray_batches(p):
            state = subarrays[sub_idx]
            for mac_id, col0 in macs:
                for off, (act, wgt) in enumerate(
                    mac_operands(layer, x, w, mac_id)
                ):
                    write_operand_column(state, col0 + off, act, wgt, pair=p)


def run_layer(
    place: LayerPlacement,
    layer: LayerSpec,
    x: np.ndarray,
    w: np.ndarray,
    sfu: SfuParams,
    rows: int,
    cols: int,
    n: int,
    tree_width: int | None = None,
) -> LayerRun:
    subarrays = build_bank(place, rows, cols, n)
    place_operands(subarrays, place, layer, x, w)
    outputs, acct = bank_execute(subarrays, place, layer, sfu, tree_width)
    return LayerRun(
        outputs=outputs,
        accounting=acct,
        trace_summaries=[s.trace.summary() for s in subarrays],
    )


def _to_tensor(layer: LayerSpec, outputs: list[int]) -> np.ndarray:
    if layer.kind == "linear":
        return np.array(outputs, dtype=np.int64)
    oh, ow = layer.output_hw()
    if layer.pool and layer.pool > 1:
        oh, ow = oh // layer.pool, ow // layer.pool
    return np.array(outputs, dtype=np.int64).reshape(layer.O, oh, ow)


def run_functional(
    net: NetworkDescription,
    plan: MappingPlan,
    rows: int,
    cols: int,
    seed: int,
    tree_width: int | None = None,
) -> FunctionalResult:
    """Simulate the whole network and cross-check against the oracle.

    Returns per-layer runs plus the oracle tensors; mismatch carries the
    first divergent element if the datapath ever disagrees.
    """
    rng = np.random.default_rng(seed)
    n = net.precision
    if not net.layers:
        return FunctionalResult([], [])
    x0 = synth_input(rng, net.layers[0], n)
    weights = [synth_weights(rng, layer, n) for layer in net.layers]

    sfu_configs = []
    for layer in net.layers:
        shift = default_quant_shift(layer, n)
        sfu_configs.append((None, (n, shift)))
    ref_outputs = oracle.network_ref(net, x0, weights, sfu_configs)

    layer_runs: list[LayerRun] = []
    mismatch = None
    x = x0
    for idx, (layer, place) in enumerate(zip(net.layers, plan.layers)):
        _, quant = sfu_configs[idx]
        sfu = SfuParams(
            batchnorm=None,
            quantize_width=quant[0],
            quantize_shift=quant[1],
            pool_window=layer.pool if layer.kind == "conv" else None,
        )
        run = run_layer(place, layer, x, weights[idx], sfu, rows, cols, n,
                        tree_width)
        layer_runs.append(run)
        got = _to_tensor(layer, run.outputs)
        want = ref_outputs[idx]
        if got.shape != want.shape:
            mismatch = (
                f"layer {idx}: shape {got.shape} != oracle {want.shape}"
            )
            break
        if not np.array_equal(got, want):
            flat_got = got.reshape(-1)
            flat_want = want.reshape(-1)
            at = int(np.nonzero(flat_got != flat_want)[0][0])
            mismatch = (
                f"layer {idx}: element {at} is {int(flat_got[at])}, "
                f"oracle says {int(flat_want[at])}"
            )
            break
        x = got
    return FunctionalResult(layer_runs, ref_outputs, mismatch)
