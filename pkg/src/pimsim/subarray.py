"""Bit-exact model of a compute-capable DRAM subarray.

A subarray is a rows x cols grid of single-bit cells. Nine reserved compute
rows (row0, A, A-1, B, B-1, Cin, Cin-1, Cout, Cout-1) plus, for precisions
above 2 bits, a block of intermediate rows implement row copy, bitwise AND,
bit-serial ADD and full n x n multiplication using nothing but row copies and
simultaneous multi-row activations. Every primitive appends to an AapTrace,
one entry per AAP (ACTIVATE-ACTIVATE-PRECHARGE), so command counts can be
audited exactly:

    and_count(n)     = n*n                AND operations per multiply
    add_count(n)     = (n-2)(n-1)+n       intermediate ADDs (0 when n == 1)
    mul_aap_count(n) = 3n^2 + 3(n-1)^2 + 4            for n <= 2
                       3n^2 + 4(n-1)^3 + 4(n-1)       for n  > 2

Operands live in transposed layout: one multiplication per column, LSB in the
lowest-indexed data row. The multiply command sequence depends only on n,
never on operand values, so a single trace describes every column at once
(SIMD across bitlines).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

COPY = "copy"
AND_STAGE = "and_stage"
TRIPLE = "triple_activate"
QUINTUPLE = "quintuple_activate"
WRITE_ROW0 = "write_row0"

EVENT_KINDS = (COPY, AND_STAGE, TRIPLE, QUINTUPLE, WRITE_ROW0)


class ConfigurationError(ValueError):
    """Subarray geometry cannot support the requested precision."""


class RowBoundsError(IndexError):
    """Row index outside the subarray."""


class AliasingError(ValueError):
    """Source and destination row groups overlap or touch reserved rows."""


class ActivationPatternError(ValueError):
    """Multi-row activation with an unsupported row set."""


class OperandRangeError(ValueError):
    """Operand value does not fit the configured bit width."""


@dataclass(frozen=True)
class AapEvent:
    kind: str
    rows: tuple[int, ...]


@dataclass
class AapTrace:
    """Ordered log of DRAM commands, one entry per AAP.

    and_ops / add_ops count logical operations; the spans record which event
    slice each operation occupies so per-operation AAP costs can be audited.
    """

    events: list[AapEvent] = field(default_factory=list)
    and_ops: int = 0
    add_ops: int = 0
    and_spans: list[tuple[int, int]] = field(default_factory=list)
    add_spans: list[tuple[int, int]] = field(default_factory=list)

    @property
    def total_aap(self) -> int:
        return len(self.events)

    def log(self, kind: str, rows: Iterable[int]) -> AapEvent:
        event = AapEvent(kind, tuple(int(r) for r in rows))
        self.events.append(event)
        return event

    def summary(self) -> dict:
        return {
            "total_aap": self.total_aap,
            "and_ops": self.and_ops,
            "add_ops": self.add_ops,
        }

    def to_text(self) -> str:
        """Line-oriented dump: one event per line, then a summary record."""
        lines = [f"{e.kind} {','.join(map(str, e.rows))}" for e in self.events]
        s = self.summary()
        lines.append(
            f"summary total_aap={s['total_aap']} and_ops={s['and_ops']} "
            f"add_ops={s['add_ops']}"
        )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AapTrace":
        trace = cls()
        for line in text.strip().splitlines():
            head, _, rest = line.partition(" ")
            if head == "summary":
                fields = dict(kv.split("=") for kv in rest.split())
                if int(fields["total_aap"]) != trace.total_aap:
                    raise ValueError("summary does not match event count")
                trace.and_ops = int(fields["and_ops"])
                trace.add_ops = int(fields["add_ops"])
            else:
                rows = tuple(int(r) for r in rest.split(",")) if rest else ()
                trace.log(head, rows)
        return trace


COMPUTE_ROW_COUNT = 9


@dataclass
class SubarrayState:
    """One subarray: cell grid, reserved row map and its command trace.

    Row layout (fixed): row0 at index 0, the eight scratch compute rows next,
    then n-1 intermediate rows, then 2n product rows, then operand data rows.
    A data column holds one n-bit activation followed by one n-bit weight per
    stacked pair, all LSB first.
    """

    rows: int
    cols: int
    n: int
    cells: np.ndarray
    compute_rows: dict[str, int]
    intermediate_rows: tuple[int, ...]
    product_rows: tuple[int, ...]
    data_base: int
    and_wordline: tuple[tuple[int, int], tuple[int, int]]
    dcc_rows: tuple[int, ...]
    trace: AapTrace = field(default_factory=AapTrace)

    def activation_rows(self) -> tuple[int, ...]:
        return tuple(range(self.data_base, self.data_base + self.n))

    def weight_rows(self, pair: int = 0) -> tuple[int, ...]:
        base = self.data_base + self.n * (pair + 1)
        if base + self.n > self.rows:
            raise ConfigurationError(
                f"pair {pair} needs rows up to {base + self.n}, have {self.rows}"
            )
        return tuple(range(base, base + self.n))

    @property
    def pair_capacity(self) -> int:
        return (self.rows - self.data_base) // self.n - 1


def new_subarray(rows: int, cols: int, n: int) -> SubarrayState:
    """Allocate an all-zero subarray with reserved rows for precision n."""
    if n < 1:
        raise ConfigurationError("precision must be at least 1 bit")
    if cols < 1:
        raise ConfigurationError("need at least one column")
    needed = COMPUTE_ROW_COUNT + (n - 1) + 2 * n + 2 * n
    if rows < needed:
        raise ConfigurationError(
            f"{rows} rows cannot hold precision {n}: need {needed} "
            f"(9 compute + {n - 1} intermediate + {2 * n} product + {2 * n} operand)"
        )
    names = ("row0", "A", "A1", "B", "B1", "Cin", "Cin1", "Cout", "Cout1")
    compute = {name: idx for idx, name in enumerate(names)}
    inter = tuple(range(9, 9 + n - 1))
    prod_base = 9 + (n - 1)
    prod = tuple(range(prod_base, prod_base + 2 * n))
    data_base = prod_base + 2 * n
    return SubarrayState(
        rows=rows,
        cols=cols,
        n=n,
        cells=np.zeros((rows, cols), dtype=np.uint8),
        compute_rows=compute,
        intermediate_rows=inter,
        product_rows=prod,
        data_base=data_base,
        and_wordline=((compute["A"], compute["A1"]), (compute["B"], compute["B1"])),
        dcc_rows=(compute["Cout"], compute["Cout1"]),
    )


def _check_rows(state: SubarrayState, rows: Iterable[int]) -> None:
    for r in rows:
        if not 0 <= r < state.rows:
            raise RowBoundsError(f"row {r} outside 0..{state.rows - 1}")


def _copy(state: SubarrayState, src: int, dsts: Sequence[int]) -> None:
    # Single AAP: activate source, sense, activate all destination wordlines.
    state.cells[list(dsts)] = state.cells[src]
    state.trace.log(COPY, (src, *dsts))


def _write_row0(state: SubarrayState) -> None:
    # The per-multiply zero write: drives zeros into row0 and the carry pair.
    C = state.compute_rows
    rows = (C["row0"], C["Cin"], C["Cin1"])
    state.cells[list(rows)] = 0
    state.trace.log(WRITE_ROW0, rows)


def _and_stage(state: SubarrayState, pair: str, dsts: Sequence[int]) -> np.ndarray:
    """AND-wordline activation, sensing, then destination activation.

    The sense amplifiers settle to pair[0] AND pair[1]; both pair cells and
    every destination cell restore to that value.
    """
    p0, p1 = state.and_wordline[0] if pair == "a" else state.and_wordline[1]
    result = state.cells[p0] & state.cells[p1]
    state.cells[p0] = result
    state.cells[p1] = result
    for d in dsts:
        state.cells[d] = result
    state.trace.log(AND_STAGE, (p0, p1, *dsts))
    return result


def _tra(
    state: SubarrayState, r1: int, r2: int, r3: int, dsts: Sequence[int] = ()
) -> np.ndarray:
    """Triple-row activation: three-input majority with destructive restore."""
    s = (
        state.cells[r1].astype(np.int8)
        + state.cells[r2]
        + state.cells[r3]
    )
    maj = (s >= 2).astype(np.uint8)
    state.cells[[r1, r2, r3]] = maj
    for d in dsts:
        state.cells[d] = maj
    state.trace.log(TRIPLE, (r1, r2, r3, *dsts))
    return maj


def _qra(
    state: SubarrayState,
    r1: int,
    r2: int,
    r3: int,
    neg_row: int,
    dsts: Sequence[int] = (),
) -> np.ndarray:
    """Quintuple activation: maj(r1, r2, r3, ~neg, ~neg).

    neg_row is a dual-contact cell read through its negated port, contributing
    its complement twice. Restore through that port leaves the complement of
    the sensed value in the cell; the plain participants get the value itself.
    """
    neg = 1 - state.cells[neg_row]
    s = (
        state.cells[r1].astype(np.int8)
        + state.cells[r2]
        + state.cells[r3]
        + 2 * neg
    )
    maj = (s >= 3).astype(np.uint8)
    state.cells[[r1, r2, r3]] = maj
    state.cells[neg_row] = 1 - maj
    for d in dsts:
        state.cells[d] = maj
    state.trace.log(QUINTUPLE, (r1, r2, r3, neg_row, *dsts))
    return maj


# --------------------------------------------------------------------------
# Public primitives
# --------------------------------------------------------------------------

def row_clone(state: SubarrayState, src_row: int, dst_row: int) -> list[AapEvent]:
    """Copy one row onto another. Costs exactly 1 AAP."""
    _check_rows(state, (src_row, dst_row))
    if src_row == dst_row:
        raise AliasingError("cannot clone a row onto itself")
    start = len(state.trace.events)
    _copy(state, src_row, (dst_row,))
    return state.trace.events[start:]


def multi_row_activate(
    state: SubarrayState, row_set: Sequence[int], use_negated_cout: bool = False
) -> np.ndarray:
    """Simultaneously activate 3 or 5 compute rows and return the majority.

    The quintuple form lists the Cout row twice; with use_negated_cout it
    contributes its complement through the dual-contact cell. All activated
    cells are overwritten by the sensed result (full restore), the negated
    participant with the complement.
    """
    rows = [int(r) for r in row_set]
    _check_rows(state, rows)
    compute = set(state.compute_rows.values())
    if any(r not in compute for r in rows):
        raise ActivationPatternError("multi-row activation is limited to compute rows")
    if len(rows) == 3 and not use_negated_cout:
        return _tra(state, *rows).copy()
    if len(rows) == 5 and use_negated_cout:
        cout = state.compute_rows["Cout"]
        if rows.count(cout) != 2:
            raise ActivationPatternError(
                "quintuple activation needs the negated Cout row listed twice"
            )
        plain = [r for r in rows if r != cout]
        if len(plain) != 3:
            raise ActivationPatternError("quintuple activation needs 3 plain rows")
        return _qra(state, plain[0], plain[1], plain[2], cout).copy()
    raise ActivationPatternError(
        f"unsupported activation pattern of {len(rows)} rows"
    )


def and_op(
    state: SubarrayState,
    src_a_row: int,
    src_b_row: int,
    dst_rows: Sequence[int],
    pair: str = "a",
) -> list[AapEvent]:
    """dst = src_a AND src_b per column. Exactly 3 AAPs.

    Stage 1 copies the first operand onto the selector cell of the AND pair,
    stage 2 copies the second onto its partner, stage 3 activates the AND
    wordline and stores the sensed result in the destination rows (one or
    two). The pair cells also end up holding the result.
    """
    dsts = tuple(int(d) for d in dst_rows)
    if not 1 <= len(dsts) <= 2:
        raise AliasingError("AND takes one or two destination rows")
    _check_rows(state, (src_a_row, src_b_row, *dsts))
    if src_a_row in dsts or src_b_row in dsts:
        raise AliasingError("AND destination overlaps a source row")
    p = state.and_wordline[0] if pair == "a" else state.and_wordline[1]
    trace = state.trace
    start = len(trace.events)
    _copy(state, src_a_row, (p[0],))
    _copy(state, src_b_row, (p[1],))
    _and_stage(state, pair, dsts)
    trace.and_ops += 1
    trace.and_spans.append((start, len(trace.events)))
    return trace.events[start:]


def add_bitserial(
    state: SubarrayState,
    a_rows: Sequence[int],
    b_rows: Sequence[int],
    out_rows: Sequence[int],
) -> list[AapEvent]:
    """out = a + b per column, LSB first. Exactly 4n+1 AAPs for n-bit operands.

    One AAP seeds the carry pair with zeros from row0, then each bit takes
    four: copy a_k, copy b_k, triple activation for the carry (written to the
    Cout cell and to the row that will serve as next bit's carry copy), and
    the quintuple activation for the sum bit. The final carry rides out on the
    last triple activation's destination list, so out needs n+1 rows.
    """
    n = len(a_rows)
    if n < 1 or len(b_rows) != n or len(out_rows) != n + 1:
        raise AliasingError("need n a-rows, n b-rows and n+1 out-rows")
    groups = (*a_rows, *b_rows, *out_rows)
    _check_rows(state, groups)
    if len(set(groups)) != len(groups):
        raise AliasingError("a, b and out row groups must be disjoint")
    reserved = set(state.compute_rows.values())
    if reserved & set(groups):
        raise AliasingError("operand rows may not alias the compute rows")

    C = state.compute_rows
    A, A1, B, B1 = C["A"], C["A1"], C["B"], C["B1"]
    Cin, Cin1, Cout, Cout1 = C["Cin"], C["Cin1"], C["Cout"], C["Cout1"]
    trace = state.trace
    start = len(trace.events)

    _copy(state, C["row0"], (Cin, Cin1))
    for k in range(n):
        _copy(state, a_rows[k], (A, A1))
        _copy(state, b_rows[k], (B, B1))
        free = Cout1 if k % 2 == 0 else Cin1
        cold = Cin1 if k % 2 == 0 else Cout1
        tra_dsts = [Cout, free]
        if k == n - 1:
            tra_dsts.append(out_rows[n])
        _tra(state, A, B, Cin, tra_dsts)
        _qra(state, A1, B1, cold, Cout, (out_rows[k],))
    trace.add_ops += 1
    trace.add_spans.append((start, len(trace.events)))
    return trace.events[start:]


# --------------------------------------------------------------------------
# Multiplication
# --------------------------------------------------------------------------

def and_count(n: int) -> int:
    """AND operations in an n-bit multiply: (1+..+(n-1))*2 + n = n^2."""
    if n < 1:
        raise ValueError("n must be positive")
    return n * n


def add_count(n: int) -> int:
    """Intermediate ADD operations in an n-bit multiply.

    (1+..+(n-2))*2 + (n-1) + 1 = (n-2)(n-1) + n for n >= 2; a 1-bit product
    needs no additions at all.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n == 1:
        return 0
    return (n - 2) * (n - 1) + n


def mul_aap_count(n: int) -> int:
    """Total AAPs for one n-bit multiply (same for every column)."""
    if n < 1:
        raise ValueError("n must be positive")
    if n <= 2:
        return 3 * n * n + 3 * (n - 1) ** 2 + 4
    return 3 * n * n + 4 * (n - 1) ** 3 + 4 * (n - 1)


def _fused_add(
    state: SubarrayState,
    op2_rows: Sequence[int] | None,
    dest: Sequence[int],
    carry_dst: int | None,
    seeded: bool,
) -> None:
    """(n-1)-bit running-sum ADD inside a multiply. Exactly 4(n-1) AAPs.

    Operand 1 is the AND result already sitting in A/A-1, zero-extended from
    row0 above bit 0. Operand 2 is the intermediate value (row0 zeros when
    op2_rows is None). When seeded, the bit-0 carry-in is the second AND term
    previously parked in Cin, so one ADD folds two partial products. dest maps
    sum bit j to its row; carry_dst, when given, receives the final carry via
    the last triple activation.
    """
    m = state.n - 1
    C = state.compute_rows
    A, A1, B, B1 = C["A"], C["A1"], C["B"], C["B1"]
    Cin, Cin1, Cout, Cout1 = C["Cin"], C["Cin1"], C["Cout"], C["Cout1"]
    row0 = C["row0"]
    trace = state.trace
    start = len(trace.events)

    for j in range(m):
        if j == 0:
            if seeded:
                _copy(state, Cin, (Cin1,))
            else:
                _copy(state, row0, (Cin, Cin1))
        else:
            _copy(state, row0, (A, A1))
        src = op2_rows[j] if op2_rows is not None else row0
        _copy(state, src, (B, B1))
        free = Cout1 if j % 2 == 0 else Cin1
        cold = Cin1 if j % 2 == 0 else Cout1
        tra_dsts = [Cout, free]
        if j == m - 1 and carry_dst is not None:
            tra_dsts.append(carry_dst)
        _tra(state, A, B, Cin, tra_dsts)
        _qra(state, A1, B1, cold, Cout, (dest[j],))
    trace.add_ops += 1
    trace.add_spans.append((start, len(trace.events)))


def _multiply_small(state: SubarrayState, pair: int) -> None:
    """n <= 2 schedule, following the worked two-bit command sequence."""
    n = state.n
    C = state.compute_rows
    A, A1, B, B1 = C["A"], C["A1"], C["B"], C["B1"]
    Cin, Cin1, Cout, Cout1 = C["Cin"], C["Cin1"], C["Cout"], C["Cout1"]
    row0 = C["row0"]
    P = state.product_rows
    a = state.activation_rows()
    b = state.weight_rows(pair)
    trace = state.trace

    _write_row0(state)
    if n == 1:
        # Degenerate path: a single AND plus the fixed zero-fill preamble.
        _copy(state, row0, (B, B1))
        _copy(state, row0, (Cout, Cout1))
        and_op(state, a[0], b[0], (P[0],), pair="a")
        _copy(state, row0, (P[1],))
        return

    and_op(state, a[0], b[0], (P[0],), pair="a")
    and_op(state, a[1], b[0], (A, A1), pair="a")
    and_op(state, a[0], b[1], (B, B1), pair="b")
    # Middle column: carry to Cout, sum to P1, then re-duplicate the carry.
    start = len(trace.events)
    _tra(state, A, B, Cin, (Cout,))
    _qra(state, A1, B1, Cin1, Cout, (P[1],))
    _copy(state, Cin, (Cin1,))
    trace.add_ops += 1
    trace.add_spans.append((start, len(trace.events)))
    and_op(state, a[1], b[1], (A, A1), pair="a")
    # Final column adds the carry to the last partial product against zeros.
    start = len(trace.events)
    _copy(state, row0, (B, B1))
    _tra(state, A, B, Cin, (P[3], Cout))
    _qra(state, A1, B1, Cin1, Cout, (P[2],))
    trace.add_ops += 1
    trace.add_spans.append((start, len(trace.events)))


def _multiply_wide(state: SubarrayState, pair: int) -> None:
    """n > 2 schedule: per product column, AND the partial products and fold
    them into the intermediate rows with (n-1)-bit running-sum ADDs.

    The first two AND terms of a column share one ADD (the second term enters
    as the bit-0 carry seed), so a column with c terms costs c-1 ADDs; the
    single-term last column costs one. The final ADD of each column routes sum
    bit 0 to the product row and the remaining bits shifted down into the
    intermediate rows, which is how the carry moves to the next column.
    """
    n = state.n
    m = n - 1
    C = state.compute_rows
    A, A1, Cin = C["A"], C["A1"], C["Cin"]
    I = state.intermediate_rows
    P = state.product_rows
    a = state.activation_rows()
    b = state.weight_rows(pair)

    and_op(state, a[0], b[0], (P[0],), pair="a")
    for t in range(1, 2 * n - 1):
        hi = min(t, n - 1)
        lo = max(0, t - n + 1)
        terms = [(i, t - i) for i in range(hi, lo - 1, -1)]
        c = len(terms)
        last_col = t == 2 * n - 2
        op2 = None if t == 1 else I

        def dest_for(final: bool) -> tuple[list[int], int | None]:
            if not final:
                return list(I), None
            if last_col:
                return [P[t], P[t + 1], *I[1 : m - 1]], I[m - 1]
            return [P[t], *I[: m - 1]], I[m - 1]

        if c == 1:
            i, j = terms[0]
            and_op(state, a[i], b[j], (A, A1), pair="a")
            dest, carry = dest_for(final=True)
            _fused_add(state, op2, dest, carry, seeded=False)
            continue
        and_op(state, a[terms[0][0]], b[terms[0][1]], (A, A1), pair="a")
        and_op(state, a[terms[1][0]], b[terms[1][1]], (Cin,), pair="b")
        dest, carry = dest_for(final=c == 2)
        _fused_add(state, op2, dest, carry, seeded=True)
        for idx, (i, j) in enumerate(terms[2:], start=2):
            and_op(state, a[i], b[j], (A, A1), pair="a")
            dest, carry = dest_for(final=idx == c - 1)
            _fused_add(state, I, dest, carry, seeded=False)


def multiply(
    state: SubarrayState, col_range: Sequence[int] | None = None, pair: int = 0
) -> list[AapEvent]:
    """Multiply the operands of every column, product into P0..P(2n-1).

    col_range is advisory (all bitlines execute the same command sequence);
    pair selects which stacked weight block multiplies the shared activation
    bits. Costs mul_aap_count(n) AAPs regardless of operand values.
    """
    if not 0 <= pair < max(state.pair_capacity, 1):
        raise ConfigurationError(
            f"pair {pair} exceeds stacking capacity {state.pair_capacity}"
        )
    state.weight_rows(pair)  # raises if the stacked pair does not fit
    start = len(state.trace.events)
    if state.n <= 2:
        _multiply_small(state, pair)
    else:
        _multiply_wide(state, pair)
    return state.trace.events[start:]


# --------------------------------------------------------------------------
# Operand access
# --------------------------------------------------------------------------

def write_operand_column(
    state: SubarrayState, col: int, a: int, b: int, pair: int = 0
) -> None:
    """Store one operand pair in a column: activation a, weight b, LSB first."""
    n = state.n
    if not 0 <= col < state.cols:
        raise RowBoundsError(f"column {col} outside 0..{state.cols - 1}")
    if not 0 <= a < (1 << n) or not 0 <= b < (1 << n):
        raise OperandRangeError(f"operands must fit {n} unsigned bits")
    for k, row in enumerate(state.activation_rows()):
        state.cells[row, col] = (a >> k) & 1
    for k, row in enumerate(state.weight_rows(pair)):
        state.cells[row, col] = (b >> k) & 1


def read_product_column(state: SubarrayState, col: int) -> int:
    """Read back the 2n-bit product of a column."""
    if not 0 <= col < state.cols:
        raise RowBoundsError(f"column {col} outside 0..{state.cols - 1}")
    value = 0
    for k, row in enumerate(state.product_rows):
        value |= int(state.cells[row, col]) << k
    return value


def read_row_bits(state: SubarrayState, rows: Sequence[int], col: int) -> int:
    """Assemble an integer from the given rows of a column, LSB first."""
    value = 0
    for k, row in enumerate(rows):
        value |= int(state.cells[row, col]) << k
    return value


def write_row_bits(
    state: SubarrayState, rows: Sequence[int], col: int, value: int
) -> None:
    """Scatter an integer into the given rows of a column, LSB first."""
    if value < 0 or value >> len(rows):
        raise OperandRangeError(f"value {value} does not fit {len(rows)} rows")
    for k, row in enumerate(rows):
        state.cells[row, col] = (value >> k) & 1
