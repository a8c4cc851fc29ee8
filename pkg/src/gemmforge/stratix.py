"""Tensor-block GEMM accelerator model for Stratix 10 NX.

Layout: ``e_m`` N-blocks, each holding ``e_n`` reduction groups of ``e_k``
cascaded arrays of ``l_a`` tensor blocks (TB). The first TB of each array
is only a loading port. One pass of the array computes a
(3*e_m) x ((l_a-1)*10*e_k) x e_n block.

Every function that takes native dimensions accepts ``strict``. With
``strict=True`` (the default) the dimensions must be legal for the hardware:
multiples of the compute size and ``n >= 3*l_a*e_n``. With ``strict=False``
the same formulas are evaluated in exact rational arithmetic on arbitrary
dimensions, which is how published design points with unaligned sizes are
accounted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .core import (
    GIB,
    ConstraintError,
    GemmDims,
    GemmForgeError,
    InfeasibleError,
    StratixDevice,
    ceil_div,
    data_path,
    round_up,
)

TB_CHAIN = 36
DOT_LEN = 10
ROWS_PER_TB = 3
M20K_BITS = 20480
M20K_DEPTH = 512

Number = Union[int, Fraction]


@dataclass(frozen=True, order=True)
class TbParams:
    l_a: int
    e_k: int
    e_n: int
    e_m: int

    def __post_init__(self):
        if self.l_a < 2 or TB_CHAIN % self.l_a:
            raise ConstraintError(f"array length must divide {TB_CHAIN} and be >= 2, got {self.l_a}")
        for name in ("e_k", "e_n", "e_m"):
            if getattr(self, name) < 1:
                raise ConstraintError(f"{name} must be >= 1, got {getattr(self, name)}")

    def __str__(self) -> str:
        return f"{self.l_a}x{self.e_k}x{self.e_n}x{self.e_m}"

    @classmethod
    def parse(cls, text: str) -> "TbParams":
        parts = text.lower().replace("×", "x").split("x")
        if len(parts) != 4:
            raise ValueError(f"expected LAxEKxENxEM, got {text!r}")
        return cls(*(int(p) for p in parts))

    @property
    def n_min(self) -> int:
        """Smallest N that hides the cascade register loading."""
        return self.l_a * ROWS_PER_TB * self.e_n


@dataclass(frozen=True)
class ComputeDims:
    d_m: int
    d_k: int
    d_n: int

    def as_gemm(self) -> GemmDims:
        return GemmDims(self.d_m, self.d_k, self.d_n)

    def __str__(self) -> str:
        return f"{self.d_m}x{self.d_k}x{self.d_n}"


def compute_dims(params: TbParams) -> ComputeDims:
    return ComputeDims(
        d_m=params.e_m * ROWS_PER_TB,
        d_k=(params.l_a - 1) * params.e_k * DOT_LEN,
        d_n=params.e_n,
    )


@dataclass(frozen=True)
class TbUsage:
    tbs_used: int
    wasted_tbs: int
    utilization: float


def tb_usage(params: TbParams, device: StratixDevice) -> TbUsage:
    arrays = params.e_k * params.e_n * params.e_m
    used = params.l_a * arrays
    if used > device.tb_total:
        raise InfeasibleError("tensor_blocks", f"{params} needs {used} TBs, {device.name} has {device.tb_total}")
    return TbUsage(used, arrays, used / device.tb_total)


def check_native(params: TbParams, native: GemmDims) -> None:
    """Raise ConstraintError naming the first dimension the hardware cannot run."""
    cd = compute_dims(params)
    if native.m % cd.d_m:
        raise ConstraintError(f"M={native.m} is not a multiple of D_M={cd.d_m}")
    if native.k % cd.d_k:
        raise ConstraintError(f"K={native.k} is not a multiple of D_K={cd.d_k}")
    if native.n % cd.d_n:
        raise ConstraintError(f"N={native.n} is not a multiple of D_N={cd.d_n}")
    if native.n < params.n_min:
        raise ConstraintError(
            f"N={native.n} is too small to hide TB loading; need N >= {params.n_min} (3*l_a*e_n)"
        )


def _ratio(num: int, den: int) -> Number:
    q = Fraction(num, den)
    return q.numerator if q.denominator == 1 else q


@dataclass(frozen=True)
class StratixGeometry:
    a_part: int
    b_part: int
    c_part: int
    a_depth: Number
    b_depth: Number
    c_depth: Number


def buffer_partitioning(params: TbParams, native: GemmDims, strict: bool = True) -> StratixGeometry:
    """Partition factors and per-partition depths of the double-buffered A, B, C.

    A and B use 80-bit words (10 int8), C uses 32-bit words.
    """
    if strict:
        check_native(params, native)
    b_part = (params.l_a - 1) * params.e_k * params.e_n
    a_part = params.e_m * params.e_k
    c_part = params.e_m * params.e_n * ROWS_PER_TB * 2
    m, k, n = native.m, native.k, native.n
    geometry = StratixGeometry(
        a_part=a_part,
        b_part=b_part,
        c_part=c_part,
        a_depth=_ratio(2 * m * k, a_part * DOT_LEN),
        b_depth=_ratio(2 * k * n, b_part * DOT_LEN),
        c_depth=_ratio(m * n * 2, c_part),
    )
    if strict:
        for name in ("a_depth", "b_depth", "c_depth"):
            if isinstance(getattr(geometry, name), Fraction):
                raise ConstraintError(f"{name} of {params} at {native} is not an integer")
    return geometry


def m20k_cost_80(depth: Number) -> int:
    """M20Ks for one 80-bit partition: pairs of 512x40 blocks."""
    if depth < 1:
        raise ConstraintError(f"depth must be >= 1, got {depth}")
    return 2 * math.ceil(Fraction(depth) / M20K_DEPTH)


def m20k_cost_32(depth: Number) -> int:
    """M20Ks for one 32-bit partition in 512x32 mode."""
    if depth < 1:
        raise ConstraintError(f"depth must be >= 1, got {depth}")
    return math.ceil(Fraction(depth) / M20K_DEPTH)


def m20k_breakdown(geometry: StratixGeometry) -> tuple[int, int, int]:
    return (
        geometry.a_part * m20k_cost_80(geometry.a_depth),
        geometry.b_part * m20k_cost_80(geometry.b_depth),
        geometry.c_part * m20k_cost_32(geometry.c_depth),
    )


def total_m20k(params: TbParams, native: GemmDims, strict: bool = True) -> int:
    return sum(m20k_breakdown(buffer_partitioning(params, native, strict)))


def ram_efficiency(params: TbParams, native: GemmDims, strict: bool = True) -> float:
    g = buffer_partitioning(params, native, strict)
    logical = (g.a_part * g.a_depth + g.b_part * g.b_depth) * 80 + g.c_part * g.c_depth * 32
    return float(Fraction(logical) / (sum(m20k_breakdown(g)) * M20K_BITS))


@dataclass(frozen=True)
class LatencyBreakdown:
    t_load: int
    t_prop: int
    t_adder: int
    tiles: Number
    t_n: Number
    t_total: Number


def adder_tree_depth(e_k: int) -> int:
    return (e_k - 1).bit_length()  # ceil(log2(e_k)), 0 for e_k == 1


def latency(params: TbParams, dims: GemmDims, strict: bool = True) -> LatencyBreakdown:
    """Cycles to process an M x K x N GEMM resident in the on-chip buffers."""
    if strict:
        check_native(params, dims)
    cd = compute_dims(params)
    t_load = params.l_a * ROWS_PER_TB
    t_prop = (params.l_a - 1) * 2
    t_adder = adder_tree_depth(params.e_k)
    tiles = _ratio(dims.m * dims.k, cd.d_k * cd.d_m)
    t_n = _ratio(dims.n, params.e_n)
    t_total = t_load + t_prop + t_adder + tiles * t_n
    if isinstance(t_total, Fraction) and t_total.denominator == 1:
        t_total = t_total.numerator
    return LatencyBreakdown(t_load, t_prop, t_adder, tiles, t_n, t_total)


def throughput(params: TbParams, dims: GemmDims, freq: float, strict: bool = True) -> float:
    """Achieved TOPs at clock ``freq`` (Hz)."""
    if freq <= 0:
        raise ValueError(f"frequency must be > 0, got {freq}")
    cycles = latency(params, dims, strict).t_total
    return dims.ops / (float(cycles) / freq) / 1e12


def bandwidth_requirement(native: GemmDims, t_total: Number, freq: float) -> float:
    """Worst-case GiB/s to stream A, B in and C out (int8) once per native block."""
    if freq <= 0:
        raise ValueError(f"frequency must be > 0, got {freq}")
    if t_total <= 0:
        raise ValueError(f"cycle count must be > 0, got {t_total}")
    return native.io_bytes / (float(t_total) / freq) / GIB


def energy_efficiency(tops: float, power: float) -> float:
    if power <= 0:
        raise ValueError("power must be > 0")
    return tops / power


def solve_native(
    params: TbParams,
    device: StratixDevice,
    budget_fraction: float = 0.90,
    budget: Optional[int] = None,
) -> GemmDims:
    """Largest M'*K'*N' whose buffers fit the M20K budget.

    ``budget`` (absolute block count) overrides ``budget_fraction``. Ties on
    the product prefer larger N', then K', then M'.
    """
    limit = budget if budget is not None else math.floor(budget_fraction * device.m20k_total)
    if limit > device.m20k_total:
        raise ValueError(f"budget {limit} exceeds the device's {device.m20k_total} M20Ks")
    cd = compute_dims(params)
    a_part = params.e_m * params.e_k
    b_part = (params.l_a - 1) * params.e_k * params.e_n
    c_part = params.e_m * params.e_n * ROWS_PER_TB * 2
    r_min = ROWS_PER_TB * params.l_a  # N' / e_n >= 3*l_a

    # With M' = i*d_m, K' = j*d_k, N' = r*e_n the depths are integers:
    #   A: 6*(l_a-1)*i*j, B: 2*j*r, C: i*r
    a_unit = 2 * ROWS_PER_TB * (params.l_a - 1)

    def a_cost(i, j):
        return a_part * 2 * ceil_div(a_unit * i * j, M20K_DEPTH)

    def bc_cost(i, j, r):
        return b_part * 2 * ceil_div(2 * j * r, M20K_DEPTH) + c_part * ceil_div(i * r, M20K_DEPTH)

    best = None
    best_key = None
    i = 1
    while a_cost(i, 1) + bc_cost(i, 1, r_min) <= limit:
        j = 1
        while True:
            base = a_cost(i, j)
            if base + bc_cost(i, j, r_min) > limit:
                break
            # largest r with the total under budget (cost is monotone in r)
            lo, hi = r_min, r_min
            while base + bc_cost(i, j, hi * 2) <= limit:
                hi *= 2
            hi *= 2
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if base + bc_cost(i, j, mid) <= limit:
                    lo = mid
                else:
                    hi = mid
            m, k, n = i * cd.d_m, j * cd.d_k, lo * params.e_n
            key = (m * k * n, n, k, m)
            if best_key is None or key > best_key:
                best_key, best = key, GemmDims(m, k, n)
            j += 1
        i += 1
    if best is None:
        raise InfeasibleError(
            "m20k", f"{params} needs more than {limit} M20Ks even at the minimum native size"
        )
    return best


@dataclass(frozen=True)
class StratixDesign:
    params: TbParams
    native: GemmDims
    geometry: StratixGeometry
    m20ks_used: int
    tbs_used: int
    freq: float
    latency: LatencyBreakdown
    throughput: float
    bandwidth: float
    ram_efficiency: float
    power: Optional[float] = None

    @property
    def compute(self) -> ComputeDims:
        return compute_dims(self.params)

    @property
    def energy_efficiency(self) -> Optional[float]:
        return None if self.power is None else energy_efficiency(self.throughput, self.power)


def evaluate_design(
    params: TbParams,
    native: GemmDims,
    device: StratixDevice,
    freq: float,
    power: Optional[float] = None,
    strict: bool = True,
) -> StratixDesign:
    usage = tb_usage(params, device)
    geometry = buffer_partitioning(params, native, strict)
    m20ks = sum(m20k_breakdown(geometry))
    lat = latency(params, native, strict)
    return StratixDesign(
        params=params,
        native=native,
        geometry=geometry,
        m20ks_used=m20ks,
        tbs_used=usage.tbs_used,
        freq=freq,
        latency=lat,
        throughput=throughput(params, native, freq, strict),
        bandwidth=bandwidth_requirement(native, lat.t_total, freq),
        ram_efficiency=ram_efficiency(params, native, strict),
        power=power,
    )


@dataclass
class DseReport:
    designs: list[StratixDesign]
    errors: list[tuple[TbParams, str]]


def dse(
    grid: Iterable[TbParams],
    device: StratixDevice,
    freq_table: Mapping[TbParams, float],
    power_table: Optional[Mapping[TbParams, float]] = None,
    native_table: Optional[Mapping[TbParams, GemmDims]] = None,
    budget_fraction: float = 0.90,
    budget: Optional[int] = None,
) -> DseReport:
    """Size, evaluate and rank every grid entry by throughput.

    Entries in ``native_table`` skip the solver and are evaluated as given,
    aligned or not. Per-entry failures are collected in ``errors``.
    """
    power_table = power_table or {}
    native_table = native_table or {}
    designs, errors = [], []
    for params in grid:
        try:
            if params not in freq_table:
                raise GemmForgeError(f"no frequency given for {params}")
            if params in native_table:
                native, strict = native_table[params], False
            else:
                native, strict = solve_native(params, device, budget_fraction, budget), True
            designs.append(
                evaluate_design(params, native, device, freq_table[params], power_table.get(params), strict)
            )
        except GemmForgeError as exc:
            errors.append((params, str(exc)))
    designs.sort(key=lambda d: (-d.throughput, d.params))
    return DseReport(designs, errors)


def scalability(params: TbParams, native_peak: float, s: int) -> float:
    """Effective TOPs on an s x s x s GEMM.

    M and K are zero-padded to the compute size since each TB register holds a
    fixed 3x10 block of A. N is streamed one column per cycle and only needs
    the load-hiding minimum.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    cd = compute_dims(params)
    padded = round_up(s, cd.d_m) * round_up(s, cd.d_k) * max(s, params.n_min)
    return native_peak * (s**3 / padded)


@dataclass(frozen=True)
class GridEntry:
    params: TbParams
    freq: float
    power: Optional[float] = None
    native: Optional[GemmDims] = None


def load_grid(path=None) -> tuple[str, list[GridEntry]]:
    """Read a DSE grid file; returns (device name, entries)."""
    path = Path(path) if path is not None else data_path("stratix_grid.json")
    doc = json.loads(Path(path).read_text())
    entries = []
    for obj in doc["designs"]:
        native = obj.get("native")
        entries.append(
            GridEntry(
                params=TbParams(*obj["config"]),
                freq=float(obj["freq"]),
                power=obj.get("power"),
                native=GemmDims(*native) if native else None,
            )
        )
    return doc["device"], entries


def dse_from_grid(
    entries: Iterable[GridEntry],
    device: StratixDevice,
    use_native: bool = True,
    budget_fraction: float = 0.90,
    budget: Optional[int] = None,
) -> DseReport:
    entries = list(entries)
    natives = {e.params: e.native for e in entries if use_native and e.native is not None}
    return dse(
        [e.params for e in entries],
        device,
        freq_table={e.params: e.freq for e in entries},
        power_table={e.params: e.power for e in entries if e.power is not None},
        native_table=natives,
        budget_fraction=budget_fraction,
        budget=budget,
    )
