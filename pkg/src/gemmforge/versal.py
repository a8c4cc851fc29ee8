"""Analytical PL memory model and U/V/W solver for Versal AIE GEMM designs.

The AIE array computes an (X*M) x (Y*K) x (Z*N) block per pass; the PL holds
U x V x W of those blocks in partitioned BRAM/URAM buffers of 128-bit words.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .core import (
    GIB,
    ConstraintError,
    GemmDims,
    GemmForgeError,
    InfeasibleError,
    VersalDevice,
    data_path,
    round_up,
)

DEPTH_CAP = 4096
WORD_BITS = 128
BRAM36_BITS = 36 * 1024
URAM_BITS = 288 * 1024
BUFFERS = ("A", "B", "C")


class Ram(str, Enum):
    BRAM = "BRAM"
    URAM = "URAM"

    @property
    def letter(self) -> str:
        return self.value[0]


# BRAM < URAM, lexicographic over (A, B, C)
MAPPINGS: tuple[tuple[Ram, Ram, Ram], ...] = tuple(itertools.product((Ram.BRAM, Ram.URAM), repeat=3))


def parse_mapping(text: str) -> tuple[Ram, Ram, Ram]:
    """Parse ``"BUU"`` / ``"B,U,U"`` / ``"{B, U, U}"`` into a mapping tuple."""
    letters = [c for c in text.upper() if c in "BU"]
    if len(letters) != 3:
        raise ValueError(f"mapping needs three of B/U, got {text!r}")
    return tuple(Ram.BRAM if c == "B" else Ram.URAM for c in letters)


def mapping_label(mapping) -> str:
    return "{" + ", ".join(r.letter for r in mapping) + "}"


@dataclass(frozen=True)
class AieSolution:
    placement: str
    x: int
    y: int
    z: int
    m: int
    k: int
    n: int
    calibration: tuple[tuple[float, float], ...] = ()
    kernel_efficiency: float = 1.0

    def __post_init__(self):
        for name in ("x", "y", "z", "m", "k", "n"):
            if getattr(self, name) < 1:
                raise ConstraintError(f"AIE parameter {name} must be >= 1")
        if (self.m * self.k) % 16 or (self.k * self.n) % 16 or (self.m * self.n) % 4:
            raise ConstraintError(
                f"kernel {self.m}x{self.k}x{self.n}: M*K and K*N must be multiples of 16 and M*N of 4"
            )

    @property
    def compute_dims(self) -> GemmDims:
        return GemmDims(self.x * self.m, self.y * self.k, self.z * self.n)

    @property
    def label(self) -> str:
        return f"{self.x}x{self.y}x{self.z} ({self.placement})"

    def throughput_at(self, pl_freq: float) -> float:
        """Calibrated throughput (TOPs) at a PL frequency; no interpolation."""
        for freq, tops in self.calibration:
            if math.isclose(freq, pl_freq, rel_tol=1e-9):
                return tops
        known = ", ".join(f"{f / 1e6:g} MHz" for f, _ in self.calibration) or "none"
        raise GemmForgeError(f"{self.placement}: no calibration point at {pl_freq / 1e6:g} MHz (known: {known})")


def load_aie_solutions(path=None) -> dict[str, AieSolution]:
    path = Path(path) if path is not None else data_path("aie_solutions.json")
    doc = json.loads(path.read_text())
    out = {}
    for obj in doc["solutions"]:
        cal = tuple((float(p["pl_freq"]), float(p["throughput"])) for p in obj.get("calibration", []))
        sol = AieSolution(
            placement=obj["placement"],
            x=obj["x"], y=obj["y"], z=obj["z"],
            m=obj["m"], k=obj["k"], n=obj["n"],
            calibration=cal,
            kernel_efficiency=obj.get("kernel_efficiency", 1.0),
        )
        out[sol.placement] = sol
    return out


@dataclass(frozen=True)
class BufferGeometry:
    a_part: int
    b_part: int
    c_part: int
    a_depth: int
    b_depth: int
    c_depth: int

    @property
    def parts(self) -> tuple[int, int, int]:
        return (self.a_part, self.b_part, self.c_part)

    @property
    def depths(self) -> tuple[int, int, int]:
        return (self.a_depth, self.b_depth, self.c_depth)


def bram_cost(depth: int) -> Fraction:
    """36K BRAMs needed for one 128-bit wide partition of the given depth."""
    if depth < 1:
        raise ConstraintError(f"buffer depth must be >= 1, got {depth}")
    if depth > DEPTH_CAP:
        raise ConstraintError(f"buffer depth {depth} exceeds the {DEPTH_CAP}-entry cap")
    if depth <= 512:
        return Fraction(2)
    if depth <= 1024:
        return Fraction(4)
    if depth <= 2048:
        # 7 x (2Kx18) plus the last 2 bits packed in half a block
        return Fraction(15, 2)
    return Fraction(15)


def uram_cost(depth: int) -> int:
    """URAMs (4Kx72) needed for one 128-bit wide partition."""
    if depth < 1:
        raise ConstraintError(f"buffer depth must be >= 1, got {depth}")
    if depth > DEPTH_CAP:
        raise ConstraintError(f"buffer depth {depth} exceeds the {DEPTH_CAP}-entry cap")
    return 2


def _exact_depth(num: int, den: int, name: str) -> int:
    if num % den:
        raise ConstraintError(f"{name} depth {num}/{den} is not an integer")
    return num // den


def buffer_geometry(aie: AieSolution, u: int, v: int, w: int) -> BufferGeometry:
    if min(u, v, w) < 1:
        raise ConstraintError(f"U, V, W must be >= 1, got {u}x{v}x{w}")
    return BufferGeometry(
        a_part=2 * aie.x * aie.y,
        b_part=2 * aie.y * aie.z,
        c_part=2 * aie.x * aie.z,
        a_depth=_exact_depth(u * v * aie.m * aie.k, 16, "A"),
        b_depth=_exact_depth(v * w * aie.k * aie.n, 16, "B"),
        c_depth=_exact_depth(u * w * aie.m * aie.n, 4, "C"),
    )


def mapping_resources(geometry: BufferGeometry, mapping) -> tuple[int, int]:
    """Total (BRAM36, URAM) blocks for a buffer-to-RAM mapping.

    Half-BRAM costs are summed exactly and rounded up once at the end.
    """
    brams = Fraction(0)
    urams = 0
    for part, depth, ram in zip(geometry.parts, geometry.depths, mapping):
        if Ram(ram) is Ram.BRAM:
            brams += part * bram_cost(depth)
        else:
            urams += part * uram_cost(depth)
    return math.ceil(brams), urams


@dataclass(frozen=True)
class VersalDesign:
    aie: AieSolution
    u: int
    v: int
    w: int
    geometry: BufferGeometry
    mapping: tuple[Ram, Ram, Ram]
    brams_used: int
    urams_used: int
    native_dims: GemmDims
    compute_dims: GemmDims

    @property
    def product(self) -> int:
        return self.u * self.v * self.w

    @property
    def uvw(self) -> str:
        return f"{self.u}x{self.v}x{self.w}"

    @property
    def label(self) -> str:
        return f"{self.uvw} ({self.aie.placement})"


def make_design(aie: AieSolution, u: int, v: int, w: int, mapping) -> VersalDesign:
    mapping = tuple(Ram(r) for r in mapping)
    geometry = buffer_geometry(aie, u, v, w)
    brams, urams = mapping_resources(geometry, mapping)
    compute = aie.compute_dims
    return VersalDesign(
        aie=aie, u=u, v=v, w=w,
        geometry=geometry,
        mapping=mapping,
        brams_used=brams,
        urams_used=urams,
        native_dims=GemmDims(u * compute.m, v * compute.k, w * compute.n),
        compute_dims=compute,
    )


def check_design(design: VersalDesign, device: VersalDevice) -> list[str]:
    """Re-check depth cap and device resource limits; returns violations."""
    problems = []
    if max(design.geometry.depths) > DEPTH_CAP:
        problems.append(f"depth {max(design.geometry.depths)} exceeds cap {DEPTH_CAP}")
    if design.brams_used > device.bram36_total:
        problems.append(f"BRAM {design.brams_used} > {device.bram36_total}")
    if design.urams_used > device.uram_total:
        problems.append(f"URAM {design.urams_used} > {device.uram_total}")
    return problems


def _rank_key(design: VersalDesign):
    return (-design.product, -design.v, -design.u, -design.w, MAPPINGS.index(design.mapping))


def feasible_designs(aie: AieSolution, device: VersalDevice) -> list[VersalDesign]:
    """Every (U, V, W, mapping) meeting the depth cap and device limits, ranked."""
    mk, kn, mn = aie.m * aie.k // 16, aie.k * aie.n // 16, aie.m * aie.n // 4
    # depth caps bound the pairwise products U*V, V*W, U*W
    uv_max, vw_max, uw_max = DEPTH_CAP // mk, DEPTH_CAP // kn, DEPTH_CAP // mn
    out = []
    for u in range(1, min(uv_max, uw_max) + 1):
        for v in range(1, min(uv_max // u, vw_max) + 1):
            for w in range(1, min(vw_max // v, uw_max // u) + 1):
                geometry = buffer_geometry(aie, u, v, w)
                for mapping in MAPPINGS:
                    brams, urams = mapping_resources(geometry, mapping)
                    if brams <= device.bram36_total and urams <= device.uram_total:
                        out.append(make_design(aie, u, v, w, mapping))
    out.sort(key=_rank_key)
    return out


def solve_uvw(aie: AieSolution, device: VersalDevice, top_k: int = 5) -> list[VersalDesign]:
    """Exhaustive U*V*W maximization; returns the ``top_k`` best designs.

    Ties are broken by V, then U, then W (all descending), then by mapping
    order (BRAM before URAM, lexicographic over A, B, C).
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    designs = feasible_designs(aie, device)
    if not designs:
        raise InfeasibleError(*_binding_constraint(aie, device))
    return designs[:top_k]


def _binding_constraint(aie: AieSolution, device: VersalDevice) -> tuple[str, str]:
    geometry = buffer_geometry(aie, 1, 1, 1)
    if max(geometry.depths) > DEPTH_CAP:
        return "depth_cap", f"unit tiling already needs depth {max(geometry.depths)}"
    short = set()
    for mapping in MAPPINGS:
        brams, urams = mapping_resources(geometry, mapping)
        if brams > device.bram36_total:
            short.add("bram")
        if urams > device.uram_total:
            short.add("uram")
    name = "+".join(sorted(short))
    return name, f"no mapping of the 1x1x1 tiling fits {device.name}"


def ram_efficiency(design: VersalDesign) -> float:
    """Logical buffer bits over the physical bits of the blocks used."""
    g = design.geometry
    logical = sum(p * d for p, d in zip(g.parts, g.depths)) * WORD_BITS
    physical = design.brams_used * BRAM36_BITS + design.urams_used * URAM_BITS
    return logical / physical


def bandwidth_requirement(native: GemmDims, throughput: float) -> float:
    """Worst-case off-chip bandwidth (GiB/s) to refill A, B and drain C per native block."""
    if throughput <= 0:
        raise ValueError(f"throughput must be > 0, got {throughput}")
    seconds = native.ops / (throughput * 1e12)
    return native.io_bytes / seconds / GIB


@dataclass(frozen=True)
class AieUsage:
    matmul_cores: int
    add_cores: int
    total_cores: int
    plio_in_a: int
    plio_in_b: int
    plio_out: int

    @property
    def plio_total(self) -> int:
        return self.plio_in_a + self.plio_in_b + self.plio_out


def aie_usage(aie: AieSolution) -> AieUsage:
    matmul = aie.x * aie.y * aie.z
    add = aie.x * aie.z if aie.y > 1 else 0
    return AieUsage(matmul, add, matmul + add, aie.x * aie.y, aie.y * aie.z, aie.x * aie.z)


def scalability(native_peak: float, compute: GemmDims, s: int) -> float:
    """Effective TOPs for an s x s x s GEMM zero-padded to the compute size."""
    if s < 1:
        raise ValueError("s must be >= 1")
    padded = round_up(s, compute.m) * round_up(s, compute.k) * round_up(s, compute.n)
    return native_peak * (s**3 / padded)


def emit_hls_directives(design: VersalDesign) -> str:
    """HLS pragmas partitioning each buffer and binding it to BRAM or URAM."""
    g = design.geometry
    lines = [
        f"// {design.label}: native {design.native_dims}, compute {design.compute_dims}",
        f"// model estimate: {design.brams_used} BRAM36, {design.urams_used} URAM",
    ]
    # C is read and written every cycle by the accumulators
    storage = {"A": "ram_1p", "B": "ram_1p", "C": "ram_s2p"}
    for name, part in zip(BUFFERS, g.parts):
        lines.append(f"#pragma HLS array_partition variable={name}_buf type=block factor={part} dim=1")
    for name, ram in zip(BUFFERS, design.mapping):
        lines.append(
            f"#pragma HLS bind_storage variable={name}_buf type={storage[name]} impl={ram.value.lower()}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DesignPoint:
    """A built design: tiling, mapping and its measured PL frequency and power."""

    design: VersalDesign
    pl_freq: float
    power: Optional[float] = None

    @property
    def throughput(self) -> float:
        return self.design.aie.throughput_at(self.pl_freq)


def load_design_points(solutions: dict[str, AieSolution], path=None) -> tuple[str, list[DesignPoint]]:
    path = Path(path) if path is not None else data_path("versal_designs.json")
    doc = json.loads(Path(path).read_text())
    points = []
    for obj in doc["designs"]:
        if obj["aie"] not in solutions:
            raise GemmForgeError(f"{path}: unknown AIE placement {obj['aie']!r}")
        design = make_design(solutions[obj["aie"]], *obj["uvw"], parse_mapping(obj["mapping"]))
        points.append(DesignPoint(design, float(obj["pl_freq"]), obj.get("power")))
    return doc["device"], points
