"""Result tables and the number formatting shared by every report.

All rounding for display happens here so a value is formatted once, with
the precision of its column kind.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import StratixDevice, VersalDevice
from .stratix import StratixDesign
from .versal import VersalDesign, aie_usage, bandwidth_requirement, mapping_label, ram_efficiency

FORMATS = ("md", "csv", "json")


def fmt_tops(x: float) -> str:
    return f"{x:.2f}"


def fmt_bw(x: float) -> str:
    return f"{x:.1f}"


def fmt_pct(fraction: float) -> str:
    return f"{100 * fraction:.1f}%"


def fmt_eff(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.3f}"


def fmt_power(x: Optional[float]) -> str:
    return "-" if x is None else f"{x:.1f}"


def fmt_mhz(hz: float) -> str:
    return f"{hz / 1e6:g}"


def fmt_used(used: int, total: int) -> str:
    """Resource count with integer share of the device, e.g. ``416 (43%)``."""
    return f"{used} ({100 * used / total:.0f}%)"


@dataclass
class Table:
    columns: list[str]
    rows: list[list[str]] = field(default_factory=list)
    title: Optional[str] = None

    def add(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} cells, got {len(cells)}")
        self.rows.append([str(c) for c in cells])

    def render(self, fmt: str = "md") -> str:
        if fmt == "md":
            return self._markdown()
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(self.columns)
            writer.writerows(self.rows)
            return buf.getvalue()
        if fmt == "json":
            return json.dumps([dict(zip(self.columns, r)) for r in self.rows], indent=2) + "\n"
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")

    def _markdown(self) -> str:
        widths = [max([len(c)] + [len(r[i]) for r in self.rows]) for i, c in enumerate(self.columns)]

        def line(cells):
            return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

        out = [line(self.columns), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
        out += [line(r) for r in self.rows]
        text = "\n".join(out) + "\n"
        return f"{self.title}\n\n{text}" if self.title else text


VERSAL_COLUMNS = [
    "UxVxW (P.)",
    "{A, B, C}",
    "Compute GEMM size",
    "Native Buffer size",
    "BRAMs",
    "URAMs",
    "AIE cores",
    "PL Fq. (MHz)",
    "Thrpt. (TOPs)",
    "Power (W)",
    "En. Eff. (TOPs/W)",
    "RAM Eff.",
    "BW (GiB/s)",
]


@dataclass(frozen=True)
class VersalRow:
    design: VersalDesign
    pl_freq: float
    throughput: float
    power: Optional[float] = None

    @property
    def bandwidth(self) -> float:
        return bandwidth_requirement(self.design.native_dims, self.throughput)

    @property
    def energy_efficiency(self) -> Optional[float]:
        return None if self.power is None else self.throughput / self.power


def versal_table(rows: Sequence[VersalRow], device: VersalDevice) -> Table:
    table = Table(list(VERSAL_COLUMNS))
    for r in rows:
        d = r.design
        table.add(
            d.label,
            mapping_label(d.mapping),
            str(d.compute_dims),
            str(d.native_dims),
            fmt_used(d.brams_used, device.bram36_total),
            fmt_used(d.urams_used, device.uram_total),
            fmt_used(aie_usage(d.aie).total_cores, device.aie_cores),
            fmt_mhz(r.pl_freq),
            fmt_tops(r.throughput),
            fmt_power(r.power),
            fmt_eff(r.energy_efficiency),
            fmt_pct(ram_efficiency(d)),
            fmt_bw(r.bandwidth),
        )
    return table


def versal_solution_table(designs: Sequence[VersalDesign], device: VersalDevice) -> Table:
    table = Table(["Rank", "UxVxW (P.)", "{A, B, C}", "Native Buffer size", "BRAMs", "URAMs", "RAM Eff."])
    for rank, d in enumerate(designs, 1):
        table.add(
            rank,
            d.label,
            mapping_label(d.mapping),
            str(d.native_dims),
            fmt_used(d.brams_used, device.bram36_total),
            fmt_used(d.urams_used, device.uram_total),
            fmt_pct(ram_efficiency(d)),
        )
    return table


STRATIX_COLUMNS = [
    "TB config.",
    "Compute GEMM size",
    "Native Buffer size",
    "BRAMs",
    "TBs",
    "Freq. (MHz)",
    "Thrpt. (TOPs)",
    "Power (W)",
    "En. Eff. (TOPs/W)",
    "RAM Eff.",
    "BW (GiB/s)",
]


def stratix_table(designs: Sequence[StratixDesign], device: StratixDevice) -> Table:
    table = Table(list(STRATIX_COLUMNS))
    for d in designs:
        table.add(
            str(d.params),
            str(d.compute),
            str(d.native),
            fmt_used(d.m20ks_used, device.m20k_total),
            fmt_used(d.tbs_used, device.tb_total),
            fmt_mhz(d.freq),
            fmt_tops(d.throughput),
            fmt_power(d.power),
            fmt_eff(d.energy_efficiency),
            fmt_pct(d.ram_efficiency),
            fmt_bw(d.bandwidth),
        )
    return table


def sweep_table(points: Sequence[tuple[int, float]], peak: float) -> Table:
    """Effective throughput over square problem sizes."""
    table = Table(["s", "Effective (TOPs)", "Of native peak"])
    for s, tops in points:
        table.add(s, fmt_tops(tops), fmt_pct(tops / peak))
    return table


def key_value_table(items: Sequence[tuple[str, object]]) -> Table:
    table = Table(["quantity", "value"])
    for k, v in items:
        table.add(k, v)
    return table
