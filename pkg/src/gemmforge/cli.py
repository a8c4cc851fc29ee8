"""gemmforge command-line interface.

Exit codes: 0 success, 1 domain or infeasibility error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import netlist as nl
from . import stratix, tb_sim, versal
from .core import GemmDims, GemmForgeError, load_device_catalog
from .report import (
    FORMATS,
    VersalRow,
    fmt_bw,
    fmt_tops,
    key_value_table,
    stratix_table,
    sweep_table,
    versal_solution_table,
    versal_table,
)

DEFAULT_SIZES = "512,1024,2048,4096"


class UsageError(Exception):
    """Bad flag values detected after argparse accepted the syntax."""


def _dims(text: str) -> GemmDims:
    try:
        return GemmDims.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _triple(text: str) -> tuple[int, int, int]:
    d = _dims(text)
    return d.m, d.k, d.n


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sizes must be positive")
    return sizes


def _freq(text: str) -> float:
    try:
        f = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a frequency: {text!r}") from None
    if f <= 0:
        raise argparse.ArgumentTypeError("frequency must be > 0")
    return f


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=FORMATS, default="md", help="output table format (default: md)")


def _add_tb_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TB parameters as LAxEKxENxEM")
    for flag in ("la", "ek", "en", "em"):
        p.add_argument(f"--{flag}", type=int)


def tb_params(args) -> stratix.TbParams:
    """TB parameters from --config or the four individual flags."""
    try:
        if args.config:
            return stratix.TbParams.parse(args.config)
        values = [args.la, args.ek, args.en, args.em]
        if None in values:
            raise UsageError("give --config LAxEKxENxEM or all of --la --ek --en --em")
        return stratix.TbParams(*values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemmforge", description=__doc__.splitlines()[0])
    parser.add_argument("--catalog", help="device catalog JSON (default: $GEMMFORGE_CATALOG or bundled)")
    top = parser.add_subparsers(dest="group", required=True)

    # versal
    vg = top.add_parser("versal", help="Versal AIE + PL designs").add_subparsers(dest="cmd", required=True)
    p = vg.add_parser("solve", help="rank U x V x W tilings and RAM mappings")
    p.add_argument("--aie", default="P1", help="AIE placement (default: P1)")
    p.add_argument("--device", default="VC1902")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--solutions", help="AIE solutions JSON (default: bundled)")
    _add_format(p)
    p = vg.add_parser("report", help="evaluate implemented design points")
    p.add_argument("--designs", help="design points JSON (default: bundled)")
    p.add_argument("--solutions")
    _add_format(p)
    p = vg.add_parser("sweep", help="effective throughput on s x s x s GEMMs")
    p.add_argument("--aie", default="P1")
    p.add_argument("--uvw", type=_triple, required=True, help="UxVxW")
    p.add_argument("--pl-freq", type=_freq, default=300e6, help="PL clock in Hz (calibrated points only)")
    p.add_argument("--sizes", type=_sizes, default=_sizes(DEFAULT_SIZES))
    p.add_argument("--solutions")
    _add_format(p)
    p = vg.add_parser("directives", help="emit HLS partition/binding pragmas")
    p.add_argument("--aie", default="P1")
    p.add_argument("--uvw", type=_triple, required=True)
    p.add_argument("--mapping", required=True, help="e.g. BUU for {A:BRAM, B:URAM, C:URAM}")
    p.add_argument("--solutions")

    # stratix
    sg = top.add_parser("stratix", help="Stratix 10 NX tensor-block designs").add_subparsers(dest="cmd", required=True)
    p = sg.add_parser("solve", help="size the native buffers under the M20K budget")
    _add_tb_params(p)
    p.add_argument("--device", default="NX2100")
    p.add_argument("--budget", type=int, help="absolute M20K budget")
    p.add_argument("--budget-fraction", type=float, default=0.90)
    p.add_argument("--freq", type=_freq, help="clock in Hz; adds throughput and bandwidth")
    _add_format(p)
    p = sg.add_parser("dse", help="evaluate and rank a grid of TB configurations")
    p.add_argument("--grid", help="grid JSON (default: bundled)")
    p.add_argument("--solve", action="store_true", help="size every entry with the solver, ignoring given natives")
    p.add_argument("--budget", type=int)
    p.add_argument("--budget-fraction", type=float, default=0.90)
    _add_format(p)
    p = sg.add_parser("latency", help="cycle count and throughput for one GEMM")
    _add_tb_params(p)
    p.add_argument("--dims", type=_dims, required=True, help="MxKxN")
    p.add_argument("--freq", type=_freq, required=True)
    p.add_argument("--relaxed", action="store_true", help="allow unaligned dims (rational evaluation)")
    _add_format(p)
    p = sg.add_parser("sweep", help="effective throughput on s x s x s GEMMs")
    _add_tb_params(p)
    p.add_argument("--dims", type=_dims, required=True, help="native MxKxN giving the peak")
    p.add_argument("--freq", type=_freq, required=True)
    p.add_argument("--relaxed", action="store_true")
    p.add_argument("--sizes", type=_sizes, default=_sizes(DEFAULT_SIZES))
    _add_format(p)

    # sim
    simg = top.add_parser("sim", help="cycle-level TB array simulation").add_subparsers(dest="cmd", required=True)
    p = simg.add_parser("run", help="simulate one GEMM and compare against the reference")
    _add_tb_params(p)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--a", help="raw row-major int8 file for A (default: random)")
    p.add_argument("--b", help="raw row-major int8 file for B (default: random)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write C as raw row-major int32")
    p.add_argument("--trace", help="write a JSON-lines event trace")
    _add_format(p)

    # netlist
    ng = top.add_parser("netlist", help="structural netlist generation").add_subparsers(dest="cmd", required=True)
    p = ng.add_parser("emit", help="generate, check and write a design netlist")
    _add_tb_params(p)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--addr-stages", type=int, default=0)
    p.add_argument("--data-stages", type=int, default=0)
    p.add_argument("--emit", choices=("json", "hdl_text"), default="hdl_text", help="format printed to stdout")
    p.add_argument("--out-dir", help="write <design>.netlist.json and <design>.v here instead")

    # catalog
    cg = top.add_parser("catalog", help="device catalogs").add_subparsers(dest="cmd", required=True)
    p = cg.add_parser("validate", help="load and check a catalog")
    p.add_argument("path", nargs="?")
    return parser


def _catalog(args):
    return load_device_catalog(args.catalog)


def _versal_solutions(args):
    return versal.load_aie_solutions(getattr(args, "solutions", None))


def _aie(args):
    sols = _versal_solutions(args)
    if args.aie not in sols:
        raise UsageError(f"unknown AIE placement {args.aie!r}; known: {', '.join(sorted(sols))}")
    return sols[args.aie]


def cmd_versal_solve(args, out):
    if args.top < 1:
        raise UsageError("--top must be >= 1")
    device = _catalog(args).versal(args.device)
    designs = versal.solve_uvw(_aie(args), device, top_k=args.top)
    out.write(versal_solution_table(designs, device).render(args.format))


def cmd_versal_report(args, out):
    name, points = versal.load_design_points(_versal_solutions(args), args.designs)
    device = _catalog(args).versal(name)
    for p in points:
        for problem in versal.check_design(p.design, device):
            print(f"warning: {p.design.label}: {problem}", file=sys.stderr)
    rows = [VersalRow(p.design, p.pl_freq, p.throughput, p.power) for p in points]
    out.write(versal_table(rows, device).render(args.format))


def cmd_versal_sweep(args, out):
    aie = _aie(args)
    peak = aie.throughput_at(args.pl_freq)
    design = versal.make_design(aie, *args.uvw, versal.MAPPINGS[0])
    points = [(s, versal.scalability(peak, design.compute_dims, s)) for s in args.sizes]
    out.write(sweep_table(points, peak).render(args.format))


def cmd_versal_directives(args, out):
    try:
        mapping = versal.parse_mapping(args.mapping)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(versal.emit_hls_directives(versal.make_design(_aie(args), *args.uvw, mapping)))


def cmd_stratix_solve(args, out):
    params = tb_params(args)
    device = _catalog(args).stratix(args.device)
    native = stratix.solve_native(params, device, args.budget_fraction, args.budget)
    items = [
        ("TB config.", str(params)),
        ("Compute GEMM size", str(stratix.compute_dims(params))),
        ("Native Buffer size", str(native)),
        ("M20Ks", stratix.total_m20k(params, native)),
        ("TBs", stratix.tb_usage(params, device).tbs_used),
    ]
    if args.freq:
        d = stratix.evaluate_design(params, native, device, args.freq)
        items += [("Thrpt. (TOPs)", fmt_tops(d.throughput)), ("BW (GiB/s)", fmt_bw(d.bandwidth))]
    out.write(key_value_table(items).render(args.format))


def cmd_stratix_dse(args, out):
    name, entries = stratix.load_grid(args.grid)
    device = _catalog(args).stratix(name)
    report = stratix.dse_from_grid(entries, device, not args.solve, args.budget_fraction, args.budget)
    for params, msg in report.errors:
        print(f"warning: {params}: {msg}", file=sys.stderr)
    out.write(stratix_table(report.designs, device).render(args.format))
    if not report.designs:
        raise GemmForgeError("no feasible design in the grid")


def cmd_stratix_latency(args, out):
    params = tb_params(args)
    strict = not args.relaxed
    lat = stratix.latency(params, args.dims, strict)
    tops = stratix.throughput(params, args.dims, args.freq, strict)
    items = [
        ("t_load", lat.t_load),
        ("t_prop", lat.t_prop),
        ("t_adder", lat.t_adder),
        ("tiles", lat.tiles),
        ("t_n", lat.t_n),
        ("t_total", lat.t_total),
        ("Thrpt. (TOPs)", fmt_tops(tops)),
        ("BW (GiB/s)", fmt_bw(stratix.bandwidth_requirement(args.dims, lat.t_total, args.freq))),
    ]
    out.write(key_value_table(items).render(args.format))


def cmd_stratix_sweep(args, out):
    params = tb_params(args)
    peak = stratix.throughput(params, args.dims, args.freq, not args.relaxed)
    points = [(s, stratix.scalability(params, peak, s)) for s in args.sizes]
    out.write(sweep_table(points, peak).render(args.format))


def cmd_sim_run(args, out):
    params = tb_params(args)
    m, k, n = args.dims.m, args.dims.k, args.dims.n
    rng = np.random.default_rng(args.seed)
    a = tb_sim.read_matrix(args.a, m, k) if args.a else rng.integers(-128, 128, (m, k), dtype=np.int8)
    b = tb_sim.read_matrix(args.b, k, n) if args.b else rng.integers(-128, 128, (k, n), dtype=np.int8)
    result = tb_sim.simulate(params, a, b, trace=bool(args.trace))
    expected = stratix.latency(params, args.dims).t_total
    match = bool(np.array_equal(result.c, tb_sim.reference_gemm(a, b)))
    if args.out:
        tb_sim.write_matrix(args.out, result.c)
    if args.trace:
        tb_sim.write_trace(result.trace, args.trace)
    items = [
        ("TB config.", str(params)),
        ("dims", str(args.dims)),
        ("cycles", result.cycles),
        ("t_total (model)", expected),
        ("matches reference", "yes" if match else "no"),
    ]
    out.write(key_value_table(items).render(args.format))
    if not match or result.cycles != expected:
        raise GemmForgeError("simulation disagrees with the reference model")


def cmd_netlist_emit(args, out):
    params = tb_params(args)
    if args.addr_stages < 0 or args.data_stages < 0:
        raise UsageError("pipeline stage counts must be >= 0")
    netlist = nl.generate(params, args.dims, args.addr_stages, args.data_stages)
    problems = nl.check(netlist, params, args.dims)
    for p in problems:
        print(f"violation: {p}", file=sys.stderr)
    if args.out_dir:
        outdir = Path(args.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{netlist.name}.netlist.json").write_text(nl.emit(netlist, "json"))
        (outdir / f"{netlist.name}.v").write_text(nl.emit(netlist, "hdl_text"))
        out.write(json.dumps(nl.summary(netlist), sort_keys=True) + "\n")
    else:
        out.write(nl.emit(netlist, args.emit))
    if problems:
        raise GemmForgeError(f"{len(problems)} netlist violations")


def cmd_catalog_validate(args, out):
    cat = load_device_catalog(args.path or args.catalog)
    for d in cat.versal_devices:
        out.write(f"{d.name}: versal, {d.bram36_total} BRAM36, {d.uram_total} URAM, {d.aie_cores} AIE cores\n")
    for d in cat.stratix_devices:
        out.write(f"{d.name}: stratix, {d.m20k_total} M20K, {d.tb_total} TBs\n")
    out.write("ok\n")


COMMANDS = {
    ("versal", "solve"): cmd_versal_solve,
    ("versal", "report"): cmd_versal_report,
    ("versal", "sweep"): cmd_versal_sweep,
    ("versal", "directives"): cmd_versal_directives,
    ("stratix", "solve"): cmd_stratix_solve,
    ("stratix", "dse"): cmd_stratix_dse,
    ("stratix", "latency"): cmd_stratix_latency,
    ("stratix", "sweep"): cmd_stratix_sweep,
    ("sim", "run"): cmd_sim_run,
    ("netlist", "emit"): cmd_netlist_emit,
    ("catalog", "validate"): cmd_catalog_validate,
}


def run(argv: Optional[Sequence[str]] = None, out=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit code."""
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[(args.group, args.cmd)](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gemmforge: error: {exc}", file=sys.stderr)
        return 2
    except (GemmForgeError, ValueError, OSError) as exc:
        print(f"gemmforge: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
