"""Structural netlist of a tensor-block GEMM accelerator.

The netlist lists every TB, M20K block, soft adder, pipeline register and
the control stub, plus point-to-multipoint nets between their ports. It can
be rendered as JSON (lossless) or as a small structural HDL text:

    module   := "module" NAME ";" wire* inst* "endmodule"
    wire     := "wire" ["[" W-1 ":0]"] NET ";"
    inst     := KIND ["#(" param ("," param)* ")"] ID "(" conn ("," conn)* ");"
    param    := "." KEY "(" VALUE ")"
    conn     := "." PORT "(" NET ")"

Port names may carry dotted qualifiers (``data_in.l1.r0``) which the text
rendering flattens with underscores.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .core import GemmDims, ceil_div
from .stratix import (
    M20K_DEPTH,
    ROWS_PER_TB,
    StratixGeometry,
    TbParams,
    adder_tree_depth,
    buffer_partitioning,
    total_m20k,
)

M20K_CONFIGS = {
    "512x40": 40,
    "1024x20": 20,
    "2048x10": 10,
    "2048x8": 8,
    "1024x16": 16,
    "512x32": 32,
}
# physical widths allowed for each logical word width
WIDTHS_FOR_WORD = {80: (40, 20, 10), 32: (8, 16, 32)}
KINDS = ("control_stub", "tensor_block", "m20k", "soft_adder", "pipeline_reg")
ACC_BITS = 32
WORD_BITS = 80
CTRL_PORTS = ("addr_a", "addr_b", "addr_c", "bank_sel", "load_en")


@dataclass(frozen=True, order=True)
class Endpoint:
    inst: str
    port: str


@dataclass
class Instance:
    id: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class Net:
    name: str
    width: int
    driver: Endpoint
    sinks: list[Endpoint] = field(default_factory=list)


@dataclass
class Netlist:
    name: str
    instances: list[Instance]
    nets: list[Net]
    attributes: dict = field(default_factory=dict)

    def count(self, kind: str, **match) -> int:
        return sum(
            1
            for inst in self.instances
            if inst.kind == kind and all(inst.params.get(k) == v for k, v in match.items())
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "attributes": self.attributes,
            "instances": [{"id": i.id, "kind": i.kind, "params": i.params} for i in self.instances],
            "nets": [
                {
                    "name": n.name,
                    "width": n.width,
                    "driver": [n.driver.inst, n.driver.port],
                    "sinks": [[s.inst, s.port] for s in n.sinks],
                }
                for n in self.nets
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Netlist":
        return cls(
            name=doc["name"],
            attributes=doc["attributes"],
            instances=[Instance(i["id"], i["kind"], i["params"]) for i in doc["instances"]],
            nets=[
                Net(n["name"], n["width"], Endpoint(*n["driver"]), [Endpoint(*s) for s in n["sinks"]])
                for n in doc["nets"]
            ],
        )


def design_name(params: TbParams) -> str:
    return f"tb_{params}"


class _Builder:
    def __init__(self):
        self.instances: list[Instance] = []
        self.nets: list[Net] = []

    def inst(self, id: str, kind: str, **params) -> str:
        self.instances.append(Instance(id, kind, params))
        return id

    def net(self, name: str, width: int, driver: tuple[str, str], sinks) -> None:
        self.nets.append(Net(name, width, Endpoint(*driver), [Endpoint(*s) for s in sinks]))


def _tb(em, en, ek, pos) -> str:
    return f"tb_m{em}_n{en}_k{ek}_p{pos}"


def _addr_width(depth) -> int:
    return max(1, (depth - 1).bit_length())


def _ram_bank(b: _Builder, buf: str, part: int, depth, word_bits: int) -> list[tuple[str, int, int]]:
    """Instantiate the M20Ks of one partition; returns (id, row, lane)."""
    rows = ceil_div(depth, M20K_DEPTH)
    lanes = 2 if word_bits == WORD_BITS else 1
    config = "512x40" if word_bits == WORD_BITS else "512x32"
    out = []
    for row in range(rows):
        for lane in range(lanes):
            rid = b.inst(
                f"ram_{buf.lower()}{part}_r{row}_l{lane}",
                "m20k",
                buffer=buf,
                config=config,
                lane=lane,
                partition=part,
                row=row,
                word_bits=word_bits,
            )
            out.append((rid, row, lane))
    return out


def generate(params: TbParams, native: GemmDims, addr_stages: int = 0, data_stages: int = 0) -> Netlist:
    """Build the structural netlist of a design; pipeline stages go on B data and address nets."""
    if addr_stages < 0 or data_stages < 0:
        raise ValueError("pipeline stage counts must be >= 0")
    geom: StratixGeometry = buffer_partitioning(params, native, strict=True)
    la, ek_n, en_n, em_n = params.l_a, params.e_k, params.e_n, params.e_m
    b = _Builder()
    ctrl = b.inst("ctrl", "control_stub", addr_stages=addr_stages, data_stages=data_stages, ports=list(CTRL_PORTS))

    # TB layout and cascade chains
    for em in range(em_n):
        for en in range(en_n):
            for ek in range(ek_n):
                for pos in range(la):
                    b.inst(
                        _tb(em, en, ek, pos),
                        "tensor_block",
                        mode="load_port" if pos == 0 else "compute",
                        em=em, en=en, ek=ek, pos=pos,
                    )
    for em in range(em_n):
        for en in range(en_n):
            for ek in range(ek_n):
                for pos in range(1, la):
                    b.net(
                        f"casc_data_m{em}_n{en}_k{ek}_p{pos}", WORD_BITS,
                        (_tb(em, en, ek, pos - 1), "casc_data_out"),
                        [(_tb(em, en, ek, pos), "casc_data_in")],
                    )
                for pos in range(2, la):
                    b.net(
                        f"casc_accum_m{em}_n{en}_k{ek}_p{pos}", ROWS_PER_TB * ACC_BITS,
                        (_tb(em, en, ek, pos - 1), "casc_accum_out"),
                        [(_tb(em, en, ek, pos), "casc_accum_in")],
                    )

    # A: partition (em, ek), broadcast to the load ports of every N block
    for em in range(em_n):
        for ek in range(ek_n):
            part = em * ek_n + ek
            for rid, row, lane in _ram_bank(b, "A", part, geom.a_depth, WORD_BITS):
                sinks = [(_tb(em, en, ek, 0), f"load_in.l{lane}.r{row}") for en in range(en_n)]
                b.net(f"a{part}_r{row}_l{lane}", WORD_BITS // 2, (rid, "q"), sinks)

    # B: partition (en, ek, pos), broadcast across N blocks through a register chain
    for en in range(en_n):
        for ek in range(ek_n):
            for pos in range(1, la):
                part = (en * ek_n + ek) * (la - 1) + pos - 1
                consumers = [(_tb(em, en, ek, pos), "data_in") for em in range(em_n)]
                blocks = _ram_bank(b, "B", part, geom.b_depth, WORD_BITS)
                if data_stages == 0:
                    for rid, row, lane in blocks:
                        sinks = [(inst, f"{port}.l{lane}.r{row}") for inst, port in consumers]
                        b.net(f"b{part}_r{row}_l{lane}", WORD_BITS // 2, (rid, "q"), sinks)
                    continue
                regs = [
                    b.inst(f"preg_b{part}_s{s}", "pipeline_reg", net="b_data", stage=s, width=WORD_BITS)
                    for s in range(data_stages)
                ]
                for rid, row, lane in blocks:
                    b.net(f"b{part}_r{row}_l{lane}", WORD_BITS // 2, (rid, "q"), [(regs[0], f"d.l{lane}.r{row}")])
                for s in range(1, data_stages):
                    b.net(f"b{part}_s{s}", WORD_BITS, (regs[s - 1], "q"), [(regs[s], "d")])
                b.net(f"b{part}_s{data_stages}", WORD_BITS, (regs[-1], "q"), consumers)

    # adder trees, accumulators and C
    n_adders = 0
    for em in range(em_n):
        for en in range(en_n):
            for lane in range(ROWS_PER_TB):
                tag = f"m{em}_n{en}_r{lane}"
                sources = [(_tb(em, en, ek, la - 1), f"data_out.r{lane}") for ek in range(ek_n)]
                level = 0
                while len(sources) > 1:
                    nxt = []
                    for i in range(0, len(sources) - 1, 2):
                        add = b.inst(f"add_{tag}_t{n_adders}", "soft_adder", level=level, width=ACC_BITS)
                        n_adders += 1
                        for src, port in zip(sources[i : i + 2], ("a", "b")):
                            b.net(f"sum_{tag}_{src[0]}_{src[1].replace('.', '_')}", ACC_BITS, src, [(add, port)])
                        nxt.append((add, "s"))
                    if len(sources) % 2:
                        nxt.append(sources[-1])
                    sources = nxt
                    level += 1
                acc = b.inst(f"acc_{tag}", "soft_adder", level=adder_tree_depth(ek_n), width=ACC_BITS, role="accumulate")
                src = sources[0]
                b.net(f"sum_{tag}_{src[0]}_{src[1].replace('.', '_')}", ACC_BITS, src, [(acc, "a")])
                c_blocks = []
                for half in range(2):
                    part = ((em * en_n + en) * ROWS_PER_TB + lane) * 2 + half
                    for rid, row, _ in _ram_bank(b, "C", part, geom.c_depth, ACC_BITS):
                        b.net(f"c{part}_r{row}", ACC_BITS, (rid, "q"), [(acc, f"b.p{half}.r{row}")])
                        c_blocks.append(rid)
                b.net(f"c_wr_{tag}", ACC_BITS, (acc, "s"), [(rid, "d") for rid in c_blocks])

    # address distribution (optionally pipelined) and TB control
    by_buffer = defaultdict(list)
    for inst in b.instances:
        if inst.kind == "m20k":
            by_buffer[inst.params["buffer"]].append(inst.id)
    depths = {"A": geom.a_depth, "B": geom.b_depth, "C": geom.c_depth}
    for buf in ("A", "B", "C"):
        width = _addr_width(depths[buf])
        port = f"addr_{buf.lower()}"
        src = (ctrl, port)
        for s in range(addr_stages):
            reg = b.inst(f"preg_addr_{buf.lower()}_s{s}", "pipeline_reg", net=port, stage=s, width=width)
            b.net(f"{port}_s{s}", width, src, [(reg, "d")])
            src = (reg, "q")
        b.net(f"{port}_s{addr_stages}", width, src, [(rid, "addr") for rid in by_buffer[buf]])
    tbs = [i for i in b.instances if i.kind == "tensor_block"]
    b.net("bank_sel", 1, (ctrl, "bank_sel"), [(i.id, "bank_sel") for i in tbs if i.params["mode"] == "compute"])
    b.net("load_en", 1, (ctrl, "load_en"), [(i.id, "load_en") for i in tbs if i.params["mode"] == "load_port"])

    attributes = {
        "params": {"l_a": la, "e_k": ek_n, "e_n": en_n, "e_m": em_n},
        "native": {"m": native.m, "k": native.k, "n": native.n},
        "pipeline": {"addr_stages": addr_stages, "data_stages": data_stages},
    }
    return Netlist(design_name(params), b.instances, b.nets, attributes)


def expected_counts(params: TbParams, native: GemmDims, addr_stages: int, data_stages: int) -> dict:
    arrays = params.e_k * params.e_n * params.e_m
    lanes = ROWS_PER_TB * params.e_n * params.e_m
    b_part = (params.l_a - 1) * params.e_k * params.e_n
    return {
        "tensor_block": params.l_a * arrays,
        "load_port": arrays,
        "m20k": total_m20k(params, native),
        "soft_adder": (params.e_k - 1) * lanes + lanes,
        "pipeline_reg": data_stages * b_part + addr_stages * 3,
    }


def check(netlist: Netlist, params: TbParams, native: GemmDims) -> list[str]:
    """Structural violations of ``netlist``; empty when consistent."""
    problems = []
    pipe = netlist.attributes.get("pipeline", {})
    expected = expected_counts(params, native, pipe.get("addr_stages", 0), pipe.get("data_stages", 0))
    actual = Counter(inst.kind for inst in netlist.instances)
    actual["load_port"] = netlist.count("tensor_block", mode="load_port")
    for kind, want in expected.items():
        if actual[kind] != want:
            problems.append(f"count: {kind} is {actual[kind]}, expected {want}")

    ids = Counter(inst.id for inst in netlist.instances)
    problems += [f"instance: duplicate id {i}" for i, c in sorted(ids.items()) if c > 1]
    by_id = {inst.id: inst for inst in netlist.instances}
    for name, c in sorted(Counter(n.name for n in netlist.nets).items()):
        if c > 1:
            problems.append(f"net: duplicate name {name}")

    drivers = Counter(net.driver for net in netlist.nets)
    for ep, c in sorted(drivers.items()):
        if c > 1:
            problems.append(f"driver: {ep.inst}.{ep.port} drives {c} nets")
    sink_use = Counter(s for net in netlist.nets for s in net.sinks)
    for ep, c in sorted(sink_use.items()):
        if c > 1:
            problems.append(f"driver: {ep.inst}.{ep.port} has {c} drivers")
    for net in netlist.nets:
        for ep in [net.driver, *net.sinks]:
            if ep.inst not in by_id:
                problems.append(f"net {net.name}: unknown instance {ep.inst}")
        if not net.sinks:
            problems.append(f"net {net.name}: no sinks")

    problems += _check_chains(netlist, params)

    for inst in netlist.instances:
        if inst.kind != "m20k":
            continue
        width = M20K_CONFIGS.get(inst.params.get("config"))
        allowed = WIDTHS_FOR_WORD.get(inst.params.get("word_bits"), ())
        if width is None or width not in allowed:
            problems.append(
                f"config: {inst.id} uses {inst.params.get('config')} for a "
                f"{inst.params.get('word_bits')}-bit buffer"
            )
    return problems


def _check_chains(netlist: Netlist, params: TbParams) -> list[str]:
    """Each array's data cascade must run load port -> ... -> last TB."""
    nxt: dict[str, list[str]] = defaultdict(list)
    has_pred = set()
    for net in netlist.nets:
        if net.driver.port == "casc_data_out":
            for s in net.sinks:
                nxt[net.driver.inst].append(s.inst)
                has_pred.add(s.inst)
    problems = []
    for inst in netlist.instances:
        if inst.kind != "tensor_block" or inst.params.get("mode") != "load_port":
            continue
        length, cur, seen = 1, inst.id, {inst.id}
        while nxt.get(cur):
            if len(nxt[cur]) != 1:
                problems.append(f"chain: {cur} cascades into {len(nxt[cur])} TBs")
                break
            cur = nxt[cur][0]
            if cur in seen:
                problems.append(f"chain: cycle through {cur}")
                break
            seen.add(cur)
            length += 1
        if length != params.l_a:
            problems.append(f"chain: array at {inst.id} has length {length}, expected {params.l_a}")
    for inst in netlist.instances:
        if inst.kind == "tensor_block" and inst.params.get("mode") == "compute" and inst.id not in has_pred:
            problems.append(f"chain: {inst.id} has no cascade input")
    return problems


def emit(netlist: Netlist, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(netlist.to_dict(), indent=1, sort_keys=True) + "\n"
    if fmt == "hdl_text":
        return _emit_hdl(netlist)
    raise ValueError(f"unknown netlist format {fmt!r}")


def parse(text: str) -> Netlist:
    return Netlist.from_dict(json.loads(text))


def _hdl_value(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return '"' + ",".join(map(str, v)) + '"'
    return str(v)


def _emit_hdl(netlist: Netlist) -> str:
    conns: dict[str, list[tuple[str, str]]] = defaultdict(list)
    for net in netlist.nets:
        for ep in [net.driver, *net.sinks]:
            conns[ep.inst].append((ep.port.replace(".", "_"), net.name))
    lines = [f"module {netlist.name};"]
    for net in netlist.nets:
        rng = f" [{net.width - 1}:0]" if net.width > 1 else ""
        lines.append(f"  wire{rng} {net.name};")
    for inst in netlist.instances:
        params = ", ".join(f".{k}({_hdl_value(v)})" for k, v in sorted(inst.params.items()))
        head = f"  {inst.kind} #({params}) {inst.id}" if params else f"  {inst.kind} {inst.id}"
        ports = ", ".join(f".{p}({n})" for p, n in sorted(conns[inst.id]))
        lines.append(f"{head} ({ports});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def tensor_block_instances(hdl_text: str) -> int:
    """Count tensor-block instantiations in a rendered HDL text."""
    return sum(1 for line in hdl_text.splitlines() if line.lstrip().startswith("tensor_block "))


def load(path) -> Netlist:
    with open(path) as fh:
        return parse(fh.read())


def summary(netlist: Netlist) -> dict[str, int]:
    counts = Counter(inst.kind for inst in netlist.instances)
    return {kind: counts.get(kind, 0) for kind in KINDS} | {"nets": len(netlist.nets)}


__all__ = [
    "Endpoint",
    "Instance",
    "Net",
    "Netlist",
    "check",
    "design_name",
    "emit",
    "expected_counts",
    "generate",
    "parse",
    "summary",
    "tensor_block_instances",
]

