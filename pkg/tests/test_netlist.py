from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemmforge import netlist as nl
from gemmforge.core import ConstraintError, GemmDims
from gemmforge.stratix import TbParams, compute_dims, tb_usage, total_m20k

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def golden_netlist():
    return nl.generate(TbParams(2, 1, 1, 1), GemmDims(3, 10, 6))


def test_golden_hdl(golden_netlist):
    assert nl.emit(golden_netlist, "hdl_text") == (GOLDEN / "tb_2x1x1x1.v").read_text()


def test_golden_json(golden_netlist):
    assert nl.emit(golden_netlist, "json") == (GOLDEN / "tb_2x1x1x1.netlist.json").read_text()


def test_json_round_trip(golden_netlist):
    text = nl.emit(golden_netlist, "json")
    back = nl.parse(text)
    assert back == golden_netlist
    assert nl.emit(back, "json") == text


def test_full_scale_design(nx2100):
    params, native = TbParams(18, 16, 4, 3), GemmDims(639, 2720, 1008)
    n = nl.generate(params, native)
    assert n.name == "tb_18x16x4x3"
    assert n.count("tensor_block") == 3456
    assert n.count("tensor_block", mode="load_port") == 192
    assert n.count("m20k") == total_m20k(params, native)
    assert nl.tensor_block_instances(nl.emit(n, "hdl_text")) == tb_usage(params, nx2100).tbs_used
    assert nl.check(n, params, native) == []


def test_single_array_per_group_has_no_tree():
    params, native = TbParams(4, 1, 2, 3), GemmDims(9, 30, 24)
    n = nl.generate(params, native)
    adders = [i for i in n.instances if i.kind == "soft_adder"]
    assert len(adders) == 3 * 2 * 3
    assert all(i.params.get("role") == "accumulate" for i in adders)


def test_tree_adders_counted():
    params, native = TbParams(3, 5, 1, 2), GemmDims(6, 100, 9)
    n = nl.generate(params, native)
    tree = [i for i in n.instances if i.kind == "soft_adder" and "role" not in i.params]
    assert len(tree) == (5 - 1) * 3 * 1 * 2


def test_pipeline_registers():
    params, native = TbParams(3, 2, 2, 1), GemmDims(3, 40, 18)
    n = nl.generate(params, native, addr_stages=2, data_stages=3)
    b_part = 2 * 2 * 2
    assert n.count("pipeline_reg") == 3 * b_part + 2 * 3
    assert n.count("pipeline_reg", net="b_data") == 3 * b_part
    assert nl.check(n, params, native) == []


def test_generate_propagates_constraints():
    with pytest.raises(ConstraintError):
        nl.generate(TbParams(4, 1, 1, 1), GemmDims(3, 30, 11))
    with pytest.raises(ValueError):
        nl.generate(TbParams(2, 1, 1, 1), GemmDims(3, 10, 6), addr_stages=-1)


def test_removed_cascade_net_is_reported(golden_netlist):
    broken = nl.parse(nl.emit(golden_netlist, "json"))
    broken.nets = [n for n in broken.nets if not n.name.startswith("casc_data")]
    problems = nl.check(broken, TbParams(2, 1, 1, 1), GemmDims(3, 10, 6))
    assert any(p.startswith("chain:") for p in problems)


def test_wrong_m20k_config_is_reported(golden_netlist):
    broken = nl.parse(nl.emit(golden_netlist, "json"))
    ram = next(i for i in broken.instances if i.kind == "m20k" and i.params["buffer"] == "A")
    ram.params["config"] = "512x32"
    problems = nl.check(broken, TbParams(2, 1, 1, 1), GemmDims(3, 10, 6))
    assert any(p.startswith("config:") and ram.id in p for p in problems)


def test_second_driver_is_reported(golden_netlist):
    broken = nl.parse(nl.emit(golden_netlist, "json"))
    dup = broken.nets[0]
    broken.nets.append(nl.Net("extra", dup.width, nl.Endpoint("ctrl", "bank_sel"), list(dup.sinks)))
    problems = nl.check(broken, TbParams(2, 1, 1, 1), GemmDims(3, 10, 6))
    assert any(p.startswith("driver:") for p in problems)


def test_missing_instance_changes_counts(golden_netlist):
    broken = nl.parse(nl.emit(golden_netlist, "json"))
    broken.instances = [i for i in broken.instances if i.kind != "soft_adder"]
    problems = nl.check(broken, TbParams(2, 1, 1, 1), GemmDims(3, 10, 6))
    assert "count: soft_adder is 0, expected 3" in problems


def test_unknown_format(golden_netlist):
    with pytest.raises(ValueError):
        nl.emit(golden_netlist, "vhdl")


@st.composite
def design(draw):
    p = TbParams(
        draw(st.sampled_from([2, 3, 4, 6, 9])),
        draw(st.integers(1, 4)),
        draw(st.integers(1, 3)),
        draw(st.integers(1, 3)),
    )
    cd = compute_dims(p)
    native = GemmDims(
        cd.d_m * draw(st.integers(1, 40)),
        cd.d_k * draw(st.integers(1, 4)),
        p.n_min * draw(st.integers(1, 30)),
    )
    return p, native, draw(st.integers(0, 2)), draw(st.integers(0, 2))


@settings(max_examples=25, deadline=None)
@given(design())
def test_generated_netlists_are_consistent(nx2100, case):
    params, native, addr, data = case
    n = nl.generate(params, native, addr, data)
    assert nl.check(n, params, native) == []
    assert n.count("tensor_block") == tb_usage(params, nx2100).tbs_used
    assert n.count("m20k") == total_m20k(params, native)
    text = nl.emit(n, "json")
    assert nl.emit(nl.parse(text), "json") == text
