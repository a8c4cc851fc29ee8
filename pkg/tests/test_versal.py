import dataclasses
import itertools
from pathlib import Path
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gemmforge.core import ConstraintError, GemmDims, GemmForgeError, InfeasibleError
from gemmforge.versal import (
    MAPPINGS,
    AieSolution,
    Ram,
    aie_usage,
    bandwidth_requirement,
    bram_cost,
    buffer_geometry,
    check_design,
    emit_hls_directives,
    feasible_designs,
    load_design_points,
    make_design,
    mapping_label,
    mapping_resources,
    parse_mapping,
    ram_efficiency,
    scalability,
    solve_uvw,
    uram_cost,
)

GOLDEN = Path(__file__).parent / "golden"


# --- independent oracle: plain loops over a generous box -----------------

def _oracle_cost(depth, ram):
    if depth > 4096:
        return None
    if ram == "U":
        return 0, 2
    if depth <= 512:
        return 4, 0  # half-blocks
    if depth <= 1024:
        return 8, 0
    if depth <= 2048:
        return 15, 0
    return 30, 0


def oracle_optima(aie, bram_total, uram_total, box=64):
    best, winners = 0, set()
    parts = (2 * aie.x * aie.y, 2 * aie.y * aie.z, 2 * aie.x * aie.z)
    for u, v, w in itertools.product(range(1, box + 1), repeat=3):
        depths = (u * v * aie.m * aie.k / 16, v * w * aie.k * aie.n / 16, u * w * aie.m * aie.n / 4)
        for mapping in itertools.product("BU", repeat=3):
            halves = urams = 0
            ok = True
            for part, depth, ram in zip(parts, depths, mapping):
                cost = _oracle_cost(depth, ram)
                if cost is None:
                    ok = False
                    break
                halves += part * cost[0]
                urams += part * cost[1]
            if not ok or -(-halves // 2) > bram_total or urams > uram_total:
                continue
            prod = u * v * w
            if prod > best:
                best, winners = prod, set()
            if prod == best:
                winners.add((u, v, w, "".join(mapping)))
    return best, winners


def _key(d):
    return (d.u, d.v, d.w, "".join(r.letter for r in d.mapping))


# --- RAM cost model ------------------------------------------------------

@pytest.mark.parametrize(
    "depth, cost",
    [(1, 2), (512, 2), (513, 4), (1024, 4), (1025, Fraction(15, 2)), (2048, Fraction(15, 2)), (2049, 15), (4096, 15)],
)
def test_bram_cost_steps(depth, cost):
    assert bram_cost(depth) == cost


@pytest.mark.parametrize("fn", [bram_cost, uram_cost])
def test_depth_cap(fn):
    with pytest.raises(ConstraintError, match="4096"):
        fn(4097)
    with pytest.raises(ConstraintError):
        fn(0)


def test_geometry_2x2x8(p1):
    g = buffer_geometry(p1, 2, 2, 8)
    assert g.parts == (104, 48, 156)
    assert g.depths == (1024, 4096, 4096)


def test_kernel_divisibility_enforced():
    with pytest.raises(ConstraintError, match="multiples of 16"):
        AieSolution("odd", 1, 1, 1, 4, 2, 4)


@pytest.mark.parametrize(
    "aie, uvw, mapping, expected",
    [
        ("P1", (4, 2, 4), "BUU", (780, 408)),
        ("P2", (4, 2, 4), "BBU", (900, 400)),
        ("P1", (2, 2, 8), "BUU", (416, 408)),
        ("P2", (2, 8, 2), "UUB", (800, 240)),
    ],
)
def test_mapping_resources_model_rows(solutions, aie, uvw, mapping, expected):
    g = buffer_geometry(solutions[aie], *uvw)
    assert mapping_resources(g, parse_mapping(mapping)) == expected


def test_bram_costs_summed_exactly(p1):
    # 2x4x4 puts A and C at depth 2048, 7.5 blocks per partition
    g = buffer_geometry(p1, 2, 4, 4)
    assert g.depths == (2048, 4096, 2048)
    assert mapping_resources(g, parse_mapping("BUB")) == ((104 + 156) * 15 // 2, 96)


def test_parse_mapping_forms():
    assert parse_mapping("{B, U, U}") == (Ram.BRAM, Ram.URAM, Ram.URAM)
    assert mapping_label(parse_mapping("uub")) == "{U, U, B}"
    with pytest.raises(ValueError):
        parse_mapping("BU")


# --- solver --------------------------------------------------------------

def test_solver_matches_brute_force_p1(p1, vc1902):
    best, winners = oracle_optima(p1, vc1902.bram36_total, vc1902.uram_total)
    top = [d for d in feasible_designs(p1, vc1902) if d.product == best]
    assert best == 32
    assert {_key(d) for d in top} == winners
    assert (2, 2, 8, "BUU") in winners


def test_solver_matches_brute_force_p2(p2, vc1902):
    best, winners = oracle_optima(p2, vc1902.bram36_total, vc1902.uram_total)
    top = [d for d in feasible_designs(p2, vc1902) if d.product == best]
    assert {_key(d) for d in top} == winners
    assert {(u, v, w) for u, v, w, _ in winners} == {(2, 8, 2), (4, 2, 4)}


def test_solve_uvw_ranking(p1, vc1902):
    designs = solve_uvw(p1, vc1902, top_k=5)
    assert len(designs) == 5
    assert designs[0].product == 32
    assert [d.product for d in designs] == sorted((d.product for d in designs), reverse=True)
    # ties break on V, then U, then W
    assert _key(designs[0]) == (2, 8, 2, "UUB")
    for d in designs:
        assert check_design(d, vc1902) == []


def test_solver_infeasible_names_constraint(p1, vc1902):
    tiny = dataclasses.replace(vc1902, bram36_total=1, uram_total=0)
    with pytest.raises(InfeasibleError) as err:
        solve_uvw(p1, tiny)
    assert err.value.constraint == "bram+uram"


def test_solver_rejects_bad_top(p1, vc1902):
    with pytest.raises(ValueError):
        solve_uvw(p1, vc1902, top_k=0)


def _swap(aie):
    return AieSolution(aie.placement + "s", aie.z, aie.y, aie.x, aie.n, aie.k, aie.m)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.sampled_from(MAPPINGS))
def test_swapping_m_and_n_is_symmetric(u, v, w, mapping):
    aie = AieSolution("P1", 13, 4, 6, 32, 128, 32)
    try:
        cost = mapping_resources(buffer_geometry(aie, u, v, w), mapping)
    except ConstraintError:
        with pytest.raises(ConstraintError):
            mapping_resources(buffer_geometry(_swap(aie), w, v, u), (mapping[1], mapping[0], mapping[2]))
        return
    swapped = mapping_resources(buffer_geometry(_swap(aie), w, v, u), (mapping[1], mapping[0], mapping[2]))
    assert swapped == cost


@settings(max_examples=25, deadline=None)
@given(st.integers(200, 1200), st.integers(100, 600), st.integers(0, 300), st.integers(0, 200))
def test_more_resources_never_shrink_the_optimum(bram, uram, extra_bram, extra_uram):
    from gemmforge.core import VersalDevice

    aie = AieSolution("P2", 10, 3, 10, 32, 128, 32)
    small = VersalDevice("s", bram, uram, 400, 39, 1.25e9, (2.75e8, 3e8), 1.0, 1.0)
    big = dataclasses.replace(small, bram36_total=bram + extra_bram, uram_total=uram + extra_uram)

    def best(dev):
        try:
            return solve_uvw(aie, dev, top_k=1)[0].product
        except InfeasibleError:
            return 0

    assert best(big) >= best(small)


# --- metrics -------------------------------------------------------------

def test_ram_efficiency_values(p1):
    assert round(ram_efficiency(make_design(p1, 2, 2, 8, parse_mapping("BUU"))), 3) == 0.889
    assert round(ram_efficiency(make_design(p1, 3, 2, 5, parse_mapping("BUU"))), 3) == 0.757


@pytest.mark.parametrize(
    "native, tops, expected",
    [((832, 1024, 1536), 76.93, 101.4), ((1280, 768, 1280), 75.40, 100.6)],
)
def test_bandwidth_requirement(native, tops, expected):
    assert bandwidth_requirement(GemmDims(*native), tops) == pytest.approx(expected, abs=0.1)


def test_bandwidth_rejects_zero():
    with pytest.raises(ValueError):
        bandwidth_requirement(GemmDims(1, 1, 1), 0)


def test_aie_usage(p1, p2):
    u1, u2 = aie_usage(p1), aie_usage(p2)
    assert (u1.matmul_cores, u1.add_cores, u1.total_cores) == (312, 78, 390)
    assert u2.total_cores == 400
    assert (u1.plio_in_a, u1.plio_in_b, u1.plio_out) == (52, 24, 78)


def test_aie_usage_without_reduction():
    assert aie_usage(AieSolution("flat", 4, 1, 4, 32, 32, 32)).add_cores == 0


def test_calibration_lookup(p1):
    assert p1.throughput_at(290e6) == 76.93
    with pytest.raises(GemmForgeError, match="no calibration point"):
        p1.throughput_at(285e6)


def test_design_points_load(solutions, vc1902):
    name, points = load_design_points(solutions)
    assert name == "VC1902" and len(points) == 10
    for p in points:
        assert check_design(p.design, vc1902) == []


# --- scalability ---------------------------------------------------------

def test_scalability_2x2x8_trend(p1):
    peak = 76.93
    compute = p1.compute_dims
    fractions = [scalability(peak, compute, s) / peak for s in (512, 1024, 2048, 4096)]
    assert fractions == pytest.approx([64 / 117, 256 / 351, 2048 / 2145, 2048 / 2145])
    assert fractions == sorted(fractions)


@given(st.integers(1, 20000))
def test_scalability_bounded_by_peak(s):
    compute = GemmDims(416, 512, 192)
    assert scalability(76.93, compute, s) <= 76.93


def test_scalability_at_aligned_size():
    assert scalability(76.93, GemmDims(416, 512, 192), 19968) == pytest.approx(76.93)


# --- directive emission --------------------------------------------------

def test_hls_directives_golden(p1):
    text = emit_hls_directives(make_design(p1, 2, 2, 8, parse_mapping("BUU")))
    assert text == (GOLDEN / "versal_2x2x8_P1_BUU.hls").read_text()


# --- worked examples -----------------------------------------------------

def test_unit_tiling_geometry(p1):
    g = buffer_geometry(p1, 1, 1, 1)
    assert g.depths == (256, 256, 256)


def test_geometry_p2_2x8x2(p2):
    g = buffer_geometry(p2, 2, 8, 2)
    assert (g.a_part, g.a_depth, g.b_part, g.b_depth, g.c_part, g.c_depth) == (60, 4096, 60, 4096, 200, 1024)


def test_uram_cost_cap():
    assert uram_cost(4096) == 2
    with pytest.raises(ConstraintError):
        uram_cost(5000)


def test_p2_4x2x4_bbu_is_feasible(p2, vc1902):
    hits = [
        (d.brams_used, d.urams_used)
        for d in feasible_designs(p2, vc1902)
        if (d.u, d.v, d.w) == (4, 2, 4) and d.mapping == parse_mapping("BBU")
    ]
    assert hits == [(900, 400)]


def test_no_uram_shrinks_p1(p1, vc1902):
    device = dataclasses.replace(vc1902, uram_total=0)
    try:
        best = solve_uvw(p1, device, top_k=1)[0]
    except InfeasibleError:
        return
    assert best.product < 32
    assert best.urams_used == 0


@given(st.floats(0.5, 200))
def test_bandwidth_linear_in_throughput(tops):
    native = GemmDims(64, 64, 64)
    assert bandwidth_requirement(native, 2 * tops) == pytest.approx(2 * bandwidth_requirement(native, tops))


def test_aie_usage_p2_and_unit(p2):
    u = aie_usage(p2)
    assert (u.matmul_cores, u.add_cores, u.total_cores, u.plio_in_a, u.plio_in_b, u.plio_out) == (
        300, 100, 400, 30, 30, 100)
    one = aie_usage(AieSolution("one", 1, 1, 1, 32, 32, 32))
    assert (one.matmul_cores, one.add_cores, one.total_cores, one.plio_in_a, one.plio_in_b, one.plio_out) == (
        1, 0, 1, 1, 1, 1)


def test_scalability_at_512(p1):
    assert scalability(76.93, p1.compute_dims, 512) == pytest.approx(42.1, abs=0.05)


def test_hls_directives_p2_bbu(p2):
    text = emit_hls_directives(make_design(p2, 4, 2, 4, parse_mapping("BBU")))
    assert "variable=A_buf type=ram_1p impl=bram" in text
    assert "variable=B_buf type=ram_1p impl=bram" in text
    assert "variable=C_buf type=ram_s2p impl=uram" in text


def test_bandwidth_4x2x4_p1_recomputed(p1):
    # published row reads 101.9; TOPs and native size give 102.9
    native = make_design(p1, 4, 2, 4, parse_mapping("BUU")).native_dims
    assert round(bandwidth_requirement(native, 76.72), 1) == 102.9
