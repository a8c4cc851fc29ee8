"""Cycle-level functional simulator of the tensor-block GEMM array.

The model is clocked: every cycle each structure computes its next state
from the current registers, then all registers update together.

Per array (``l_a`` TBs, position 0 is the loading port):

* loading: A words (10 int8 each) enter the load port one per cycle and
  shift through a chain of ``3*l_a`` register slots, farthest TB first.
  After ``3*l_a`` shifts the chain is committed into the idle bank of every
  compute TB.
* compute TB at position ``p`` works on column ``q`` of tile ``t`` two cycles
  after position ``p-1``. Stage 1 computes the three 10-element dot products
  and latches the cascade input, stage 2 adds them onto the cascade.
* the arrays of a reduction group feed a registered adder tree, whose result
  is accumulated into C by a read-modify-write stage.

Loading of tile ``t+1`` starts with the first column of tile ``t``, so
streaming only stalls-free when ``N/e_n >= 3*l_a``; shorter N is rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ConstraintError, GemmDims, GemmForgeError
from .stratix import DOT_LEN, ROWS_PER_TB, TbParams, adder_tree_depth, check_native, compute_dims

MAX_WORK = 2**32


class SimulationError(GemmForgeError):
    """Internal hazard detected while simulating (should never fire)."""


def wrap_int32(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return ((x + 2**31) % 2**32 - 2**31).astype(np.int32)


def reference_gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int8 x int8 GEMM with two's-complement 32-bit accumulation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConstraintError(f"shape mismatch: {a.shape} @ {b.shape}")
    return wrap_int32(a.astype(np.int64) @ b.astype(np.int64))


@dataclass(frozen=True)
class TraceEvent:
    cycle: int
    event: str
    data: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"cycle": self.cycle, "event": self.event, **self.data}, sort_keys=True)


@dataclass(frozen=True)
class TbState:
    """Register contents of one tensor block.

    Load ports hold no operand banks and never compute.
    """

    bank0: Optional[np.ndarray]  # 3 x 10 int8
    bank1: Optional[np.ndarray]
    active_bank: Optional[int]
    role: str
    position: tuple[int, int, int, int]  # (e_m, e_n, e_k, index within array)


@dataclass
class SimResult:
    c: np.ndarray
    cycles: int
    trace: Optional[list[TraceEvent]] = None


class TbArraySim:
    """State of the whole TB layout; arrays are indexed (e_m, e_n, e_k)."""

    def __init__(self, params: TbParams, a: np.ndarray, b: np.ndarray, trace: bool = False):
        self.params = params
        self.a = a
        self.b = b
        m, k = a.shape
        n = b.shape[1]
        cd = compute_dims(params)
        self.cd = cd
        self.P = params.l_a - 1  # compute TBs per array
        self.k_tiles = k // cd.d_k
        self.tiles = (m // cd.d_m) * self.k_tiles
        self.t_n = n // params.e_n
        self.t_load = ROWS_PER_TB * params.l_a
        self.levels = adder_tree_depth(params.e_k)
        self.c = np.zeros((m, n), dtype=np.int32)
        self.trace: Optional[list[TraceEvent]] = [] if trace else None

        em, en, ek, P = params.e_m, params.e_n, params.e_k, self.P
        self.shape = (em, en, ek)
        self.bank = np.zeros((em, en, ek, P, 2, ROWS_PER_TB, DOT_LEN), dtype=np.int8)
        self.active = np.zeros(P, dtype=np.int8)  # same across arrays
        self.chain = np.zeros((em, en, ek, ROWS_PER_TB * params.l_a, DOT_LEN), dtype=np.int8)
        # stage-1 registers: dot products and latched cascade input
        self.dot_reg = np.zeros((em, en, ek, P, ROWS_PER_TB), dtype=np.int32)
        self.cin_reg = np.zeros((em, en, ek, P, ROWS_PER_TB), dtype=np.int32)
        self.s1_tag: list[Optional[tuple[int, int]]] = [None] * P
        # stage-2 registers: casc_accum_out
        self.acc_out = np.zeros((em, en, ek, P, ROWS_PER_TB), dtype=np.int32)
        self.s2_tag: list[Optional[tuple[int, int]]] = [None] * P
        self.tree: list[tuple[Optional[tuple[int, int]], Optional[np.ndarray]]] = [(None, None)] * self.levels
        self.loads: list[tuple[int, int]] = []  # (start cycle, tile)
        self._words = None
        self.writes = 0
        self.last_write = -1

        self._em = np.arange(em)
        self._en = np.arange(en)
        self._ek = np.arange(ek)
        self._pos = np.arange(P)

    # --- helpers -------------------------------------------------------
    def _tile_origin(self, tile: int) -> tuple[int, int]:
        mi, ki = divmod(tile, self.k_tiles)
        return mi * self.cd.d_m, ki * self.cd.d_k

    def stream_start(self, tile: int) -> int:
        return self.t_load + tile * self.t_n

    def _load_words(self, tile: int) -> np.ndarray:
        """Load-port word sequence, shape (3*(l_a-1), em, en, ek, 10)."""
        row0, k0 = self._tile_origin(tile)
        P = self.P
        words = np.zeros((ROWS_PER_TB * P,) + self.shape + (DOT_LEN,), dtype=np.int8)
        idx = 0
        for pos in range(P, 0, -1):
            for reg in range(ROWS_PER_TB - 1, -1, -1):
                rows = row0 + ROWS_PER_TB * self._em + reg  # (em,)
                kk = k0 + self._ek[:, None] * P * DOT_LEN + (pos - 1) * DOT_LEN + np.arange(DOT_LEN)
                blk = self.a[rows[:, None, None], kk[None, :, :]]  # (em, ek, 10)
                words[idx] = blk[:, None, :, :]  # broadcast across e_n
                idx += 1
        return words

    def _emit(self, cycle, event, **data):
        if self.trace is not None:
            self.trace.append(TraceEvent(cycle, event, data))

    # --- one clock -----------------------------------------------------
    def step(self, cycle: int) -> None:
        P = self.P
        chain_len = ROWS_PER_TB * self.params.l_a

        # tile t+1 starts loading together with the first column of tile t
        if cycle == 0 and self.tiles:
            self.loads.append((0, 0))
        elif cycle >= self.t_load and (cycle - self.t_load) % self.t_n == 0:
            nxt = (cycle - self.t_load) // self.t_n + 1
            if nxt < self.tiles:
                self.loads.append((cycle, nxt))

        # load chain: one word per cycle, committed at the end of the cycle
        commit = None
        for start, tile in self.loads:
            rel = cycle - start
            if rel == 0:
                self._words = self._load_words(tile)
                self._emit(cycle, "load_start", tile=tile)
            self.chain[..., 1:, :] = self.chain[..., :-1, :]
            self.chain[..., 0, :] = self._words[rel] if rel < len(self._words) else 0
            if rel == chain_len - 1:
                commit = (start, tile)
        if commit is not None:
            self.loads.remove(commit)

        # stage 2: casc_accum_out = dot + casc_accum_in (registered)
        new_acc = wrap_int32(self.dot_reg.astype(np.int64) + self.cin_reg)
        new_s2_tag = list(self.s1_tag)

        # stage 1: dot products against the active bank, latch the cascade
        u = cycle - self.t_load - 2 * self._pos
        valid = (u >= 0) & (u < self.tiles * self.t_n)
        new_s1_tag: list[Optional[tuple[int, int]]] = [None] * P
        new_dot = np.zeros_like(self.dot_reg)
        new_cin = np.zeros_like(self.cin_reg)
        if valid.any():
            uu = np.where(valid, u, 0)
            tile = uu // self.t_n
            q = uu % self.t_n
            self.active[valid] = tile[valid] % 2
            for j in np.flatnonzero(valid & (q == 0)):
                self._emit(cycle, "bank_switch", position=int(j) + 1, tile=int(tile[j]), bank=int(tile[j] % 2))
            ki = tile % self.k_tiles
            kk = (
                ki[None, :, None] * self.cd.d_k
                + self._ek[:, None, None] * P * DOT_LEN
                + self._pos[None, :, None] * DOT_LEN
                + np.arange(DOT_LEN)[None, None, :]
            )  # (ek, P, 10)
            cols = self._en[:, None] * self.t_n + q[None, :]  # (en, P)
            data_in = self.b[kk[None, :, :, :], cols[:, None, :, None]].astype(np.int32)  # (en, ek, P, 10)
            regs = self.bank[:, :, :, self._pos, tile % 2].astype(np.int32)  # (em, en, ek, P, 3, 10)
            dots = np.einsum("mekprd,ekpd->mekpr", regs, data_in)
            mask = valid[None, None, None, :, None]
            new_dot = np.where(mask, dots, 0).astype(np.int32)
            cin = np.zeros_like(self.acc_out)
            cin[..., 1:, :] = self.acc_out[..., :-1, :]
            new_cin = np.where(mask, cin, 0).astype(np.int32)
            for j in np.flatnonzero(valid):
                new_s1_tag[j] = (int(tile[j]), int(q[j]))

        # array outputs -> registered adder tree -> C read-modify-write
        out_tag = self.s2_tag[P - 1]
        out_val = self.acc_out[..., P - 1, :]
        if out_tag is not None:
            self._emit(cycle, "array_out", tile=out_tag[0], col=out_tag[1], values=out_val.tolist())
        stages = [(out_tag, out_val)] + self.tree
        new_tree = [(tag, _pairwise_sum(val)) if tag is not None else (None, None) for tag, val in stages[:-1]]
        last_tag, last_val = stages[-1]
        if last_tag is not None:
            self._accumulate(cycle, last_tag, last_val)

        self.dot_reg, self.cin_reg, self.s1_tag = new_dot, new_cin, new_s1_tag
        self.acc_out, self.s2_tag = new_acc, new_s2_tag
        self.tree = new_tree

        if commit is not None:
            tile = commit[1]
            bank = tile % 2
            if tile >= 2:
                # last read of this bank (tile - 2) by the final compute TB
                last_read = self.stream_start(tile - 1) + 2 * (P - 1) - 1
                if cycle < last_read:
                    raise SimulationError(f"load of tile {tile} clobbers bank {bank} while in use")
            if cycle >= self.stream_start(tile):
                raise SimulationError(f"tile {tile} not loaded before streaming")
            slots = self.chain[..., ROWS_PER_TB:, :].reshape(self.shape + (P, ROWS_PER_TB, DOT_LEN))
            self.bank[..., bank, :, :] = slots
            self._emit(cycle, "load_commit", tile=tile, bank=bank)

    def _accumulate(self, cycle: int, tag: tuple[int, int], val: np.ndarray) -> None:
        tile, q = tag
        row0, _ = self._tile_origin(tile)
        # val: (em, en, 1, 3)
        rows = row0 + ROWS_PER_TB * self._em[:, None] + np.arange(ROWS_PER_TB)[None, :]  # (em, 3)
        cols = self._en * self.t_n + q  # (en,)
        r = rows[:, None, :]
        c = cols[None, :, None]
        cur = self.c[r, c].astype(np.int64)
        self.c[r, c] = wrap_int32(cur + val[:, :, 0, :])
        self.writes += 1
        self.last_write = cycle
        self._emit(cycle, "c_write", tile=tile, col=q)

    def tb_state(self, em: int, en: int, ek: int, position: int) -> "TbState":
        """Snapshot of one TB; ``position`` 0 is the array's load port."""
        if position == 0:
            return TbState(None, None, None, "load_port", (em, en, ek, 0))
        banks = self.bank[em, en, ek, position - 1]
        return TbState(
            banks[0].copy(), banks[1].copy(), int(self.active[position - 1]), "compute", (em, en, ek, position)
        )

    def busy(self) -> bool:
        return (
            bool(self.loads)
            or any(t is not None for t in self.s1_tag)
            or any(t is not None for t in self.s2_tag)
            or any(t is not None for t, _ in self.tree)
        )


def _pairwise_sum(val: np.ndarray) -> np.ndarray:
    """One registered adder-tree level over the e_k axis (axis 2)."""
    ek = val.shape[2]
    pairs = ek // 2
    summed = wrap_int32(val[:, :, 0 : 2 * pairs : 2, :].astype(np.int64) + val[:, :, 1 : 2 * pairs : 2, :])
    if ek % 2:
        summed = np.concatenate([summed, val[:, :, -1:, :]], axis=2)
    return summed


def simulate(params: TbParams, a, b, trace: bool = False) -> SimResult:
    """Run an int8 GEMM through the TB array model, cycle by cycle."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConstraintError(f"shape mismatch: {a.shape} @ {b.shape}")
    for name, arr in (("A", a), ("B", b)):
        if arr.size and (arr.min() < -128 or arr.max() > 127):
            raise ConstraintError(f"{name} has values outside int8")
    dims = GemmDims(a.shape[0], a.shape[1], b.shape[1])
    check_native(params, dims)
    if dims.volume > MAX_WORK:
        raise ConstraintError(f"{dims} exceeds the simulator limit of 2^32 multiply-accumulates")

    sim = TbArraySim(params, a.astype(np.int8), b.astype(np.int8), trace)
    expected_writes = sim.tiles * sim.t_n
    limit = sim.t_load + sim.tiles * sim.t_n + 4 * params.l_a + sim.levels + 8
    cycle = 0
    while sim.writes < expected_writes or sim.busy():
        if cycle > limit:
            raise SimulationError("simulation did not drain")
        sim.step(cycle)
        cycle += 1
    return SimResult(c=sim.c, cycles=sim.last_write + 1, trace=sim.trace)


def write_trace(events: list[TraceEvent], path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_matrix(path, rows: int, cols: int, dtype=np.int8) -> np.ndarray:
    """Read a raw row-major binary matrix."""
    data = np.fromfile(path, dtype=dtype)
    if data.size != rows * cols:
        raise ConstraintError(f"{path}: expected {rows * cols} values of {np.dtype(dtype).name}, found {data.size}")
    return data.reshape(rows, cols)


def write_matrix(path, matrix: np.ndarray) -> None:
    np.ascontiguousarray(matrix).tofile(path)
