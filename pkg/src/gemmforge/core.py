"""Device catalogs, workload shapes and shared error types."""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

GIB = 2**30
CATALOG_ENV = "GEMMFORGE_CATALOG"


class GemmForgeError(Exception):
    """Base class for domain errors raised by the toolkit."""


class CatalogError(GemmForgeError):
    """A catalog file is missing, malformed, or violates an invariant."""


class ConstraintError(GemmForgeError, ValueError):
    """Inputs violate a structural constraint of the accelerator model."""


class InfeasibleError(GemmForgeError):
    """No design satisfies the resource constraints.

    ``constraint`` names the constraint that binds (e.g. ``"m20k"``,
    ``"depth_cap"``, ``"bram+uram"``).
    """

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        self.detail = detail
        msg = f"infeasible: {constraint}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


@dataclass(frozen=True)
class GemmDims:
    """C = A @ B with A of shape m x k and B of shape k x n."""

    m: int
    k: int
    n: int

    def __post_init__(self):
        for name in ("m", "k", "n"):
            if getattr(self, name) < 1:
                raise ConstraintError(f"GEMM dimension {name} must be >= 1, got {getattr(self, name)}")

    @property
    def volume(self) -> int:
        return self.m * self.k * self.n

    @property
    def ops(self) -> int:
        return 2 * self.m * self.k * self.n

    @property
    def io_bytes(self) -> int:
        """Bytes moved for one pass over A, B and C, all as int8."""
        return self.m * self.k + self.k * self.n + self.m * self.n

    def __str__(self) -> str:
        return f"{self.m}x{self.k}x{self.n}"

    @classmethod
    def parse(cls, text: str) -> "GemmDims":
        parts = re.split(r"[xX×]", text.strip())
        if len(parts) != 3:
            raise ValueError(f"expected MxKxN, got {text!r}")
        return cls(*(int(p) for p in parts))


@dataclass(frozen=True)
class VersalDevice:
    name: str
    bram36_total: int
    uram_total: int
    aie_cores: int
    aie_pl_tiles: int
    aie_freq: float  # Hz
    pl_freq_range: tuple[float, float]  # Hz
    peak_tops_int8: float
    dram_bw: float  # bytes/s


@dataclass(frozen=True)
class StratixDevice:
    name: str
    m20k_total: int
    tb_total: int
    peak_tops_int8: float
    dram_bw: float  # bytes/s


@dataclass(frozen=True)
class DeviceCatalog:
    versal_devices: tuple[VersalDevice, ...] = ()
    stratix_devices: tuple[StratixDevice, ...] = ()

    def versal(self, name: str) -> VersalDevice:
        for dev in self.versal_devices:
            if dev.name == name:
                return dev
        raise CatalogError(f"unknown Versal device {name!r}")

    def stratix(self, name: str) -> StratixDevice:
        for dev in self.stratix_devices:
            if dev.name == name:
                return dev
        raise CatalogError(f"unknown Stratix device {name!r}")

    def to_dict(self) -> dict:
        def enc(dev):
            d = asdict(dev)
            if "pl_freq_range" in d:
                d["pl_freq_range"] = list(d["pl_freq_range"])
            return d

        return {
            "versal_devices": [enc(d) for d in self.versal_devices],
            "stratix_devices": [enc(d) for d in self.stratix_devices],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


_VERSAL_COUNTS = ("bram36_total", "uram_total", "aie_cores", "aie_pl_tiles")
_VERSAL_POSITIVE = ("aie_freq", "peak_tops_int8", "dram_bw")
_STRATIX_COUNTS = ("m20k_total", "tb_total")
_STRATIX_POSITIVE = ("peak_tops_int8", "dram_bw")


def _field(obj: dict, path: str, key: str):
    if key not in obj:
        raise CatalogError(f"{path}.{key}: missing field")
    return obj[key]


def _count(obj: dict, path: str, key: str) -> int:
    val = _field(obj, path, key)
    if isinstance(val, bool) or not isinstance(val, int):
        raise CatalogError(f"{path}.{key}: expected integer, got {val!r}")
    if val < 1:
        raise CatalogError(f"{path}.{key}: must be >= 1, got {val}")
    return val


def _positive(obj: dict, path: str, key: str) -> float:
    val = _field(obj, path, key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise CatalogError(f"{path}.{key}: expected number, got {val!r}")
    if val <= 0:
        raise CatalogError(f"{path}.{key}: must be > 0, got {val}")
    return float(val)


def _name(obj: dict, path: str, seen: set) -> str:
    name = _field(obj, path, "name")
    if not isinstance(name, str) or not name:
        raise CatalogError(f"{path}.name: expected non-empty string")
    if name in seen:
        raise CatalogError(f"{path}.name: duplicate device name {name!r}")
    seen.add(name)
    return name


def parse_catalog(doc: dict) -> DeviceCatalog:
    """Validate a decoded catalog document and build a :class:`DeviceCatalog`."""
    if not isinstance(doc, dict):
        raise CatalogError("catalog: top level must be an object")
    seen: set[str] = set()
    versal = []
    for i, obj in enumerate(doc.get("versal_devices", [])):
        path = f"versal_devices[{i}]"
        name = _name(obj, path, seen)
        counts = {k: _count(obj, path, k) for k in _VERSAL_COUNTS}
        nums = {k: _positive(obj, path, k) for k in _VERSAL_POSITIVE}
        rng = _field(obj, path, "pl_freq_range")
        if not (isinstance(rng, list) and len(rng) == 2 and 0 < rng[0] <= rng[1]):
            raise CatalogError(f"{path}.pl_freq_range: expected [low, high] in Hz, got {rng!r}")
        versal.append(VersalDevice(name=name, pl_freq_range=(float(rng[0]), float(rng[1])), **counts, **nums))
    stratix = []
    for i, obj in enumerate(doc.get("stratix_devices", [])):
        path = f"stratix_devices[{i}]"
        name = _name(obj, path, seen)
        counts = {k: _count(obj, path, k) for k in _STRATIX_COUNTS}
        if counts["tb_total"] < 36 or counts["tb_total"] % 36:
            raise CatalogError(f"{path}.tb_total: must be a positive multiple of 36, got {counts['tb_total']}")
        nums = {k: _positive(obj, path, k) for k in _STRATIX_POSITIVE}
        stratix.append(StratixDevice(name=name, **counts, **nums))
    return DeviceCatalog(tuple(versal), tuple(stratix))


def default_catalog_path() -> Path:
    env = os.environ.get(CATALOG_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("gemmforge") / "data" / "catalog.json"))


def load_device_catalog(path: str | os.PathLike | None = None) -> DeviceCatalog:
    """Load and validate a device catalog (the bundled one when ``path`` is None)."""
    path = Path(path) if path is not None else default_catalog_path()
    if not path.is_file():
        raise CatalogError(f"catalog file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: parse error: {exc}") from exc
    return parse_catalog(doc)


def data_path(name: str) -> Path:
    """Path of a file bundled under ``gemmforge/data``."""
    return Path(str(resources.files("gemmforge") / "data" / name))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def round_up(x: int, multiple: int) -> int:
    return ceil_div(x, multiple) * multiple
