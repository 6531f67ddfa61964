"""Closed-form per-update cost model for parameter-server synchronous SGD.

Symbols follow the usual notation: M workers, single-node minibatch time C,
i minibatch iterations per global update, weight bytes W and cluster
transmission rate chi.  Per-update compute on one node is C_u = i * C.

Every phase is evaluated as an exact rational (``fractions.Fraction``) and
rounded to a double once, so the closed form and the event simulator agree
bit for bit whenever their exact totals agree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from typing import Mapping, Optional

DEFAULT_M_LIMIT = 1024


class ConfigError(ValueError):
    """Invalid cluster configuration or codec profile."""


class Strategy(str, enum.Enum):
    VANILLA = "vanilla"
    REPETITIVE = "repetitive"
    HOMOMORPHIC = "homomorphic"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        aliases = {
            "vanilla": cls.VANILLA,
            "repetitive": cls.REPETITIVE,
            "repetitivecodec": cls.REPETITIVE,
            "homomorphic": cls.HOMOMORPHIC,
            "onetimehomomorphic": cls.HOMOMORPHIC,
        }
        key = str(value).replace("_", "").replace("-", "").lower()
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown strategy {value!r}") from None


def _positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be finite and > 0, got {value!r}")


def _positive_int(name: str, value: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")


@dataclass(frozen=True)
class ClusterConfig:
    workers: int
    minibatch_time: float
    iterations: int
    weight_bytes: float
    bandwidth: float
    minibatch: int = 256
    dataset: int = 1_281_167

    def __post_init__(self) -> None:
        _positive_int("workers", self.workers)
        _positive("minibatch_time", self.minibatch_time)
        _positive_int("iterations", self.iterations)
        _positive("weight_bytes", self.weight_bytes)
        _positive("bandwidth", self.bandwidth)
        _positive_int("minibatch", self.minibatch)
        _positive_int("dataset", self.dataset)
        if self.minibatch < self.workers:
            raise ConfigError(
                f"minibatch ({self.minibatch}) must be >= workers ({self.workers})"
            )
        if not math.isfinite(self.update_compute):
            raise ConfigError("iterations * minibatch_time overflows")

    @property
    def update_compute(self) -> float:
        """C_u, the single-node time for one whole global update."""
        return float(Fraction(self.iterations) * Fraction(self.minibatch_time))

    @property
    def local_minibatch(self) -> float:
        return self.minibatch / self.workers

    def with_workers(self, workers: int) -> "ClusterConfig":
        return replace(self, workers=workers)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class CodecProfile:
    """Analytic codec parameters: rho is compressed/original, h the op slowdown."""

    rho: float
    h: float = 1.0
    compress_s: float = 0.0
    decompress_s: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rho) and 0 < self.rho <= 1):
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho!r}")
        if not (math.isfinite(self.h) and self.h >= 1):
            raise ConfigError(f"h must be >= 1, got {self.h!r}")
        for name in ("compress_s", "decompress_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v!r}")

    @classmethod
    def from_table_ratio(
        cls, original_over_compressed: float, h: float = 1.0,
        compress_s: float = 0.0, decompress_s: float = 0.0,
    ) -> "CodecProfile":
        """Build from a ratio reported as original/compressed (e.g. 1.079)."""
        _positive("original_over_compressed", original_over_compressed)
        return cls(1.0 / original_over_compressed, h, compress_s, decompress_s)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FrontierPoint:
    rho: float
    h_max: float
    r: float

    @property
    def feasible(self) -> bool:
        return self.h_max >= 1.0


PHASES = (
    "local_compute_s",
    "worker_compress_s",
    "push_transfer_s",
    "server_decompress_s",
    "aggregate_s",
    "server_compress_s",
    "broadcast_transfer_s",
    "worker_decompress_s",
)


@dataclass(frozen=True)
class PhaseBreakdown:
    """Durations of one global parameter update.

    ``t_tnf`` lumps every non-compute phase: a worker that is not computing
    is waiting on the parameter exchange.
    """

    local_compute_s: float
    worker_compress_s: float
    push_transfer_s: float
    server_decompress_s: float
    aggregate_s: float
    server_compress_s: float
    broadcast_transfer_s: float
    worker_decompress_s: float
    t_cmt: float
    t_tnf: float
    t_update: float

    @classmethod
    def from_exact(cls, phases: Mapping[str, Fraction]) -> "PhaseBreakdown":
        unknown = set(phases) - set(PHASES)
        if unknown:
            raise KeyError(f"unknown phases {sorted(unknown)}")
        exact = {name: Fraction(phases.get(name, 0)) for name in PHASES}
        compute = exact["local_compute_s"]
        waiting = sum((exact[n] for n in PHASES[1:]), Fraction(0))
        t_cmt = float(compute)
        t_tnf = float(waiting)
        return cls(
            **{name: float(v) for name, v in exact.items()},
            t_cmt=t_cmt,
            t_tnf=t_tnf,
            t_update=t_cmt + t_tnf,
        )

    def phases(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in PHASES}

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# -- exact helpers (M passed explicitly so scans need not build configs) --

def _cmt_exact(cfg: ClusterConfig, m: int) -> Fraction:
    return Fraction(cfg.iterations) * Fraction(cfg.minibatch_time) / m


def _tnf_exact(cfg: ClusterConfig, m: int) -> Fraction:
    return Fraction(cfg.weight_bytes) * m / Fraction(cfg.bandwidth)


def _require_profile(strategy: Strategy, profile: Optional[CodecProfile]) -> None:
    if strategy is not Strategy.VANILLA and profile is None:
        raise ConfigError(f"strategy {strategy.value!r} requires a codec profile")


def _exact_phases(
    cfg: ClusterConfig, m: int, strategy: Strategy, profile: Optional[CodecProfile]
) -> dict[str, Fraction]:
    strategy = Strategy.parse(strategy)
    _require_profile(strategy, profile)
    cmt = _cmt_exact(cfg, m)
    tnf = _tnf_exact(cfg, m)
    if strategy is Strategy.VANILLA:
        return {
            "local_compute_s": cmt,
            "push_transfer_s": tnf / 2,
            "broadcast_transfer_s": tnf / 2,
        }
    rho = Fraction(profile.rho)
    if strategy is Strategy.HOMOMORPHIC:
        return {
            "local_compute_s": Fraction(profile.h) * cmt,
            "push_transfer_s": rho * tnf / 2,
            "broadcast_transfer_s": rho * tnf / 2,
        }
    comp = Fraction(profile.compress_s)
    decomp = Fraction(profile.decompress_s)
    return {
        "local_compute_s": cmt,
        "worker_compress_s": comp,
        "push_transfer_s": rho * tnf / 2,
        "server_decompress_s": m * decomp,
        "server_compress_s": comp,
        "broadcast_transfer_s": rho * tnf / 2,
        "worker_decompress_s": decomp,
    }


def _t_update(cfg, m, strategy, profile) -> float:
    return PhaseBreakdown.from_exact(_exact_phases(cfg, m, strategy, profile)).t_update


# -- public operations --

def local_minibatch_time(cfg: ClusterConfig) -> float:
    """c = C / M."""
    return float(Fraction(cfg.minibatch_time) / cfg.workers)


def computation_time(cfg: ClusterConfig) -> float:
    """T_cmt = i * C / M."""
    return float(_cmt_exact(cfg, cfg.workers))


def transfer_time(cfg: ClusterConfig) -> float:
    """T_tnf = W * M / chi, covering the full push + broadcast round."""
    return float(_tnf_exact(cfg, cfg.workers))


def update_time(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
) -> PhaseBreakdown:
    """Per-phase cost of one global update.

    Repetitive codecs pay a worker compress, M sequential server
    decompresses, one server compress and a worker decompress every update;
    the homomorphic strategy pays only h-scaled compute and rho-scaled
    transfer (its one-time codec cost is charged per training run).
    """
    return PhaseBreakdown.from_exact(
        _exact_phases(cfg, cfg.workers, Strategy.parse(strategy), profile)
    )


def speedup(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
) -> float:
    return cfg.update_compute / update_time(cfg, strategy, profile).t_update


def _speedup_at(cfg, m, strategy, profile) -> float:
    return cfg.update_compute / _t_update(cfg, m, strategy, profile)


def crossover_workers(cfg: ClusterConfig) -> int:
    """Smallest M >= 1 whose transfer time is at least its compute time.

    T_tnf(M) >= T_cmt(M)  <=>  M^2 * W >= C_u * chi, decided exactly.
    """
    target = Fraction(cfg.iterations) * Fraction(cfg.minibatch_time) * Fraction(cfg.bandwidth)
    w = Fraction(cfg.weight_bytes)
    m = max(1, math.isqrt(math.floor(target / w)))
    while m > 1 and (m - 1) ** 2 * w >= target:
        m -= 1
    while m * m * w < target:
        m += 1
    return m


def continuous_optimum(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
) -> float:
    """Real-valued M minimising h*C_u/M + rho*W*M/chi (vanilla: h = rho = 1)."""
    strategy = Strategy.parse(strategy)
    if strategy is Strategy.REPETITIVE:
        raise ValueError("no closed-form optimum for the repetitive strategy")
    h, rho = (1.0, 1.0) if strategy is Strategy.VANILLA else (profile.h, profile.rho)
    return math.sqrt(h * cfg.update_compute * cfg.bandwidth / (rho * cfg.weight_bytes))


def optimal_workers(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
    m_limit: int = DEFAULT_M_LIMIT,
) -> tuple[int, float]:
    """Worker count in [1, m_limit] with the highest speedup (ties -> smaller M)."""
    strategy = Strategy.parse(strategy)
    _require_profile(strategy, profile)
    _positive_int("m_limit", m_limit)
    if strategy is Strategy.REPETITIVE:
        candidates = range(1, m_limit + 1)
    else:
        # speedup is unimodal in M for these two, peaking at the continuous optimum
        x = continuous_optimum(cfg, strategy, profile)
        lo = min(max(1, math.floor(x)), m_limit)
        candidates = sorted({lo, min(lo + 1, m_limit)})
    best_m, best_s = 0, -math.inf
    for m in candidates:
        s = _speedup_at(cfg, m, strategy, profile)
        if s > best_s:
            best_m, best_s = m, s
    return best_m, best_s


def frontier_h_max(cfg: ClusterConfig, rho: float, r: float) -> FrontierPoint:
    """Largest op overhead h meeting the per-update budget (C_u / M) * r.

    h <= r - (M^2 W / (C_u chi)) * rho.  A result below 1 means the budget is
    already exhausted by transfer alone.
    """
    if not (math.isfinite(rho) and 0 < rho <= 1):
        raise ConfigError(f"rho must lie in (0, 1], got {rho!r}")
    if not (math.isfinite(r) and r >= 1):
        raise ConfigError(f"r must be >= 1, got {r!r}")
    m = cfg.workers
    slope = Fraction(m * m) * Fraction(cfg.weight_bytes) / (
        Fraction(cfg.iterations) * Fraction(cfg.minibatch_time) * Fraction(cfg.bandwidth)
    )
    return FrontierPoint(rho=rho, h_max=float(Fraction(r) - slope * Fraction(rho)), r=r)


def budget_time(cfg: ClusterConfig, r: float) -> float:
    """The frontier's per-update budget (C_u / M) * r."""
    return float(_cmt_exact(cfg, cfg.workers) * Fraction(r))
