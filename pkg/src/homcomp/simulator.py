"""Discrete-event simulation of synchronous-SGD global parameter updates.

The simulator walks one update event by event (per-iteration compute,
per-worker pushes over a shared link, server-side codec work, broadcast)
on an exact rational clock.  With jitter disabled its totals equal
:func:`homcomp.cost_model.update_time` exactly; the closed form is its oracle.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .cost_model import (
    ClusterConfig,
    CodecProfile,
    ConfigError,
    PhaseBreakdown,
    Strategy,
    _require_profile,
)

CURVE_HEADER = ("M", "t_cmt", "t_tnf", "t_update", "speedup")
GRID_HEADER = ("h", "rho", "t_cmt", "t_tnf", "t_update", "speedup")


@dataclass(frozen=True)
class Event:
    start: Fraction
    duration: Fraction
    phase: str
    actor: str

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


@dataclass
class _Timeline:
    jitter: float = 0.0
    rng: Optional[np.random.Generator] = None
    clock: Fraction = Fraction(0)
    events: list = field(default_factory=list)

    def _perturb(self, d: Fraction) -> Fraction:
        if not self.jitter or d == 0:
            return d
        factor = 1.0 + self.jitter * float(self.rng.standard_normal())
        return d * Fraction(max(factor, 0.0))

    def run(self, phase: str, actor: str, d: Fraction) -> Fraction:
        """Schedule a sequential event at the current clock and advance it."""
        d = self._perturb(d)
        self.events.append(Event(self.clock, d, phase, actor))
        self.clock += d
        return d

    def parallel(self, phase: str, lanes: Sequence[tuple[str, list[Fraction]]]) -> None:
        """Run independent lanes from the current clock; barrier on the slowest."""
        start = self.clock
        finish = start
        for actor, durations in lanes:
            t = start
            for d in durations:
                d = self._perturb(d)
                self.events.append(Event(t, d, phase, actor))
                t += d
            finish = max(finish, t)
        self.clock = finish


def simulate_events(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
    *,
    jitter: float = 0.0,
    seed: int = 0,
) -> tuple[dict[str, Fraction], list[Event]]:
    """Event log of one global update plus exact per-phase wall times.

    Without jitter all workers are identical, so a single lane stands for the
    M lock-stepped workers in the parallel phases; with jitter every worker
    gets its own lane and each barrier waits for the slowest.
    """
    strategy = Strategy.parse(strategy)
    _require_profile(strategy, profile)
    if jitter < 0:
        raise ConfigError("jitter must be >= 0")
    m = cfg.workers
    tl = _Timeline(jitter=jitter, rng=np.random.default_rng(seed) if jitter else None)

    h = Fraction(profile.h) if strategy is Strategy.HOMOMORPHIC else Fraction(1)
    rho = Fraction(profile.rho) if strategy is not Strategy.VANILLA else Fraction(1)
    codec = strategy is Strategy.REPETITIVE
    iteration = h * Fraction(cfg.minibatch_time) / m
    # one blob crossing the shared link in one direction; W*M/chi covers both legs
    leg = rho * Fraction(cfg.weight_bytes) / (2 * Fraction(cfg.bandwidth))
    lanes = [f"worker{k}" for k in range(m)] if jitter else ["workers"]

    marks = {}

    def phase(name, fn):
        t0 = tl.clock
        fn()
        marks[name] = tl.clock - t0

    phase("local_compute_s",
          lambda: tl.parallel("local_compute_s",
                              [(a, [iteration] * cfg.iterations) for a in lanes]))
    if codec:
        phase("worker_compress_s",
              lambda: tl.parallel("worker_compress_s",
                                  [(a, [Fraction(profile.compress_s)]) for a in lanes]))
    phase("push_transfer_s",
          lambda: [tl.run("push_transfer_s", f"worker{k}", leg) for k in range(m)])
    if codec:
        phase("server_decompress_s",
              lambda: [tl.run("server_decompress_s", "server", Fraction(profile.decompress_s))
                       for _ in range(m)])
    phase("aggregate_s", lambda: tl.run("aggregate_s", "server", Fraction(0)))
    if codec:
        phase("server_compress_s",
              lambda: tl.run("server_compress_s", "server", Fraction(profile.compress_s)))
    phase("broadcast_transfer_s",
          lambda: [tl.run("broadcast_transfer_s", f"worker{k}", leg) for k in range(m)])
    if codec:
        phase("worker_decompress_s",
              lambda: tl.parallel("worker_decompress_s",
                                  [(a, [Fraction(profile.decompress_s)]) for a in lanes]))
    return marks, tl.events


def simulate_update(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
    *,
    jitter: float = 0.0,
    seed: int = 0,
) -> PhaseBreakdown:
    marks, _ = simulate_events(cfg, strategy, profile, jitter=jitter, seed=seed)
    return PhaseBreakdown.from_exact(marks)


def simulate_training(
    cfg: ClusterConfig,
    strategy: Strategy | str,
    profile: Optional[CodecProfile],
    updates: int,
) -> tuple[float, list[PhaseBreakdown]]:
    """Total time of ``updates`` global updates.

    The homomorphic strategy compresses once before the first update and
    decompresses once after the last; repetitive codecs already carry their
    codec phases inside every update.
    """
    if isinstance(updates, bool) or not isinstance(updates, int) or updates < 1:
        raise ConfigError(f"updates must be an integer >= 1, got {updates!r}")
    strategy = Strategy.parse(strategy)
    per_update = [simulate_update(cfg, strategy, profile) for _ in range(updates)]
    total = sum(p.t_update for p in per_update)
    if strategy is Strategy.HOMOMORPHIC:
        total = profile.compress_s + total + profile.decompress_s
    return total, per_update


@dataclass(frozen=True)
class CurveRow:
    M: int
    t_cmt: float
    t_tnf: float
    t_update: float
    speedup: float


@dataclass(frozen=True)
class SpeedupCurve:
    rows: tuple[CurveRow, ...]
    label: str = ""

    def __post_init__(self):
        ms = [r.M for r in self.rows]
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("curve rows must be strictly increasing in M")

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        return _csv(CURVE_HEADER, ([r.M, r.t_cmt, r.t_tnf, r.t_update, r.speedup]
                                   for r in self.rows))


@dataclass(frozen=True)
class GridCell:
    h: float
    rho: float
    breakdown: PhaseBreakdown
    speedup: float


@dataclass(frozen=True)
class HRhoGrid:
    workers: int
    cells: tuple[GridCell, ...]

    def __len__(self):
        return len(self.cells)

    def cell(self, h: float, rho: float) -> GridCell:
        for c in self.cells:
            if c.h == h and c.rho == rho:
                return c
        raise KeyError((h, rho))

    def to_csv(self) -> str:
        return _csv(GRID_HEADER, ([c.h, c.rho, c.breakdown.t_cmt, c.breakdown.t_tnf,
                                   c.breakdown.t_update, c.speedup] for c in self.cells))


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{v:.6g}"


def _csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def sweep_workers(
    cfg: ClusterConfig,
    strategy: Strategy | str = Strategy.VANILLA,
    profile: Optional[CodecProfile] = None,
    m_range: Iterable[int] = range(1, 26),
    label: str = "",
) -> SpeedupCurve:
    ms = list(m_range)
    if not ms:
        raise ValueError("m_range must be non-empty")
    if any(b <= a for a, b in zip(ms, ms[1:])):
        raise ValueError("m_range must be strictly ascending")
    rows = []
    for m in ms:
        c = cfg.with_workers(m)
        p = simulate_update(c, strategy, profile)
        rows.append(CurveRow(m, p.t_cmt, p.t_tnf, p.t_update, c.update_compute / p.t_update))
    return SpeedupCurve(tuple(rows), label=label or Strategy.parse(strategy).value)


def ideal_curve(cfg: ClusterConfig, m_range: Iterable[int] = range(1, 26)) -> SpeedupCurve:
    """Linear-speedup reference: no communication at all."""
    rows = []
    for m in m_range:
        t = cfg.update_compute / m
        rows.append(CurveRow(m, t, 0.0, t, float(m)))
    return SpeedupCurve(tuple(rows), label="ideal")


def sweep_h_rho(
    cfg: ClusterConfig, h_list: Iterable[float], rho_list: Iterable[float]
) -> HRhoGrid:
    """Homomorphic per-update cost over an h x rho grid, rows ordered rho-major."""
    hs, rhos = list(h_list), list(rho_list)
    if not hs or not rhos:
        raise ValueError("h_list and rho_list must be non-empty")
    cells = []
    for rho in rhos:
        for h in hs:
            p = simulate_update(cfg, Strategy.HOMOMORPHIC, CodecProfile(rho=rho, h=h))
            cells.append(GridCell(h, rho, p, cfg.update_compute / p.t_update))
    return HRhoGrid(cfg.workers, tuple(cells))


def compare_curves(
    cfg: ClusterConfig,
    m_range: Iterable[int] = range(1, 26),
    rhos: Sequence[float] = (0.2, 0.5),
    h: float = 1.0,
) -> dict[str, SpeedupCurve]:
    """Ideal, homomorphic(rho...) and vanilla speedup curves over the same M range."""
    ms = list(m_range)
    curves = {"ideal": ideal_curve(cfg, ms)}
    for rho in rhos:
        name = f"homomorphic rho={rho:g}"
        curves[name] = sweep_workers(cfg, Strategy.HOMOMORPHIC,
                                     CodecProfile(rho=rho, h=h), ms, label=name)
    curves["vanilla"] = sweep_workers(cfg, Strategy.VANILLA, None, ms)
    return curves


def compare_to_csv(curves: dict[str, SpeedupCurve]) -> str:
    return _csv(("series",) + CURVE_HEADER,
                ([name, r.M, r.t_cmt, r.t_tnf, r.t_update, r.speedup]
                 for name, curve in curves.items() for r in curve.rows))
