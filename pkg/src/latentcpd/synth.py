"""Stochastic block model scenarios with planted change points and events."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .graphseq import GraphSequence, GraphSnapshot, LabelSet


@dataclass(frozen=True)
class SBMConfig:
    """Block sizes and edge probabilities of one SBM regime.

    ``steps`` and ``seed`` are only read from the base config of a scenario.
    """

    n: int = 100
    blocks: tuple[int, ...] = (25, 25, 25, 25)
    p_in: float = 0.40
    p_out: float = 0.01
    steps: int = 151
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if any(b <= 0 for b in self.blocks):
            raise ValueError("block sizes must be positive")
        if sum(self.blocks) != self.n:
            raise ValueError(f"block sizes sum to {sum(self.blocks)}, expected n={self.n}")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError("need 0 <= p_out <= p_in <= 1")

    def membership(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.blocks)), self.blocks)

    def probabilities(self) -> np.ndarray:
        m = self.membership()
        same = m[:, None] == m[None, :]
        return np.where(same, self.p_in, self.p_out)

    def to_dict(self) -> dict:
        return {"n": self.n, "blocks": list(self.blocks), "p_in": self.p_in, "p_out": self.p_out,
                "steps": self.steps, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict, base: "SBMConfig | None" = None) -> "SBMConfig":
        """Build from a dict; missing keys fall back to ``base`` (or the defaults)."""
        base = base or cls()
        kw = {f: d.get(f, getattr(base, f)) for f in ("n", "blocks", "p_in", "p_out", "steps", "seed")}
        if "n" in d and "blocks" not in d:
            # re-split evenly with the base block count
            nb = len(base.blocks)
            kw["blocks"] = even_blocks(d["n"], nb)
        return cls(**kw)


def even_blocks(n: int, count: int) -> tuple[int, ...]:
    q, r = divmod(n, count)
    return tuple(q + (1 if i < r else 0) for i in range(count))


@dataclass(frozen=True)
class ScenarioSpec:
    """Where regimes switch and where one-step events occur.

    ``initial`` is the config before the first change point (the base config
    when omitted).

    ``density_cycle`` multiplies both probabilities by ``cycle[t % len]``
    (periodic scenarios); ``drift`` adds ``drift * t`` to ``p_in`` (slow
    drifting scenarios). Both apply on top of whichever config is active.
    """

    kind: str = "pure"
    change_points: tuple[tuple[int, SBMConfig], ...] = ()
    events: tuple[tuple[int, SBMConfig], ...] = ()
    density_cycle: tuple[float, ...] = ()
    drift: float = 0.0
    initial: SBMConfig | None = None

    def __post_init__(self):
        if self.kind not in ("pure", "hybrid"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        cps = tuple(sorted(((int(t), c) for t, c in self.change_points), key=lambda x: x[0]))
        evs = tuple(sorted(((int(t), c) for t, c in self.events), key=lambda x: x[0]))
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(self, "events", evs)
        object.__setattr__(self, "density_cycle", tuple(float(x) for x in self.density_cycle))
        if self.kind == "pure" and evs:
            raise ValueError("pure scenarios cannot contain events")
        ct = [t for t, _ in cps]
        if len(set(ct)) != len(ct):
            raise ValueError("overlapping change points")
        et = [t for t, _ in evs]
        if len(set(et)) != len(et):
            raise ValueError("overlapping events")
        if set(ct) & set(et):
            raise ValueError(f"event colliding with a change point at t={sorted(set(ct) & set(et))}")

    def labels(self) -> LabelSet:
        return LabelSet(frozenset(t for t, _ in self.change_points), frozenset(t for t, _ in self.events))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "change_points": [{"t": t, **c.to_dict()} for t, c in self.change_points],
            "events": [{"t": t, **c.to_dict()} for t, c in self.events],
            "density_cycle": list(self.density_cycle),
            "drift": self.drift,
            "initial": None if self.initial is None else self.initial.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base: SBMConfig) -> "ScenarioSpec":
        def entries(key):
            return tuple((int(e["t"]), SBMConfig.from_dict(e, base)) for e in d.get(key, ()))
        return cls(
            kind=d.get("kind", "pure"),
            change_points=entries("change_points"),
            events=entries("events"),
            density_cycle=tuple(d.get("density_cycle", ())),
            drift=float(d.get("drift", 0.0)),
            initial=SBMConfig.from_dict(d["initial"], base) if d.get("initial") else None,
        )


def config_at(spec: ScenarioSpec, base: SBMConfig, t: int) -> SBMConfig:
    """Generating config at timestamp ``t`` (before cycle/drift modulation)."""
    cfg = spec.initial or base
    for tc, c in spec.change_points:
        if tc <= t:
            cfg = c
    for te, c in spec.events:
        if te == t:
            cfg = c
    return cfg


def _modulated(spec: ScenarioSpec, cfg: SBMConfig, t: int) -> SBMConfig:
    p_in, p_out = cfg.p_in, cfg.p_out
    if spec.drift:
        p_in = p_in + spec.drift * t
    if spec.density_cycle:
        f = spec.density_cycle[t % len(spec.density_cycle)]
        p_in, p_out = p_in * f, p_out * f
    p_in = min(max(p_in, 0.0), 1.0)
    p_out = min(max(p_out, 0.0), p_in)
    if (p_in, p_out) == (cfg.p_in, cfg.p_out):
        return cfg
    return replace(cfg, p_in=p_in, p_out=p_out)


def sample_snapshot(cfg: SBMConfig, t: int, rng: np.random.Generator) -> GraphSnapshot:
    """Undirected unit-weight SBM draw without self-loops."""
    n = cfg.n
    draws = rng.random((n, n)) < cfg.probabilities()
    W = np.triu(draws, 1).astype(float)
    return GraphSnapshot(t, W + W.T, directed=False)


def _generate(spec: ScenarioSpec, base: SBMConfig) -> tuple[GraphSequence, LabelSet]:
    steps = base.steps
    for t, c in (*spec.change_points, *spec.events):
        if not 0 <= t < steps:
            raise ValueError(f"label timestamp {t} outside [0, {steps})")
        if c.n != base.n:
            raise ValueError("all regimes must share the node count")
    if spec.initial is not None and spec.initial.n != base.n:
        raise ValueError("all regimes must share the node count")
    rng = np.random.default_rng(base.seed)
    snaps = []
    for t in range(steps):
        cfg = _modulated(spec, config_at(spec, base, t), t)
        snaps.append(sample_snapshot(cfg, t, rng))
    return GraphSequence(tuple(snaps)), spec.labels()


def generate_pure(spec: ScenarioSpec, base_cfg: SBMConfig) -> tuple[GraphSequence, LabelSet]:
    if spec.kind != "pure":
        raise ValueError("generate_pure needs a pure scenario")
    return _generate(spec, base_cfg)


def generate_hybrid(spec: ScenarioSpec, base_cfg: SBMConfig) -> tuple[GraphSequence, LabelSet]:
    if spec.kind != "hybrid":
        raise ValueError("generate_hybrid needs a hybrid scenario")
    return _generate(spec, base_cfg)


def generate(spec: ScenarioSpec, base_cfg: SBMConfig) -> tuple[GraphSequence, LabelSet]:
    return _generate(spec, base_cfg)


# -- default scenarios --------------------------------------------------------

EVENT_P_OUT_FACTOR = 3.0
MAX_START_BLOCKS = 10


def expected_degree(cfg: SBMConfig) -> float:
    return float(cfg.probabilities().sum(axis=1).mean() - cfg.p_in)


def bulk_width(cfg: SBMConfig) -> float:
    """Relative spread of the normalised adjacency bulk, ``sqrt(mean var degree) / mean degree``.

    Two regimes with equal width have Laplacian spectra whose bulk looks alike,
    so only the block structure separates them.
    """
    P = cfg.probabilities()
    np.fill_diagonal(P, 0.0)
    d = P.sum(axis=1).mean()
    if d == 0:
        return 0.0
    return float(np.sqrt((P * (1.0 - P)).sum(axis=1).mean()) / d)


PRESERVE = ("width", "degree", "none")


def repartition(cfg: SBMConfig, n_blocks: int, preserve: str = "width") -> SBMConfig:
    """Same nodes split into ``n_blocks`` equal blocks, ``p_out`` kept.

    ``preserve`` picks what the new intra-block probability holds fixed: the
    bulk width (default), the mean expected degree, or nothing (``p_in`` kept).
    """
    if preserve not in PRESERVE:
        raise ValueError(f"preserve must be one of {PRESERVE}")
    new = replace(cfg, blocks=even_blocks(cfg.n, n_blocks))
    if preserve == "none":
        return new
    if preserve == "degree":
        target = expected_degree(cfg)
        sizes = np.array(new.blocks, dtype=float)
        n = cfg.n
        # mean degree = (p_in * sum s(s-1) + p_out * sum s(n-s)) / n
        intra = float((sizes * (sizes - 1)).sum())
        inter = float((sizes * (n - sizes)).sum())
        p_in = (target * n - cfg.p_out * inter) / intra
        if not cfg.p_out <= p_in <= 1.0:
            raise ValueError(f"cannot preserve degree {target:.3f} with {n_blocks} blocks")
        return replace(new, p_in=p_in)
    target = bulk_width(cfg)

    def gap(p):
        return bulk_width(replace(new, p_in=p)) - target

    lo, hi = max(cfg.p_out, 1e-9), 1.0
    if gap(lo) * gap(hi) > 0:
        raise ValueError(f"cannot preserve bulk width {target:.4f} with {n_blocks} blocks")
    return replace(new, p_in=float(brentq(gap, lo, hi, xtol=1e-10)))


def _positions(count: int, lo: int, hi: int) -> list[int]:
    """``count`` evenly spaced integers strictly inside ``(lo, hi)``."""
    if count == 0:
        return []
    step = (hi - lo) / (count + 1)
    return [int(round(lo + step * (i + 1))) for i in range(count)]


def block_schedule(n_changes: int, n: int = 100) -> tuple[int, ...]:
    """Decreasing block counts for ``n_changes + 1`` regimes, ending in a single block.

    Counts are evenly spaced from ``max(10, n_changes + 1)`` down to 1, so every
    change merges communities by a similar amount.
    """
    top = max(MAX_START_BLOCKS, n_changes + 1)
    if top > n:
        raise ValueError(f"{n_changes} changes need more than {n} nodes")
    counts = np.linspace(top, 1, n_changes + 1)
    out = tuple(int(round(c)) for c in counts)
    if len(set(out)) != len(out):
        raise ValueError("block schedule has repeated counts")
    return out


def default_scenario(kind: str = "pure", n_changes: int = 3, n_events: int = 0,
                     base: SBMConfig | None = None, warmup: int = 13,
                     density_cycle=(), drift: float = 0.0, preserve: str = "width",
                     event_factor: float = EVENT_P_OUT_FACTOR,
                     schedule: tuple[int, ...] | None = None) -> ScenarioSpec:
    """Scenario whose change points merge communities; events spike ``p_out``.

    Regime ``i`` re-partitions the nodes of ``base`` into ``schedule[i]`` equal
    blocks (default :func:`block_schedule`), keeping ``p_out`` and matching the
    bulk width of ``base`` (see :func:`repartition`). ``base`` also supplies
    ``steps`` and ``seed``. Change points are spread evenly after ``warmup``;
    events sit midway inside the longest stationary stretches and multiply the
    active ``p_out`` by ``event_factor`` for one step.
    """
    base = base or SBMConfig()
    schedule = tuple(schedule) if schedule is not None else block_schedule(n_changes, base.n)
    if len(schedule) != n_changes + 1:
        raise ValueError(f"schedule needs {n_changes + 1} block counts")
    regimes = [_regime(base, nb, preserve) for nb in schedule]
    cps = _positions(n_changes, warmup, base.steps)
    change_points = tuple(zip(cps, regimes[1:]))
    events = ()
    if n_events:
        bounds = [warmup] + cps + [base.steps]
        gaps = sorted(zip(bounds, bounds[1:]), key=lambda g: g[1] - g[0], reverse=True)[:n_events]
        ev_t = sorted((a + b) // 2 for a, b in gaps)
        evs = []
        for t in ev_t:
            regime = config_at(ScenarioSpec("pure", change_points), regimes[0], t)
            p_out = min(regime.p_out * event_factor, regime.p_in)
            evs.append((t, replace(regime, p_out=p_out)))
        events = tuple(evs)
    return ScenarioSpec(kind, change_points, events, tuple(density_cycle), drift, initial=regimes[0])


def _regime(base: SBMConfig, n_blocks: int, preserve: str) -> SBMConfig:
    if n_blocks == len(base.blocks):
        return base
    return repartition(base, n_blocks, preserve)
