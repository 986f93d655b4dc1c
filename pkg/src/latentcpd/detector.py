"""Sliding-window change point detection: fit, predict, compare spectra, score."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import lemcore, spectral
from .graphseq import GraphDataError, GraphSequence, GraphSnapshot, window
from .lemcore import HyperParams, LatentState

logger = logging.getLogger(__name__)

LAPLACIAN_MODES = ("auto", "undirected", "directed")
# predicted weights below this fraction of the largest one are treated as absent
PREDICTION_DUST = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    hp: HyperParams = field(default_factory=HyperParams)
    alpha: float = 0.2
    threshold: float = 0.5
    laplacian: str = "auto"
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.laplacian not in LAPLACIAN_MODES:
            raise ValueError(f"laplacian must be one of {LAPLACIAN_MODES}")

    def to_dict(self) -> dict:
        return {"hp": self.hp.to_dict(), "alpha": self.alpha, "threshold": self.threshold,
                "laplacian": self.laplacian, "seed": self.seed, "warm_start": self.warm_start}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        d = dict(d)
        hp = HyperParams(**d.pop("hp", {}))
        return cls(hp=hp, **d)


@dataclass(frozen=True)
class AnomalyRecord:
    timestamp: int
    z1: float
    z2: float
    z: float
    flagged: bool
    final_loss: float
    iterations: int
    perturbed: bool = False


@dataclass
class AnomalyReport:
    records: list[AnomalyRecord]
    config: DetectorConfig
    seed: int

    def __post_init__(self):
        ts = [r.timestamp for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("report timestamps must be strictly increasing")

    def __len__(self):
        return len(self.records)

    @property
    def timestamps(self) -> list[int]:
        return [r.timestamp for r in self.records]

    @property
    def z(self) -> np.ndarray:
        return np.array([r.z for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "z1", "z2", "z", "flagged"])
        for r in self.records:
            w.writerow([r.timestamp, f"{r.z1:.6f}", f"{r.z2:.6f}", f"{r.z:.6f}", int(r.flagged)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config.to_dict(),
            "seed": self.seed,
            "records": [r.__dict__ for r in self.records],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AnomalyReport":
        d = json.loads(text)
        return cls([AnomalyRecord(**r) for r in d["records"]], DetectorConfig.from_dict(d["config"]), d["seed"])


def resolve_mode(seq: GraphSequence, mode: str) -> str:
    if mode == "auto":
        return "undirected" if seq.is_symmetric() else "directed"
    return mode


def first_admissible(seq: GraphSequence, hp: HyperParams) -> int:
    """Earliest timestamp that can be scored (needs ``long_window + 1`` earlier snapshots)."""
    return seq.first + hp.long_window + 1


def prune(snap: GraphSnapshot, rel: float = PREDICTION_DUST) -> GraphSnapshot:
    """Zero negligible predicted weights so isolated nodes stay isolated in the Laplacian."""
    W = snap.weights
    top = W.max() if W.size else 0.0
    if top <= 0:
        return snap
    return GraphSnapshot(snap.timestamp, np.where(W >= rel * top, W, 0.0), snap.directed)


class _SignatureCache:
    def __init__(self, seq: GraphSequence, mode: str):
        self.seq = seq
        self.mode = mode
        self._cache: dict[int, tuple[np.ndarray, bool]] = {}

    def __call__(self, t: int) -> tuple[np.ndarray, bool]:
        if t not in self._cache:
            self._cache[t] = spectral.signature(self.seq.at(t), self.mode)
        return self._cache[t]


def detect_step(seq: GraphSequence, t_next: int, cfg: DetectorConfig, warm: LatentState | None = None,
                rng: np.random.Generator | None = None) -> tuple[AnomalyRecord, LatentState]:
    """Score snapshot ``t_next`` against the model fitted on the preceding windows.

    Returns ``(record, state)``; ``state`` can warm-start the step for ``t_next + 1``
    via :func:`lemcore.shift_state`.
    """
    rec, state, _ = _step(seq, t_next, cfg, warm, rng)
    return rec, state


def _step(seq, t_next, cfg, warm=None, rng=None, sigs=None, guide_init=None):
    hp = cfg.hp
    if t_next > seq.last:
        raise GraphDataError(f"no snapshot at t={t_next}")
    if t_next < first_admissible(seq, hp):
        raise GraphDataError(
            f"insufficient history for t={t_next}: need {hp.long_window + 1} earlier snapshots"
        )
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sigs = sigs or _SignatureCache(seq, resolve_mode(seq, cfg.laplacian))
    mode = sigs.mode

    long_seq = window(seq, t_next - 1, hp.long_window)
    short = window(seq, t_next - 1, hp.T)
    G_long = long_seq.stack()
    G = short.stack()

    guide = None
    if hp.lambda2 > 0:
        r = lemcore.adaptive_weights(G_long)
        guide = lemcore.fit_longterm(G_long, r, hp, rng=rng, init=guide_init)

    state, trace = lemcore.fit(G, guide, hp, init=warm, rng=rng)
    pred = prune(lemcore.predict_next(state, t_next, directed=(mode == "directed")))

    sigma_p, pert_p = spectral.signature(pred, mode)
    sigma_a, pert_a = sigs(t_next)
    window_sigs = [sigs(t) for t in short.timestamps]
    sigma_nor = spectral.normal_pattern([s for s, _ in window_sigs])
    perturbed = pert_p or pert_a or any(p for _, p in window_sigs)

    z1 = spectral.score_z1(sigma_p, sigma_a)
    z2 = spectral.score_z2(sigma_nor, sigma_a)
    z = spectral.combine_score(z1, z2, cfg.alpha)
    rec = AnomalyRecord(t_next, z1, z2, z, z >= cfg.threshold, trace[-1], len(trace) - 1, perturbed)
    return rec, state, guide


def detect_sequence(seq: GraphSequence, cfg: DetectorConfig) -> AnomalyReport:
    """Score every admissible timestamp, threading warm starts forward."""
    hp = cfg.hp
    start = first_admissible(seq, hp)
    if start > seq.last:
        raise GraphDataError(f"sequence of length {len(seq)} is too short for long window {hp.long_window}")
    rng = np.random.default_rng(cfg.seed)
    sigs = _SignatureCache(seq, resolve_mode(seq, cfg.laplacian))
    records = []
    warm = None
    guide_init = None
    for t in range(start, seq.last + 1):
        rec, state, guide = _step(seq, t, cfg, warm, rng, sigs, guide_init)
        records.append(rec)
        if cfg.warm_start:
            warm = lemcore.shift_state(state)
            guide_init = (guide.U_lt, guide.V_lt) if guide is not None else None
    return AnomalyReport(records, cfg, cfg.seed)


def rescore(report: AnomalyReport, alpha: float, threshold: float | None = None) -> AnomalyReport:
    """Recombine stored Z1/Z2 with another trade-off factor (no refit)."""
    threshold = report.config.threshold if threshold is None else threshold
    cfg = replace(report.config, alpha=alpha, threshold=threshold)
    recs = []
    for r in report.records:
        z = spectral.combine_score(r.z1, r.z2, alpha)
        recs.append(replace(r, z=z, flagged=z >= threshold))
    return AnomalyReport(recs, cfg, report.seed)


def rank_topk(report: AnomalyReport, K: int) -> list[int]:
    """Timestamps of the K largest scores; ties go to the earlier timestamp."""
    if K > len(report.records):
        raise ValueError(f"K={K} exceeds report length {len(report.records)}")
    order = sorted(report.records, key=lambda r: (-r.z, r.timestamp))
    return [r.timestamp for r in order[:K]]


def flag_threshold(report: AnomalyReport, threshold: float) -> set[int]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return {r.timestamp for r in report.records if r.z >= threshold}
