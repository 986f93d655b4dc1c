"""Evaluation metrics, the two simple baselines, and parameter sweeps."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import detector, spectral
from .detector import AnomalyRecord, AnomalyReport, DetectorConfig, rank_topk
from .graphseq import GraphDataError, GraphSequence, GraphSnapshot, LabelSet, window


@dataclass(frozen=True)
class MetricResult:
    scenario: str
    method: str
    metric: str
    K: int | None
    value: float
    seed: int


METRIC_COLUMNS = ("scenario", "method", "metric", "K", "value", "seed")


def metrics_csv(rows: Iterable[MetricResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in rows:
        w.writerow([r.scenario, r.method, r.metric, "" if r.K is None else r.K, f"{r.value:.6f}", r.seed])
    return buf.getvalue()


def hit_ratio(report: AnomalyReport, labels: LabelSet, K: int) -> float:
    """Share of true change points among the K top-scored timestamps.

    The denominator is ``min(K, #change points)``; events never count as hits.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not labels.change_points:
        raise ValueError("no change points to hit")
    top = rank_topk(report, K)
    hits = len(set(top) & labels.change_points)
    return hits / min(K, len(labels.change_points))


def mae(pred, actual, mask=None) -> float:
    """Mean absolute error over all entries, or over ``mask`` (boolean array)."""
    p = pred.weights if isinstance(pred, GraphSnapshot) else np.asarray(pred, dtype=float)
    a = actual.weights if isinstance(actual, GraphSnapshot) else np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {a.shape}")
    diff = np.abs(p - a)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("empty mask")
        diff = diff[mask]
    return float(diff.mean())


def historical_average(seq: GraphSequence, t_next: int, window_size: int) -> np.ndarray:
    """Element-wise mean of the ``window_size`` snapshots before ``t_next``."""
    return window(seq, t_next - 1, window_size).stack().mean(axis=0)


def _mode(seq: GraphSequence) -> str:
    return "undirected" if seq.is_symmetric() else "directed"


def baseline_lta(seq: GraphSequence, t_next: int, window_size: int, mode: str | None = None) -> float:
    """Cosine distance between the signatures of ``G_{t_next}`` and the long-window mean graph."""
    mode = mode or _mode(seq)
    avg = historical_average(seq, t_next, window_size)
    sig_avg, _ = spectral.signature(avg, mode)
    sig_a, _ = spectral.signature(seq.at(t_next), mode)
    return spectral.cosine_score(sig_avg, sig_a)


def principal_eigenvector(W: np.ndarray) -> np.ndarray:
    """Unit principal eigenvector of ``(W + W^T)/2``, oriented to a non-negative sum."""
    S = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(S)
    u = vecs[:, np.argmax(vals)]
    if u.sum() < 0:
        u = -u
    return u


def baseline_activity(seq: GraphSequence, t_next: int, short_window: int) -> float:
    """``1 - cos(u_t, mean of previous principal eigenvectors)``."""
    hist = window(seq, t_next - 1, short_window)
    us = [principal_eigenvector(s.weights) for s in hist]
    ubar = np.mean(us, axis=0)
    u = principal_eigenvector(seq.at(t_next).weights)
    return spectral.cosine_score(ubar, u) if np.any(ubar) or np.any(u) else 0.0


def baseline_report(seq: GraphSequence, method: str, cfg: DetectorConfig) -> AnomalyReport:
    """Score the same timestamps as the detector with one of the baselines."""
    hp = cfg.hp
    start = detector.first_admissible(seq, hp)
    if start > seq.last:
        raise GraphDataError("sequence too short for the configured windows")
    mode = detector.resolve_mode(seq, cfg.laplacian)
    recs = []
    for t in range(start, seq.last + 1):
        if method == "lta":
            z = baseline_lta(seq, t, hp.long_window, mode)
        elif method == "activity":
            z = baseline_activity(seq, t, hp.T)
        else:
            raise ValueError(f"unknown baseline {method!r}")
        recs.append(AnomalyRecord(t, z, z, z, z >= cfg.threshold, 0.0, 0))
    return AnomalyReport(recs, cfg, cfg.seed)


METHODS = ("lem", "lem_no_lt", "lta", "activity")


def run_method(seq: GraphSequence, method: str, cfg: DetectorConfig) -> AnomalyReport:
    if method == "lem":
        return detector.detect_sequence(seq, cfg)
    if method == "lem_no_lt":
        return detector.detect_sequence(seq, replace(cfg, hp=replace(cfg.hp, lambda2=0.0)))
    return baseline_report(seq, method, cfg)


def compare_methods(seq: GraphSequence, labels: LabelSet, cfg: DetectorConfig, K: int,
                    scenario: str = "scenario", methods=METHODS) -> list[MetricResult]:
    """HR@K of every method on one shared sequence/label pair."""
    rows = []
    for m in methods:
        rep = run_method(seq, m, cfg)
        rows.append(MetricResult(scenario, m, "HR", K, hit_ratio(rep, labels, K), cfg.seed))
    return rows


def sweep(seq: GraphSequence, labels: LabelSet, cfg: DetectorConfig, grid: dict, K: int,
          scenario: str = "scenario") -> list[MetricResult]:
    """HR@K of the detector on every cell of ``grid``.

    ``grid`` maps any of ``alpha``, ``lambda1``, ``lambda2``, ``k`` to a list of
    values. Cells are emitted in row-major grid order; cells that differ only in
    ``alpha`` share one fit.
    """
    keys = [k for k in ("alpha", "lambda1", "lambda2", "k") if k in grid]
    unknown = set(grid) - set(keys)
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    fits: dict[tuple, AnomalyReport] = {}
    rows = []
    for cell in itertools.product(*(list(grid[k]) for k in keys)):
        params = dict(zip(keys, cell))
        hp = cfg.hp
        hp_kw = {k: params[k] for k in ("lambda1", "lambda2", "k") if k in params}
        if hp_kw:
            hp = replace(hp, **hp_kw)
        fit_key = tuple(sorted(hp.to_dict().items()))
        if fit_key not in fits:
            fits[fit_key] = detector.detect_sequence(seq, replace(cfg, hp=hp))
        rep = detector.rescore(fits[fit_key], params.get("alpha", cfg.alpha))
        name = "lem[" + ",".join(f"{k}={params[k]}" for k in keys) + "]"
        rows.append(MetricResult(scenario, name, "HR", K, hit_ratio(rep, labels, K), cfg.seed))
    return rows
