"""Snapshot and sequence containers, edge-list I/O and small graph utilities."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphDataError(ValueError):
    """Raised for malformed or inconsistent graph input."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """One timestamped weighted graph stored as a dense ``n x n`` matrix.

    ``weights[i, j]`` is the weight of edge ``i -> j``; absent edges are 0.
    The matrix is copied and made read-only on construction.
    """

    timestamp: int
    weights: np.ndarray
    directed: bool = True

    def __post_init__(self):
        w = _freeze(self.weights)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphDataError(f"weights must be square, got shape {w.shape}")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.weights, self.weights.T, rtol=0.0, atol=atol))

    def __eq__(self, other):
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        return (
            self.timestamp == other.timestamp
            and self.directed == other.directed
            and np.array_equal(self.weights, other.weights)
        )


def validate(snap: GraphSnapshot) -> list[str]:
    """Return every violated snapshot invariant; an empty list means valid."""
    problems = []
    w = snap.weights
    if not np.all(np.isfinite(w)):
        problems.append("non-finite weight")
    if np.any(w < 0):
        problems.append("negative weight")
    if not snap.directed and not np.array_equal(w, w.T):
        problems.append("asymmetric")
    return problems


@dataclass(frozen=True)
class GraphSequence:
    """Ordered snapshots over a fixed node set with contiguous timestamps."""

    snapshots: tuple[GraphSnapshot, ...]
    node_ids: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if not snaps:
            raise GraphDataError("a sequence needs at least one snapshot")
        n = snaps[0].n
        for s in snaps:
            if s.n != n:
                raise GraphDataError(
                    f"node count mismatch: snapshot t={s.timestamp} has {s.n} nodes, expected {n}"
                )
        for a, b in zip(snaps, snaps[1:]):
            if b.timestamp != a.timestamp + 1:
                raise GraphDataError(
                    f"timestamps must be contiguous and increasing ({a.timestamp} -> {b.timestamp})"
                )
        object.__setattr__(self, "snapshots", snaps)
        if self.node_ids is not None:
            ids = tuple(self.node_ids)
            if len(ids) != n:
                raise GraphDataError("node_ids length does not match node count")
            object.__setattr__(self, "node_ids", ids)

    @classmethod
    def from_matrices(cls, matrices: Iterable[np.ndarray], start: int = 0, directed: bool | None = None):
        """Build a sequence from an iterable of square weight matrices."""
        mats = [np.asarray(m, dtype=float) for m in matrices]
        if directed is None:
            directed = not all(np.array_equal(m, m.T) for m in mats)
        return cls(tuple(GraphSnapshot(start + i, m, directed) for i, m in enumerate(mats)))

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    @property
    def first(self) -> int:
        return self.snapshots[0].timestamp

    @property
    def last(self) -> int:
        return self.snapshots[-1].timestamp

    @property
    def timestamps(self) -> list[int]:
        return [s.timestamp for s in self.snapshots]

    @property
    def directed(self) -> bool:
        return any(s.directed for s in self.snapshots)

    def is_symmetric(self) -> bool:
        return all(s.is_symmetric() for s in self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    def at(self, t: int) -> GraphSnapshot:
        """Snapshot with timestamp ``t``."""
        i = t - self.first
        if not 0 <= i < len(self.snapshots):
            raise IndexError(f"timestamp {t} outside [{self.first}, {self.last}]")
        return self.snapshots[i]

    def stack(self) -> np.ndarray:
        """All weight matrices as a ``(len, n, n)`` array."""
        return np.stack([s.weights for s in self.snapshots])


@dataclass(frozen=True)
class LabelSet:
    """Ground-truth timestamps: persistent change points and one-step events."""

    change_points: frozenset[int] = frozenset()
    events: frozenset[int] = frozenset()

    def __post_init__(self):
        cp = frozenset(int(t) for t in self.change_points)
        ev = frozenset(int(t) for t in self.events)
        if cp & ev:
            raise GraphDataError(f"timestamps labelled both change and event: {sorted(cp & ev)}")
        object.__setattr__(self, "change_points", cp)
        object.__setattr__(self, "events", ev)

    def check_against(self, seq: GraphSequence) -> None:
        for t in self.change_points | self.events:
            if not seq.first <= t <= seq.last:
                raise GraphDataError(f"label timestamp {t} outside sequence range")


def window(seq: GraphSequence, end: int, size: int) -> GraphSequence:
    """Contiguous sub-sequence of ``size`` snapshots ending at timestamp ``end``."""
    if size < 1:
        raise ValueError("window size must be positive")
    start = end - size + 1
    if start < seq.first or end > seq.last:
        raise GraphDataError(
            f"insufficient history: window [{start}, {end}] not inside [{seq.first}, {seq.last}]"
        )
    i = start - seq.first
    return GraphSequence(seq.snapshots[i : i + size], seq.node_ids)


def frobenius_distance(a: GraphSnapshot | np.ndarray, b: GraphSnapshot | np.ndarray) -> float:
    wa = a.weights if isinstance(a, GraphSnapshot) else np.asarray(a, dtype=float)
    wb = b.weights if isinstance(b, GraphSnapshot) else np.asarray(b, dtype=float)
    if wa.shape != wb.shape:
        raise ValueError(f"dimension mismatch: {wa.shape} vs {wb.shape}")
    return float(np.linalg.norm(wa - wb))


# --------------------------------------------------------------------------
# edge-list text format
#
#   # n: <count>           optional header, fixes the node count
#   # directed: true|false optional header
#   # timestamps: <a> <b>  optional header, keeps empty leading/trailing snapshots
#   <t> <src> <dst> <weight>
# --------------------------------------------------------------------------

FORMATS = ("edgelist", "edgedir")


def _sort_ids(ids: Iterable[str]) -> list[str]:
    ids = set(ids)
    if all(i.lstrip("-").isdigit() for i in ids):
        return sorted(ids, key=int)
    return sorted(ids)


def _parse_header(line: str, header: dict) -> None:
    body = line[1:].strip()
    if ":" not in body:
        return
    key, _, value = body.partition(":")
    key = key.strip().lower()
    value = value.strip()
    if key == "n":
        header["n"] = int(value)
    elif key == "directed":
        header["directed"] = value.lower() in ("1", "true", "yes")
    elif key == "timestamps":
        a, b = value.split()
        header["timestamps"] = (int(a), int(b))


def _read_records(lines: Iterable[str], source: str, header: dict, records: list, t_default: int | None = None):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_header(line, header)
            continue
        parts = line.split()
        if len(parts) != 4:
            raise GraphDataError(f"{source}: parse error at line {lineno}: expected '<t> <src> <dst> <weight>'")
        try:
            t = int(parts[0])
            w = float(parts[3])
        except ValueError:
            raise GraphDataError(f"{source}: parse error at line {lineno}: bad timestamp or weight") from None
        if t_default is not None and t != t_default:
            raise GraphDataError(f"{source}: line {lineno} has t={t}, file is for t={t_default}")
        if not np.isfinite(w):
            raise GraphDataError(f"{source}: non-finite weight at line {lineno}")
        if w < 0:
            raise GraphDataError(f"{source}: negative weight at line {lineno}")
        records.append((t, parts[1], parts[2], w, lineno, source))


def load_sequence(path: str | os.PathLike, format: str | None = None, directed: bool | None = None) -> GraphSequence:
    """Read a sequence from an edge-list file or a directory of ``t<index>.edges`` files.

    ``format`` is ``"edgelist"`` or ``"edgedir"``; ``None`` picks by path type.
    ``directed=None`` uses the file header if present, else infers undirected
    when every snapshot is symmetric. Undirected records are mirrored.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = "edgedir" if path.is_dir() else "edgelist"
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")

    header: dict = {}
    records: list = []
    if format == "edgelist":
        with open(path) as fh:
            _read_records(fh, str(path), header, records)
    else:
        files = []
        for f in path.iterdir():
            if f.suffix == ".edges" and f.stem.startswith("t") and f.stem[1:].lstrip("-").isdigit():
                files.append((int(f.stem[1:]), f))
        if not files:
            raise GraphDataError(f"{path}: no t<index>.edges files found")
        files.sort()
        ts = [t for t, _ in files]
        header["timestamps"] = (ts[0], ts[-1])
        for t, f in files:
            with open(f) as fh:
                _read_records(fh, str(f), header, records, t_default=t)

    if "timestamps" in header:
        t0, t1 = header["timestamps"]
    elif records:
        t0 = min(r[0] for r in records)
        t1 = max(r[0] for r in records)
    else:
        raise GraphDataError(f"{path}: no edges and no timestamps header")

    declared_n = header.get("n")
    ids = {r[1] for r in records} | {r[2] for r in records}
    if declared_n is not None:
        all_int = all(i.lstrip("-").isdigit() for i in ids)
        if not all_int:
            raise GraphDataError(f"{path}: '# n:' header requires integer node ids")
        for t, s, d, _, lineno, source in records:
            for node in (s, d):
                if not 0 <= int(node) < declared_n:
                    raise GraphDataError(
                        f"{source}: node count mismatch at line {lineno}: node {node} at t={t} but n={declared_n}"
                    )
        order = [str(i) for i in range(declared_n)]
    else:
        order = _sort_ids(ids)
    index = {node: i for i, node in enumerate(order)}
    n = len(order)
    if n == 0:
        raise GraphDataError(f"{path}: empty node set")

    mats = np.zeros((t1 - t0 + 1, n, n))
    for t, s, d, w, lineno, source in records:
        if not t0 <= t <= t1:
            raise GraphDataError(f"{source}: timestamp {t} at line {lineno} outside declared range")
        mats[t - t0, index[s], index[d]] = w

    if directed is None:
        directed = header.get("directed")
    if directed is None:
        directed = not all(np.array_equal(m, m.T) for m in mats)
    if not directed:
        for m in mats:
            upper = np.triu(m)
            lower = np.tril(m, -1)
            # a record on either side defines the undirected weight; upper wins on conflict
            sym = np.where(upper != 0, upper, lower.T)
            m[:] = np.triu(sym) + np.triu(sym, 1).T

    snaps = tuple(GraphSnapshot(t0 + i, mats[i], directed) for i in range(len(mats)))
    return GraphSequence(snaps, tuple(order))


def _fmt(w: float) -> str:
    return format(w, ".12g")


def _edge_lines(snap: GraphSnapshot, ids: Sequence[str]) -> list[str]:
    w = snap.weights if snap.directed else np.triu(snap.weights)
    rows, cols = np.nonzero(w)
    return [f"{snap.timestamp} {ids[i]} {ids[j]} {_fmt(w[i, j])}" for i, j in zip(rows, cols)]


def save_sequence(seq: GraphSequence, path: str | os.PathLike, format: str = "edgelist",
                  comments: Sequence[str] = ()) -> Path:
    """Write ``seq`` in one of the edge-list layouts; returns the written path.

    ``comments`` are written as leading ``#`` lines (ignored by the reader).
    """
    path = Path(path)
    ids = seq.node_ids or tuple(str(i) for i in range(seq.n))
    numeric = seq.node_ids is None or list(ids) == [str(i) for i in range(seq.n)]
    head = [f"# {c}" for c in comments]
    if numeric:
        head.append(f"# n: {seq.n}")
    head.append(f"# directed: {'true' if seq.directed else 'false'}")
    if format == "edgelist":
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = head + [f"# timestamps: {seq.first} {seq.last}"]
        for s in seq:
            lines.extend(_edge_lines(s, ids))
        path.write_text("\n".join(lines) + "\n")
    elif format == "edgedir":
        path.mkdir(parents=True, exist_ok=True)
        for s in seq:
            (path / f"t{s.timestamp}.edges").write_text("\n".join(head + _edge_lines(s, ids)) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def save_snapshot(snap: GraphSnapshot, path: str | os.PathLike, node_ids: Sequence[str] | None = None,
                  comments: Sequence[str] = ()) -> Path:
    seq = GraphSequence((snap,), tuple(node_ids) if node_ids is not None else None)
    return save_sequence(seq, path, comments=comments)


def load_labels(path: str | os.PathLike) -> LabelSet:
    """Read a sidecar label file of ``<t> change`` / ``<t> event`` lines."""
    changes, events = set(), set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("change", "event"):
                raise GraphDataError(f"{path}: parse error at line {lineno}: expected '<t> change|event'")
            try:
                t = int(parts[0])
            except ValueError:
                raise GraphDataError(f"{path}: parse error at line {lineno}: bad timestamp") from None
            (changes if parts[1] == "change" else events).add(t)
    return LabelSet(frozenset(changes), frozenset(events))


def save_labels(labels: LabelSet, path: str | os.PathLike, comments: Sequence[str] = ()) -> Path:
    path = Path(path)
    rows = [(t, "change") for t in labels.change_points] + [(t, "event") for t in labels.events]
    head = "".join(f"# {c}\n" for c in comments)
    path.write_text(head + "".join(f"{t} {kind}\n" for t, kind in sorted(rows)))
    return path
