"""Command-line entry point: ``generate``, ``detect``, ``predict`` and ``bench``.

Every command reads an optional JSON config (``--config``); flags override
config values. A seed is mandatory, either in the config or via ``--seed``.
Each run writes ``run.json`` (resolved config plus output paths) into
``--out``, and the resolved config is echoed inside every artifact format
that has room for it.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bench, detector, graphseq, lemcore, spectral, synth
from .detector import DetectorConfig
from .graphseq import GraphDataError
from .lemcore import HyperParams

logger = logging.getLogger("latentcpd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one command invocation."""

    seed: int
    out: Path = Path("out")
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    scenario: dict | None = None
    data: str | None = None
    labels: str | None = None
    format: str = "edgelist"
    top_k: int = 3
    t_next: int | None = None
    truth: str | None = None
    bench: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": str(self.out),
            "detector": {k: v for k, v in self.detector.to_dict().items() if k != "hp"},
            "hp": self.detector.hp.to_dict(),
            "scenario": self.scenario,
            "data": self.data,
            "labels": self.labels,
            "format": self.format,
            "top_k": self.top_k,
            "t_next": self.t_next,
            "truth": self.truth,
            "bench": self.bench,
        }

    def echo(self) -> str:
        return "config: " + json.dumps(self.to_dict(), sort_keys=True)


# -- config resolution --------------------------------------------------------

_HP_FLAGS = {"k": "k", "lambda1": "lambda1", "lambda2": "lambda2", "window": "T",
             "long_multiplier": "long_multiplier"}
_KNOWN_KEYS = {"seed", "out", "detector", "hp", "scenario", "data", "labels", "format",
               "top_k", "t_next", "truth", "bench"}


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: line {e.lineno} col {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge the config file with command-line overrides (flags win)."""
    raw = _read_config(args.config)
    seed = args.seed if args.seed is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    hp_kw = dict(raw.get("hp", {}))
    for flag, name in _HP_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            hp_kw[name] = v
    det_kw = dict(raw.get("detector", {}))
    for flag in ("alpha", "threshold", "laplacian"):
        v = getattr(args, flag, None)
        if v is not None:
            det_kw[flag] = v
    try:
        hp = HyperParams(**hp_kw)
        det = DetectorConfig(hp=hp, seed=seed, **det_kw)
    except TypeError as e:
        raise ConfigError(f"bad parameter: {e}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None

    out = args.out if args.out is not None else raw.get("out", "out")
    rc = RunConfig(
        seed=seed,
        out=Path(out),
        detector=det,
        scenario=raw.get("scenario"),
        data=getattr(args, "data", None) or raw.get("data"),
        labels=getattr(args, "labels", None) or raw.get("labels"),
        format=getattr(args, "format", None) or raw.get("format", "edgelist"),
        top_k=getattr(args, "top_k", None) or raw.get("top_k", 3),
        t_next=getattr(args, "t_next", None) if getattr(args, "t_next", None) is not None else raw.get("t_next"),
        truth=getattr(args, "truth", None) or raw.get("truth"),
        bench=raw.get("bench", {}),
    )
    if rc.format not in graphseq.FORMATS:
        raise ConfigError(f"format must be one of {graphseq.FORMATS}")
    for key in ("data", "labels", "truth"):
        p = getattr(rc, key)
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{key} path does not exist: {p}")
    return rc


def build_scenario(d: dict | None, seed: int) -> tuple[synth.ScenarioSpec, synth.SBMConfig]:
    """Scenario and base config from a scenario dict.

    With explicit ``change_points`` the dict is a full scenario description;
    otherwise it parameterises :func:`synth.default_scenario`.
    """
    d = dict(d or {})
    try:
        base = synth.SBMConfig.from_dict(d.pop("sbm", {}))
        base = replace(base, seed=seed)
        if "change_points" in d or "events" in d:
            return synth.ScenarioSpec.from_dict(d, base), base
        allowed = {"kind", "n_changes", "n_events", "warmup", "density_cycle", "drift", "preserve",
                   "event_factor", "schedule"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kind = d.pop("kind", "pure")
        if "schedule" in d and d["schedule"] is not None:
            d["schedule"] = tuple(d["schedule"])
        return synth.default_scenario(kind, base=base, **d), base
    except (TypeError, KeyError) as e:
        raise ConfigError(f"bad scenario: {e}") from None
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"bad scenario: {e}") from None


def _load_input(rc: RunConfig) -> tuple[graphseq.GraphSequence, graphseq.LabelSet | None]:
    if rc.data is not None:
        seq = graphseq.load_sequence(rc.data)
        labels = graphseq.load_labels(rc.labels) if rc.labels else None
        return seq, labels
    if rc.scenario is None:
        raise ConfigError("need either 'data' (a sequence path) or a 'scenario'")
    spec, base = build_scenario(rc.scenario, rc.seed)
    return synth.generate(spec, base)


def _write_run(rc: RunConfig, command: str, outputs: dict) -> Path:
    rc.out.mkdir(parents=True, exist_ok=True)
    path = rc.out / "run.json"
    path.write_text(json.dumps({"command": command, "config": rc.to_dict(), "outputs": outputs}, indent=2) + "\n")
    return path


# -- commands -----------------------------------------------------------------

def cmd_generate(rc: RunConfig) -> dict:
    spec, base = build_scenario(rc.scenario, rc.seed)
    seq, labels = synth.generate(spec, base)
    rc.out.mkdir(parents=True, exist_ok=True)
    comments = [rc.echo(), "scenario: " + json.dumps(spec.to_dict(), sort_keys=True)]
    name = "sequence.edges" if rc.format == "edgelist" else "sequence"
    seq_path = graphseq.save_sequence(seq, rc.out / name, rc.format, comments=comments)
    lab_path = graphseq.save_labels(labels, rc.out / "labels.txt", comments=[rc.echo()])
    print(seq_path)
    print(lab_path)
    return {"sequence": str(seq_path), "labels": str(lab_path)}


def cmd_detect(rc: RunConfig) -> dict:
    seq, labels = _load_input(rc)
    report = detector.detect_sequence(seq, rc.detector)
    rc.out.mkdir(parents=True, exist_ok=True)
    csv_path = rc.out / "report.csv"
    csv_path.write_text(report.to_csv())
    doc = json.loads(report.to_json())
    doc["run"] = rc.to_dict()
    json_path = rc.out / "report.json"
    json_path.write_text(json.dumps(doc, indent=2) + "\n")
    K = min(rc.top_k, len(report))
    top = detector.rank_topk(report, K)
    z = {r.timestamp: r.z for r in report.records}
    print(f"top-{K}: " + " ".join(f"{t}({z[t]:.4f})" for t in top))
    print(f"flagged: {sum(r.flagged for r in report.records)} of {len(report)}")
    if labels is not None and labels.change_points:
        print(f"HR@{K}: {bench.hit_ratio(report, labels, K):.3f}")
    return {"csv": str(csv_path), "json": str(json_path)}


def cmd_predict(rc: RunConfig) -> dict:
    seq, _ = _load_input(rc)
    hp = rc.detector.hp
    t_next = rc.t_next if rc.t_next is not None else seq.last + 1
    end = t_next - 1
    if end > seq.last:
        raise GraphDataError(f"no history up to t={end}")
    rng = np.random.default_rng(rc.seed)
    short = graphseq.window(seq, end, hp.T)
    guide = None
    if hp.lambda2 > 0:
        long_seq = graphseq.window(seq, end, hp.long_window).stack()
        guide = lemcore.fit_longterm(long_seq, lemcore.adaptive_weights(long_seq), hp, rng=rng)
    state, trace = lemcore.fit(short, guide, hp, rng=rng)
    mode = detector.resolve_mode(seq, rc.detector.laplacian)
    pred = lemcore.predict_next(state, t_next, directed=(mode == "directed"))
    rc.out.mkdir(parents=True, exist_ok=True)
    path = graphseq.save_snapshot(pred, rc.out / "prediction.edges", seq.node_ids, comments=[rc.echo()])
    print(path)
    out = {"prediction": str(path), "iterations": len(trace) - 1, "final_loss": trace[-1]}
    if rc.truth is not None:
        truth = graphseq.load_sequence(rc.truth)
        if t_next in truth.timestamps:
            actual = truth.at(t_next)
        elif len(truth) == 1:
            actual = truth[0]
        else:
            raise GraphDataError(f"truth has no snapshot at t={t_next}")
        if actual.n != pred.n:
            raise GraphDataError(f"truth has {actual.n} nodes, prediction has {pred.n}")
        err = bench.mae(pred, actual)
        print(f"MAE: {err:.6g}")
        out["mae"] = err
    return out


def cmd_bench(rc: RunConfig) -> dict:
    b = dict(rc.bench)
    K = int(b.get("K", rc.top_k))
    methods = tuple(b.get("methods", bench.METHODS))
    bad = set(methods) - set(bench.METHODS)
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}; expected a subset of {bench.METHODS}")
    scenarios = b.get("scenarios") or {"pure": rc.scenario or {"kind": "pure", "n_changes": 3}}
    seeds = b.get("seeds", [rc.seed])
    grid = b.get("grid")
    rows = []
    for name, sc in scenarios.items():
        for seed in seeds:
            spec, base = build_scenario(sc, seed)
            seq, labels = synth.generate(spec, base)
            cfg = replace(rc.detector, seed=seed)
            rows.extend(bench.compare_methods(seq, labels, cfg, K, name, methods))
            if grid:
                rows.extend(bench.sweep(seq, labels, cfg, grid, K, name))
    rc.out.mkdir(parents=True, exist_ok=True)
    path = rc.out / "metrics.csv"
    path.write_text(bench.metrics_csv(rows))
    for r in rows:
        print(f"{r.scenario} {r.method} {r.metric}@{r.K} seed={r.seed}: {r.value:.3f}")
    return {"metrics": str(path)}


COMMANDS = {"generate": cmd_generate, "detect": cmd_detect, "predict": cmd_predict, "bench": cmd_bench}


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentcpd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="RNG seed (required unless set in the config)")
        p.add_argument("--out", help="output directory (default: out)")

    def detection(p):
        p.add_argument("--alpha", type=float, help="Z1/Z2 trade-off in [0, 1] (default 0.2)")
        p.add_argument("--threshold", type=float, help="flagging threshold on z (default 0.5)")
        p.add_argument("--k", type=int, help="latent dimension")
        p.add_argument("--lambda1", type=float, help="transition regulariser")
        p.add_argument("--lambda2", type=float, help="long-term regulariser")
        p.add_argument("--window", type=int, help="short window size T")
        p.add_argument("--long-multiplier", type=int, help="long window = multiplier * T")
        p.add_argument("--laplacian", choices=detector.LAPLACIAN_MODES)

    p = sub.add_parser("generate", help="write a synthetic SBM scenario and its labels")
    shared(p)
    p.add_argument("--format", choices=graphseq.FORMATS)

    p = sub.add_parser("detect", help="score every admissible snapshot of a sequence")
    shared(p)
    detection(p)
    p.add_argument("--data", help="sequence path (edge-list file or directory)")
    p.add_argument("--labels", help="label file; enables the HR@K summary")
    p.add_argument("--top-k", type=int)

    p = sub.add_parser("predict", help="predict the snapshot after a window")
    shared(p)
    detection(p)
    p.add_argument("--data", help="sequence path")
    p.add_argument("--t-next", type=int, help="timestamp to predict (default: last + 1)")
    p.add_argument("--truth", help="edge list holding the actual snapshot; prints MAE")

    p = sub.add_parser("bench", help="HR@K table for the detector, its ablation and the baselines")
    shared(p)
    detection(p)
    p.add_argument("--top-k", type=int)
    return parser


def _fail(kind: str, code: int, msg) -> int:
    text = " ".join(str(msg).split())
    print(f"latentcpd: error[{kind}]: {text}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        rc = resolve(args)
        outputs = COMMANDS[args.command](rc)
        _write_run(rc, args.command, outputs)
    except ConfigError as e:
        return _fail("config", EXIT_CONFIG, e)
    except (GraphDataError, FileNotFoundError, OSError) as e:
        return _fail("data", EXIT_DATA, e)
    except (lemcore.NumericalError, spectral.PerronError, np.linalg.LinAlgError, FloatingPointError) as e:
        return _fail("numerical", EXIT_NUMERIC, e)
    except ValueError as e:
        return _fail("config", EXIT_CONFIG, e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
