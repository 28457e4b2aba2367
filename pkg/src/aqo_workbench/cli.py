"""Command-line front end.

Every command writes its artifacts plus a ``manifest.json`` into ``--out``.
The manifest stores the full option snapshot, so ``replay`` can rebuild the
same artifacts from it alone.  Exit codes: 0 ok (an unsolved tuning run is a
result, not a failure), 1 internal error, 2 usage, 3 bad input, 4 size cap.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, spectrum
from .errors import GenerationError, InputError, SizeError, WorkbenchError
from .graphs import DESK_PRESET, ProblemInstance, census, generate_hard_instance
from .ising import LINEAR, Schedule, build_model
from .perturbation import analyze_instance
from .rng import child_seed
from .sampler import SamplerConfig
from .tuner import TunerConfig, histogram_csv, run, unsolved_histogram

log = logging.getLogger("aqo_workbench")

MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT_VERSION = 1
# options that do not affect results and stay out of the manifest snapshot
_VOLATILE = {"out", "config", "func", "workers", "verbose"}


class ArtifactWriter:
    """Collects artifacts under one directory, each written atomically."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: dict[str, str] = {}

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written[rel] = hashlib.sha256(data).hexdigest()
        return path

    def digest(self) -> str:
        h = hashlib.sha256()
        for rel in sorted(self.written):
            h.update(f"{rel}\0{self.written[rel]}\n".encode())
        return h.hexdigest()


def _snapshot(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _VOLATILE}


def write_manifest(out: ArtifactWriter, args: argparse.Namespace, inputs: list[str], started: float) -> dict:
    doc = {
        "version": MANIFEST_FORMAT_VERSION,
        "command": args.command,
        "config": _snapshot(args),
        "seeds": {"root": getattr(args, "seed", None)},
        "inputs": inputs,
        "outputs": [{"path": rel, "sha256": out.written[rel]} for rel in sorted(out.written)],
        "tool_version": __version__,
        "wall_clock_s": round(time.monotonic() - started, 3),
        "digest": out.digest(),
    }
    path = out.root / MANIFEST_NAME
    fd, tmp = tempfile.mkstemp(dir=out.root, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return doc


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def load_instance(path: str) -> ProblemInstance:
    try:
        return ProblemInstance.from_json(_read_text(path))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path} is not a valid instance file: {exc}") from exc


def load_schedule(path: str | None) -> Schedule:
    if not path:
        return LINEAR
    try:
        return Schedule.from_json(_read_text(path))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path} is not a valid schedule file: {exc}") from exc


def parse_delta(text: str | None, n: int):
    if not text:
        return None
    if os.path.exists(text):
        text = _read_text(text)
    try:
        vals = json.loads(text) if text.strip().startswith("[") else [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise InputError(f"cannot parse delta vector: {exc}") from exc
    if len(vals) != n:
        raise InputError(f"delta has {len(vals)} entries, instance has {n} qubits")
    return [float(v) for v in vals]


def tuner_config(args) -> TunerConfig:
    return TunerConfig(
        r=args.r,
        beta_rule=args.beta_rule,
        beta=args.beta,
        max_iterations=args.max_iter,
        t_a_max=args.t_a_max,
        p_min=args.p_min,
        t_f=args.t_f,
        grid_size=args.grid,
        method=args.method,
        track_threshold=args.track_threshold,
    )


def sampler_config(args) -> SamplerConfig:
    return SamplerConfig(
        kind=args.sampler,
        r=args.r,
        s_point_rule=args.s_point,
        rho=args.rho,
        offset=args.offset,
        seed=args.seed,
        qmc_slices=args.qmc_slices,
        qmc_beta=args.qmc_beta,
        qmc_burn_in=args.qmc_burn_in,
        qmc_chains=args.qmc_chains,
    )


def cmd_generate(args, out: ArtifactWriter) -> list[str]:
    summary = {"version": 1, "params": [args.n, args.edges, args.mis], "c": args.c, "instances": [], "failures": []}
    for k in range(args.count):
        seed = child_seed(args.seed, "generate", k)
        try:
            inst = generate_hard_instance(args.n, args.edges, args.mis, seed, c=args.c, time_budget=args.time_budget)
        except GenerationError as exc:
            log.warning("instance %d skipped: %s", k, exc)
            summary["failures"].append({"index": k, "seed": seed, "reason": str(exc)})
            continue
        name = f"instance_{k:03d}.json"
        out.write(name, inst.to_json())
        cen = census(inst, sizes=[args.mis, args.mis - 1], cap=args.enum_cap)
        entry = {"index": k, "file": name, "seed": seed, "edges": len(inst.graph.edges), **cen.to_dict()}
        entry["mis_verified"] = cen.mis_unique and cen.mis_size == args.mis
        summary["instances"].append(entry)
    if not summary["instances"]:
        log.warning("no instance could be generated")
    out.write("corpus.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"generated": len(summary["instances"]), "failed": len(summary["failures"])}))
    return []


def cmd_spectrum(args, out: ArtifactWriter) -> list[str]:
    inst = load_instance(args.instance)
    sch = load_schedule(args.schedule)
    m = build_model(inst, parse_delta(args.delta, inst.n))
    prof = spectrum.gap_profile(m, sch, grid_size=args.grid, levels=args.levels, with_tracks=True, method=args.method)
    ta = spectrum.adiabatic_time(m, sch, prof, method=args.method)
    found, where = spectrum.detect_discontinuity(prof.tracks, args.track_threshold)
    out.write("spectrum.csv", prof.to_csv())
    out.write("tracks.csv", prof.tracks.to_csv())
    result = {**prof.summary(), **ta.to_dict(), "discontinuity": where if found else None}
    out.write("summary.json", json.dumps(result, sort_keys=True) + "\n")
    print(json.dumps(result, sort_keys=True))
    return [args.instance] + ([args.schedule] if args.schedule else [])


def cmd_analyze(args, out: ArtifactWriter) -> list[str]:
    inst = load_instance(args.instance)
    delta = parse_delta(args.delta, inst.n)
    analysis = analyze_instance(inst, delta=delta, depth=args.depth)
    doc = analysis.to_dict()
    doc["census"] = census(inst, cap=args.enum_cap).to_dict()
    out.write("analysis.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"lambda_star": doc["lambda_star"], "clusters": len(doc["clusters"])}))
    return [args.instance]


def _write_run(out: ArtifactWriter, prefix: str, result, tracks: bool) -> None:
    out.write(f"{prefix}run.jsonl", result.to_jsonl())
    if tracks:
        for it in result.iterations:
            out.write(f"{prefix}tracks_iter{it.kappa:02d}.csv", it.tracks_csv)


def cmd_tune(args, out: ArtifactWriter) -> list[str]:
    inst = load_instance(args.instance)
    sch = load_schedule(args.schedule)
    result = run(inst, sch, tuner_config(args), sampler_config(args), with_tracks=args.tracks)
    _write_run(out, "", result, args.tracks)
    print(json.dumps(result.summary(), sort_keys=True))
    return [args.instance] + ([args.schedule] if args.schedule else [])


def _corpus_files(path: str) -> list[Path]:
    p = Path(path)
    if p.is_file():
        return [p]
    if not p.is_dir():
        raise InputError(f"corpus {path} does not exist")
    files = sorted(p.glob("instance_*.json"))
    if not files:
        raise InputError(f"no instance_*.json files in {path}")
    return files


def _batch_one(job):
    path, tcfg, scfg, sch_text, tracks, caps = job
    spectrum.set_caps(*caps)
    try:
        inst = ProblemInstance.from_json(Path(path).read_text())
        sch = Schedule.from_json(sch_text) if sch_text else LINEAR
        return run(inst, sch, tcfg, scfg, with_tracks=tracks), None
    except (WorkbenchError, ValueError, KeyError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_batch(args, out: ArtifactWriter) -> list[str]:
    files = _corpus_files(args.corpus)
    sch_text = _read_text(args.schedule) if args.schedule else None
    tcfg, scfg = tuner_config(args), sampler_config(args)
    caps = (spectrum.DENSE_CAP, spectrum.ITERATIVE_CAP)
    jobs = [(str(f), tcfg, scfg, sch_text, args.tracks, caps) for f in files]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_batch_one, jobs))
    else:
        results = [_batch_one(j) for j in jobs]
    runs = []
    per_instance = []
    for f, (res, err) in zip(files, results):
        runs.append(res)
        entry = {"instance": f.name}
        if err is not None:
            log.warning("%s failed: %s", f.name, err)
            entry.update(error=err, solved=False, solved_at=None)
        else:
            _write_run(out, f"runs/{f.stem}/", res, args.tracks)
            entry.update(solved=res.solved, solved_at=res.solved_at, t_a_first=res.iterations[0].verdict["t_a"])
        per_instance.append(entry)
    max_round = args.max_iter + 1
    hist = unsolved_histogram(runs, max_round)
    out.write("histogram.csv", histogram_csv(hist))
    solved = [r.solved_at for r in runs if r is not None and r.solved]
    summary = {
        "version": 1,
        "instances": len(files),
        "solved": len(solved),
        "max_rounds": max(solved) if solved else None,
        "mean_rounds": round(sum(solved) / len(solved), 6) if solved else None,
        "per_instance": per_instance,
    }
    out.write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({k: summary[k] for k in ("instances", "solved", "max_rounds", "mean_rounds")}))
    return [str(f) for f in files]


def cmd_replay(args, out: ArtifactWriter) -> list[str]:
    try:
        manifest = json.loads(_read_text(args.manifest))
        command, config = manifest["command"], dict(manifest["config"])
    except (KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"{args.manifest} is not a manifest: {exc}") from exc
    if command == "replay" or command not in COMMANDS:
        raise InputError(f"cannot replay command {command!r}")
    inner = argparse.Namespace(**config, out=args.out, workers=1, config=None, verbose=False)
    spectrum.set_caps(config.get("dense_cap"), config.get("iterative_cap"))
    inner_out = ArtifactWriter(Path(args.out))
    started = time.monotonic()
    inputs = COMMANDS[command](inner, inner_out)
    doc = write_manifest(inner_out, inner, inputs, started)
    same = doc["digest"] == manifest["digest"]
    print(json.dumps({"replayed": command, "digest": doc["digest"], "matches": same}))
    if not same:
        raise WorkbenchError("replayed outputs differ from the manifest digest")
    return []


COMMANDS = {
    "generate": cmd_generate,
    "spectrum": cmd_spectrum,
    "analyze": cmd_analyze,
    "tune": cmd_tune,
    "batch": cmd_batch,
    "replay": cmd_replay,
}


def _add_spectral(p: argparse.ArgumentParser, grid: int) -> None:
    p.add_argument("--schedule", help="tabulated schedule JSON (default: linear)")
    p.add_argument("--grid", type=int, default=grid, help="points in the s grid")
    p.add_argument("--method", choices=["auto", "dense", "iterative"], default="auto")
    p.add_argument("--track-threshold", type=float, default=0.5, help="track jump that counts as a discontinuity")


def _add_tuning(p: argparse.ArgumentParser) -> None:
    d, s = TunerConfig(), SamplerConfig()
    _add_spectral(p, d.grid_size)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=d.max_iterations, help="maximum number of field updates")
    p.add_argument("--r", type=int, default=d.r, help="samples per round")
    p.add_argument("--t-a-max", type=float, default=d.t_a_max)
    p.add_argument("--p-min", type=float, default=d.p_min)
    p.add_argument("--t-f", type=float, default=d.t_f)
    p.add_argument("--beta-rule", choices=["harmonic", "fixed"], default=d.beta_rule)
    p.add_argument("--beta", type=float, default=d.beta, help="exponent for the fixed rule")
    p.add_argument("--sampler", choices=["exact", "qmc"], default=s.kind)
    p.add_argument("--s-point", choices=["gap_ratio", "fixed_offset"], default=s.s_point_rule)
    p.add_argument("--rho", type=float, default=s.rho)
    p.add_argument("--offset", type=float, default=s.offset)
    p.add_argument("--qmc-slices", type=int, default=s.qmc_slices)
    p.add_argument("--qmc-beta", type=float, default=s.qmc_beta)
    p.add_argument("--qmc-burn-in", type=int, default=s.qmc_burn_in)
    p.add_argument("--qmc-chains", type=int, default=s.qmc_chains)
    p.add_argument("--tracks", action="store_true", help="write per-round sigma-z track CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aqo-workbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="artifact directory")
    common.add_argument("--config", help="JSON file whose keys mirror the long options")
    common.add_argument("--dense-cap", type=int, default=None, help="largest n for dense diagonalisation")
    common.add_argument("--iterative-cap", type=int, default=None, help="largest n for iterative diagonalisation")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="generate hard instances")
    g.add_argument("--n", type=int, default=DESK_PRESET[0])
    g.add_argument("--edges", type=int, default=DESK_PRESET[1])
    g.add_argument("--mis", type=int, default=DESK_PRESET[2])
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--c", type=float, default=2.0, help="edge penalty, must exceed 1")
    g.add_argument("--time-budget", type=float, default=None, help="seconds per instance")
    g.add_argument("--enum-cap", type=int, default=40)

    s = sub.add_parser("spectrum", parents=[common], help="gap profile, adiabatic time and tracks")
    s.add_argument("instance")
    s.add_argument("--delta", help="comma list, JSON list or file of transverse fields")
    s.add_argument("--levels", type=int, default=2)
    _add_spectral(s, 101)

    a = sub.add_parser("analyze", parents=[common], help="perturbative crossing analysis")
    a.add_argument("instance")
    a.add_argument("--delta")
    a.add_argument("--depth", type=int, default=2)
    a.add_argument("--enum-cap", type=int, default=40)

    t = sub.add_parser("tune", parents=[common], help="tune transverse fields on one instance")
    t.add_argument("instance")
    _add_tuning(t)

    b = sub.add_parser("batch", parents=[common], help="tune a corpus and tabulate unsolved counts")
    b.add_argument("corpus", help="directory of instance_*.json files")
    b.add_argument("--workers", type=int, default=1)
    _add_tuning(b)

    r = sub.add_parser("replay", parents=[common], help="rerun a command from its manifest")
    r.add_argument("manifest")
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot load config {args.config}: {exc}")
        known = vars(args)
        unknown = [k for k in cfg if k.replace("-", "_") not in known]
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    spectrum.set_caps(args.dense_cap, args.iterative_cap)
    started = time.monotonic()
    try:
        out = ArtifactWriter(Path(args.out))
        inputs = COMMANDS[args.command](args, out)
        if args.command != "replay":
            write_manifest(out, args, inputs, started)
    except SizeError as exc:
        flag = f" (raise --{exc.cap_name.replace('_', '-')})" if exc.cap_name else ""
        print(f"error: {exc}{flag}", file=sys.stderr)
        return exc.exit_code
    except WorkbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
