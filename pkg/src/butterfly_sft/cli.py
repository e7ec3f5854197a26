"""Command-line front end: ``generate``, ``transform``, ``verify``, ``bench``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .butterfly import plan, transform
from .geometry import (
    PointSet,
    attach_random_charges,
    parse_geometry,
    read_pointset,
    sample_geometry,
    write_pointset,
)
from .oracle import direct_transform, estimate_direct_time, estimate_error, sample_indices
from .spatial_tree import log2_exact

log = logging.getLogger("butterfly_sft")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
CSV_HEADER = ["N", "p", "P", "T_a", "T_d", "speedup", "eps_a"]
DEFAULT_GEOMETRY = {2: ("ellipse", "ellipse"), 3: ("sphere", "torus")}
DEFAULT_DENSITY = {2: 5.0, 3: 25.0}


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    dim: int = 2
    N: int = 256
    p: int = 5
    geometry_x: str | None = None
    geometry_k: str | None = None
    density: float | None = None
    seed: int = 0
    sample: int = 200
    threads: int = 1
    out: str | None = None
    format: str = "csv"
    raw: bool = False
    n_list: list = field(default_factory=list)
    p_list: list = field(default_factory=list)
    repeats: int = 3

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise UsageError("dim must be 2 or 3")
        if self.density is None:
            self.density = DEFAULT_DENSITY[self.dim]
        gx, gk = DEFAULT_GEOMETRY[self.dim]
        self.geometry_x = self.geometry_x or gx
        self.geometry_k = self.geometry_k or gk
        for n in [self.N, *self.n_list]:
            try:
                log2_exact(n)
            except ValueError:
                raise UsageError(f"N must be a power of two, got {n}") from None
            if n < 4:
                raise UsageError("N must be at least 4")
        for p in [self.p, *self.p_list]:
            if not 3 <= p <= 15:
                raise UsageError(f"p must be in [3, 15], got {p}")
        if not self.density > 0:
            raise UsageError("density must be positive")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")


@dataclass(frozen=True)
class BenchRecord:
    N: int
    p: int
    P: int
    T_a: float
    T_d: float
    speedup: float
    eps_a: float

    def row(self, raw: bool = False) -> list[str]:
        fmt = repr if raw else (lambda v: f"{v:.2e}")
        return [str(self.N), str(self.p), fmt(float(self.P)), fmt(self.T_a), fmt(self.T_d), fmt(self.speedup), fmt(self.eps_a)]

    @classmethod
    def from_row(cls, row) -> "BenchRecord":
        return cls(int(row[0]), int(row[1]), int(round(float(row[2]))), *(float(v) for v in row[3:7]))


def format_bench_csv(records, raw: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row(raw))
    return buf.getvalue()


def parse_bench_csv(text: str) -> list[BenchRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("not a bench table")
    return [BenchRecord.from_row(r) for r in rows[1:] if r]


def _geometry_points(spec_text: str, cfg: RunConfig, N: int) -> PointSet:
    spec = parse_geometry(spec_text)
    if spec.dim != cfg.dim:
        raise UsageError(f"geometry {spec_text!r} is {spec.dim}D but --dim is {cfg.dim}")
    return sample_geometry(spec, N, cfg.density)


def make_problem(cfg: RunConfig, N: int | None = None):
    """Target and charged source point sets for a config."""
    N = N or cfg.N
    targets = _geometry_points(cfg.geometry_x, cfg, N)
    sources = attach_random_charges(_geometry_points(cfg.geometry_k, cfg, N), cfg.seed)
    return sources, targets


def _run_transform(sources, targets, p, threads):
    try:
        pl = plan(sources, targets, p)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    u = transform(pl, sources.charges, threads=threads)
    if not np.all(np.isfinite(u)):
        raise NumericalFailure("non-finite potentials")
    return u


def cmd_generate(cfg: RunConfig) -> tuple[str, str]:
    out = cfg.out or "."
    os.makedirs(out, exist_ok=True)
    sources, targets = make_problem(cfg)
    src_path = os.path.join(out, "sources.pts")
    tgt_path = os.path.join(out, "targets.pts")
    write_pointset(sources, src_path)
    write_pointset(targets, tgt_path)
    return src_path, tgt_path


def write_potentials(targets: PointSet, u: np.ndarray, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for x, v in zip(targets.points, u):
            fh.write(" ".join([*(f"{c:.17g}" for c in x), f"{v.real:.17g}", f"{v.imag:.17g}"]) + "\n")


def cmd_transform(cfg: RunConfig, sources_path=None, targets_path=None) -> np.ndarray:
    if sources_path or targets_path:
        if not (sources_path and targets_path):
            raise UsageError("give both --sources and --targets")
        sources = read_pointset(sources_path)
        targets = read_pointset(targets_path)
        if sources.charges is None:
            raise UsageError(f"{sources_path} has no charges")
        if sources.dim != targets.dim or sources.n_scale != targets.n_scale:
            raise UsageError("source and target files differ in dimension or N")
    else:
        sources, targets = make_problem(cfg)
    u = _run_transform(sources, targets, cfg.p, cfg.threads)
    if cfg.out:
        write_potentials(targets, u, cfg.out)
    return u


def verify_problem(sources, targets, p, sample=200, seed=0, threads=1):
    u = _run_transform(sources, targets, p, threads)
    idx = sample_indices(len(targets), sample, seed)
    exact = direct_transform(sources, sources.charges, targets.points[idx], targets.n_scale)
    return estimate_error(exact, u[idx], idx)


def cmd_verify(cfg: RunConfig):
    sources, targets = make_problem(cfg)
    report = verify_problem(sources, targets, cfg.p, cfg.sample, cfg.seed, cfg.threads)
    result = {"N": cfg.N, "p": cfg.p, "dim": cfg.dim, "P": max(len(sources), len(targets)), **report.as_dict()}
    return report, result


def bench_one(cfg: RunConfig, N: int, p: int) -> BenchRecord:
    sources, targets = make_problem(cfg, N)
    times = []
    for _ in range(cfg.repeats):
        t0 = time.perf_counter()
        u = _run_transform(sources, targets, p, cfg.threads)
        times.append(time.perf_counter() - t0)
    T_a = float(np.median(times))
    idx = sample_indices(len(targets), cfg.sample, cfg.seed)
    exact = direct_transform(sources, sources.charges, targets.points[idx], N)
    eps_a = estimate_error(exact, u[idx], idx).eps_a
    T_d = estimate_direct_time(sources, targets, N, min(cfg.sample, len(targets)))
    return BenchRecord(N, p, max(len(sources), len(targets)), T_a, T_d, T_d / T_a, eps_a)


def cmd_bench(cfg: RunConfig) -> list[BenchRecord]:
    n_list = cfg.n_list or [cfg.N]
    p_list = cfg.p_list or [cfg.p]
    records = []
    for p in p_list:
        for N in n_list:
            try:
                rec = bench_one(cfg, N, p)
            except NumericalFailure as exc:
                raise NumericalFailure(f"(N={N}, p={p}): {exc}") from exc
            log.info("N=%d p=%d T_a=%.3g eps_a=%.3g", N, p, rec.T_a, rec.eps_a)
            records.append(rec)
    return records


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise UsageError(f"{path}: expected key = value, got {line!r}")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


_CONVERT = {
    "dim": int, "N": int, "n": int, "p": int, "density": float, "seed": int, "sample": int,
    "threads": int, "repeats": int, "raw": lambda v: str(v).lower() in ("1", "true", "yes"),
}


def _build_config(args) -> RunConfig:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for key in ("dim", "p", "density", "seed", "sample", "threads", "out", "format", "repeats"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.geometry_x is not None:
        values["geometry_x"] = args.geometry_x
    if args.geometry_k is not None:
        values["geometry_k"] = args.geometry_k
    if args.raw:
        values["raw"] = True
    if args.n is not None:
        values["n"] = args.n
    kwargs = {}
    names = {f.name for f in fields(RunConfig)}
    for key, val in values.items():
        if key == "n":
            ns = _int_list(val)
            kwargs["N"] = ns[0]
            if len(ns) > 1 or args.command == "bench":
                kwargs["n_list"] = ns
            continue
        if key == "p" and isinstance(val, str) and "," in val or key == "p_list":
            kwargs["p_list"] = _int_list(val)
            kwargs["p"] = kwargs["p_list"][0]
            continue
        if key not in names:
            raise UsageError(f"unknown config key {key!r}")
        kwargs[key] = _CONVERT.get(key, str)(val) if isinstance(val, str) else val
    if args.command == "bench" and "p" in kwargs and "p_list" not in kwargs:
        kwargs["p_list"] = [kwargs["p"]]
    return RunConfig(**kwargs)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--dim", type=int, choices=(2, 3))
    common.add_argument("--n", help="domain size N (power of two); comma list for bench")
    common.add_argument("--p", help="grid points per axis; comma list for bench")
    common.add_argument("--geometry-x", dest="geometry_x", help="target geometry (preset, mesh:<path>, kind:k=v,...)")
    common.add_argument("--geometry-k", dest="geometry_k", help="source geometry")
    common.add_argument("--density", type=float, help="points per unit length (2D) or area (3D)")
    common.add_argument("--seed", type=int)
    common.add_argument("--sample", type=int, help="error sample size")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--threads", type=int)
    common.add_argument("--raw", action="store_true", help="full precision output")
    common.add_argument("--repeats", type=int, help="timing repeats (median)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="butterfly-sft", description="Butterfly sparse Fourier transform on curves and surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write source/target point-set files")
    tr = sub.add_parser("transform", parents=[common], help="evaluate potentials at the targets")
    tr.add_argument("--sources", help="source point-set file (with charges)")
    tr.add_argument("--targets", help="target point-set file")
    sub.add_parser("verify", parents=[common], help="compare against direct evaluation on a sample")
    sub.add_parser("bench", parents=[common], help="timing/accuracy table over N and p")
    return parser


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _build_config(args)
        if args.command == "generate":
            for path in cmd_generate(cfg):
                print(path)
        elif args.command == "transform":
            u = cmd_transform(cfg, args.sources, args.targets)
            if not cfg.out:
                for v in u:
                    print(f"{v.real:.17g} {v.imag:.17g}")
        elif args.command == "verify":
            report, result = cmd_verify(cfg)
            if cfg.format == "json":
                _emit(json.dumps(result) + "\n", cfg.out)
            else:
                line = f"N={cfg.N} p={cfg.p} P={result['P']} eps_a={report.eps_a:.3e}\n"
                _emit(line, cfg.out)
        elif args.command == "bench":
            records = cmd_bench(cfg)
            if cfg.format == "json":
                _emit(json.dumps([asdict(r) for r in records], indent=1) + "\n", cfg.out)
            else:
                _emit(format_bench_csv(records, cfg.raw), cfg.out)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
