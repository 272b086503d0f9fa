"""Command-line entry point.

``surfadmit solve <config> [--fast] [--threads T] [--out DIR]``
    runs every (frequency, solver) pair and writes pattern CSVs, a
    ``summary.jsonl`` record per solve and, if enabled, figures.
``surfadmit compare <A> <B> --tol X``
    compares two pattern CSVs (or two directories of them).
``surfadmit bench <config>``
    runs the configured solvers one at a time in fresh processes and writes
    the cost report.

Exit codes: 0 success, 1 tolerance violated, 2 invalid input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import multiprocessing as mp
import sys
import threading
import time
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .mie import mie_far_field
from .postprocess import (FarFieldPattern, cut_angles, pattern_difference, rcs_deviation_db, read_pattern_csv,
                          write_pattern_csv)
from .report import (BenchmarkEntry, BenchmarkReport, SolveRecord, machine_descriptor, plot_patterns,
                     plot_sweep, split_cuts)
from .solver import SOLVERS, OperatorCache

log = logging.getLogger("surfadmit")

__all__ = ["main", "run", "compare", "RunOutcome", "pattern_name"]

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


def pattern_name(solver: str, frequency: float) -> str:
    return f"{solver}_{frequency / 1e6:.6g}MHz.csv"


@contextmanager
def thread_limit(threads: int | None):
    """Cap numba and BLAS/LAPACK worker threads for the duration of a run."""
    if not threads:
        yield
        return
    import numba
    from threadpoolctl import threadpool_limits

    before = numba.get_num_threads()
    numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    try:
        with threadpool_limits(limits=threads):
            yield
    finally:
        numba.set_num_threads(before)


def _cut_grid(cfg: RunConfig):
    th, ph, labels, sizes = [], [], [], []
    for c in cfg.cuts:
        t, p = cut_angles(c.phi_deg, c.theta_deg, cfg.cut_resolution)
        th.append(t)
        ph.append(p)
        labels.append(c.label)
        sizes.append(len(t))
    return np.concatenate(th), np.concatenate(ph), labels, sizes


def _mie_pattern(cfg: RunConfig, f: float, theta, phi) -> FarFieldPattern:
    sph = cfg.sphere
    pw = cfg.excitation
    pat = mie_far_field(sph.radius, sph.material.eps_r, f, theta, phi, k_hat=pw.k_hat, e_hat=pw.e_hat,
                        amplitude=pw.amplitude)
    c = np.asarray(sph.center)
    if np.any(c):
        # translation of the sphere away from the origin
        k = cfg.scene.exterior_medium(f).k.real
        rhat = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)
        shift = np.exp(1j * k * ((rhat - np.asarray(pw.k_hat)) @ c))
        pat = FarFieldPattern(pat.theta, pat.phi, pat.E_theta * shift, pat.E_phi * shift, f,
                              pat.incident_amplitude, "mie", pat.meta)
    return pat


def solve_job(cfg: RunConfig, f: float, solver: str, cache: OperatorCache | None,
              threads: int | None) -> tuple[SolveRecord, FarFieldPattern]:
    """One (frequency, solver) solve and its far-field cuts."""
    theta, phi, _, _ = _cut_grid(cfg)
    t0 = time.perf_counter()
    if solver == "mie":
        pat = _mie_pattern(cfg, f, theta, phi)
        el = time.perf_counter() - t0
        rec = SolveRecord("mie", f, n_scatterers=1, solve_s=el, total_s=el,
                          cond={"last_term": float(pat.meta["last_term"])})
        return rec, pat
    pw = cfg.excitation.at(f)
    kw = {"options": cfg.options, "cache": cache, "threads": threads}
    if solver == "single_source":
        kw.update(alpha=cfg.alpha, avg_weight=cfg.avg_weight, efie_testing=cfg.efie_testing)
    res = SOLVERS[solver](cfg.scene, pw, **kw)
    pat = res.far_field(theta, phi)
    return SolveRecord.from_summary(res.summary(), shared_cache=cache is not None), pat


def _warm_up() -> None:
    """Load the compiled kernels so that fill timings exclude JIT start-up."""
    from .operators import tested_operators
    from .shapes import tetrahedron
    from .mesh import build_rwg

    tested_operators(build_rwg(tetrahedron()), [1.0 + 0j], rotated=True)


def _bench_worker(cfg: RunConfig, f: float, solver: str, threads: int | None):
    with thread_limit(threads):
        _warm_up()
        return solve_job(cfg, f, solver, None, threads)


@dataclass
class RunOutcome:
    out_dir: Path
    records: list[SolveRecord] = field(default_factory=list)
    failures: list[SolveRecord] = field(default_factory=list)
    benchmark: BenchmarkReport | None = None
    figures: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class _Writer:
    """Serialises artifact writes from concurrent jobs."""

    def __init__(self, out_dir: Path, cfg: RunConfig):
        self.out_dir = out_dir
        self.patterns = out_dir / "patterns"
        self.patterns.mkdir(parents=True, exist_ok=True)
        self.summary = out_dir / "summary.jsonl"
        self.summary.write_text("")
        self._lock = threading.Lock()
        _, _, self.labels, self.sizes = _cut_grid(cfg)

    def pattern(self, rec: SolveRecord, pat: FarFieldPattern) -> str:
        name = pattern_name(rec.solver, rec.frequency_hz)
        extra = {"cuts": ",".join(self.labels), "cut_sizes": ",".join(map(str, self.sizes)),
                 "n_unknowns": rec.n_unknowns}
        with self._lock:
            write_pattern_csv(pat, self.patterns / name, extra)
        return f"patterns/{name}"

    def record(self, rec: SolveRecord) -> None:
        with self._lock, open(self.summary, "a", encoding="utf-8") as fh:
            fh.write(rec.to_json() + "\n")


def run(cfg: RunConfig, *, fast: bool = False, threads: int | None = None, out: Path | str | None = None,
        benchmark: bool | None = None) -> RunOutcome:
    """Solve every configured (frequency, solver) pair and write the artifacts.

    Default mode runs jobs one after another so outputs are reproducible;
    ``fast`` dispatches them to a pool of ``threads`` workers.  Benchmark
    runs use one fresh process per job so peak RSS is per solver and no
    operator tiles are shared.  A failing job is recorded and the sweep
    continues; ``RunOutcome.failures`` lists what went wrong.
    """
    threads = threads or cfg.threads
    bench = cfg.benchmark if benchmark is None else benchmark
    out_dir = Path(out) if out is not None else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = _Writer(out_dir, cfg)
    outcome = RunOutcome(out_dir)
    patterns: dict[float, dict[str, FarFieldPattern]] = {}
    jobs = [(f, s) for f in cfg.frequencies for s in cfg.solvers]
    pending = {f: len(cfg.solvers) for f in cfg.frequencies}
    caches: dict[float, OperatorCache] = {}
    lock = threading.Lock()

    def cache_for(f):
        if bench:
            return None
        with lock:
            return caches.setdefault(f, OperatorCache())

    def done(f, solver, result=None, error=None):
        if error is not None:
            rec = SolveRecord(solver, f, status="failed", error=f"{type(error).__name__}: {error}")
            log.error("%s at %.6g MHz failed: %s", solver, f / 1e6, error)
            outcome.failures.append(rec)
        else:
            rec, pat = result
            rec = replace(rec, pattern_file=writer.pattern(rec, pat))
            with lock:
                patterns.setdefault(f, {})[solver] = pat
            log.info("%s at %.6g MHz: N=%d, %.2f s", solver, f / 1e6, rec.n_unknowns, rec.total_s)
        writer.record(rec)
        with lock:
            outcome.records.append(rec)
            pending[f] -= 1
            if pending[f] == 0:
                caches.pop(f, None)

    def local(f, solver):
        try:
            res = solve_job(cfg, f, solver, cache_for(f), threads)
        except Exception as err:  # noqa: BLE001 - recorded, sweep continues
            done(f, solver, error=err)
        else:
            done(f, solver, res)

    with thread_limit(threads):
        if bench:
            ctx = mp.get_context("spawn")
            for f, solver in jobs:
                with ProcessPoolExecutor(max_workers=1, mp_context=ctx) as ex:
                    try:
                        res = ex.submit(_bench_worker, cfg, f, solver, threads).result()
                    except Exception as err:  # noqa: BLE001
                        done(f, solver, error=err)
                    else:
                        done(f, solver, res)
        elif fast and (threads or 1) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                list(ex.map(lambda j: local(*j), jobs))
        else:
            for f, solver in jobs:
                local(f, solver)

    if bench:
        entries = [BenchmarkEntry(r.solver, r.frequency_hz, r.n_basis, r.n_unknowns, r.fill_s, r.solve_s,
                                  r.total_s, r.peak_matrix_bytes, r.peak_rss_bytes)
                   for r in outcome.records if r.status == "ok" and r.solver != "mie"]
        if entries:
            outcome.benchmark = BenchmarkReport(tuple(entries), machine_descriptor(), threads)
            outcome.benchmark.write(out_dir)
    if cfg.plots:
        outcome.figures = _figures(cfg, out_dir, patterns, outcome.records)
    return outcome


def _figures(cfg: RunConfig, out_dir: Path, patterns, records) -> list[Path]:
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    _, _, labels, sizes = _cut_grid(cfg)
    meta = {"cuts": ",".join(labels), "cut_sizes": ",".join(map(str, sizes))}
    paths = []
    for f in sorted(patterns):
        pats = {s: FarFieldPattern(p.theta, p.phi, p.E_theta, p.E_phi, p.frequency, p.incident_amplitude,
                                   p.solver, {**p.meta, **meta}) for s, p in patterns[f].items()}
        paths.append(plot_patterns(pats, fig_dir / f"rcs_{f / 1e6:.6g}MHz.png", f"{f / 1e6:.6g} MHz"))
    if len(patterns) > 1:
        reference = "mie" if "mie" in cfg.solvers else ("pmchwt" if "pmchwt" in cfg.solvers else None)
        deviations: dict[str, dict[float, float]] = {}
        if reference:
            for f, pats in patterns.items():
                if reference not in pats:
                    continue
                for s, p in pats.items():
                    if s != reference:
                        deviations.setdefault(s, {})[f] = rcs_deviation_db(p, pats[reference])[0]
        paths.append(plot_sweep(records, deviations, fig_dir / "sweep.png", reference))
    return paths


def _pattern_files(path: Path) -> dict[str, Path]:
    if path.is_file():
        return {path.name: path}
    root = path / "patterns" if (path / "patterns").is_dir() else path
    return {p.name: p for p in sorted(root.glob("*.csv"))}


_METRICS = {"l2": "l2_rel", "max": "max_rel", "db": "max_db"}


def compare(a, b, tol: float, metric: str = "l2", out=None) -> int:
    """Compare pattern files; returns the process exit code."""
    out = out or sys.stdout
    a, b = Path(a), Path(b)
    for p in (a, b):
        if not p.exists():
            print(f"error: {p} does not exist", file=out)
            return EXIT_INPUT
    fa, fb = _pattern_files(a), _pattern_files(b)
    if a.is_file() and b.is_file():
        pairs = [(a, b)]
    else:
        names = sorted(set(fa) & set(fb))
        missing = sorted(set(fa) ^ set(fb))
        if missing:
            print(f"error: unmatched pattern files: {', '.join(missing)}", file=out)
            return EXIT_INPUT
        pairs = [(fa[n], fb[n]) for n in names]
    if not pairs:
        print("error: no pattern files to compare", file=out)
        return EXIT_INPUT
    key = _METRICS[metric]
    worst = 0.0
    for pa, pb in pairs:
        A, B = read_pattern_csv(pa), read_pattern_csv(pb)
        try:
            parts = [("all", pattern_difference(A, B))]
            if len(split_cuts(A)) > 1:
                parts += [(lab, pattern_difference(x, y))
                          for (lab, x), (_, y) in zip(split_cuts(A), split_cuts(B))]
        except ValueError as err:
            print(f"error: {pa} vs {pb}: {err}", file=out)
            return EXIT_INPUT
        for lab, d in parts:
            worst = max(worst, d[key])
            verdict = "PASS" if d[key] <= tol else "FAIL"
            print(f"{verdict} {pa.name} vs {pb.name} [{lab}]: l2_rel={d['l2_rel']:.4e} "
                  f"max_rel={d['max_rel']:.4e} max_db={d['max_db']:.4g} (tol {metric} {tol:g})", file=out)
    ok = worst <= tol
    print(f"{'PASS' if ok else 'FAIL'}: worst {metric} = {worst:.4e}, tolerance {tol:g}", file=out)
    return EXIT_OK if ok else EXIT_TOLERANCE


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfadmit", description="Dielectric scattering with the single-source "
                                "surface-admittance formulation and reference solvers.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run the configured sweep")
    s.add_argument("config", type=Path)
    s.add_argument("--fast", action="store_true", help="run (frequency, solver) jobs concurrently")
    s.add_argument("--threads", type=int, default=None, help="worker threads for assembly, BLAS and jobs")
    s.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
    c = sub.add_parser("compare", help="compare pattern CSVs")
    c.add_argument("a", type=Path)
    c.add_argument("b", type=Path, help="reference")
    c.add_argument("--tol", type=float, required=True)
    c.add_argument("--metric", choices=sorted(_METRICS), default="l2",
                   help="l2/max: relative far-field difference; db: max RCS difference")
    bp = sub.add_parser("bench", help="cost benchmark of the configured solvers")
    bp.add_argument("config", type=Path)
    bp.add_argument("--threads", type=int, default=None)
    bp.add_argument("--out", type=Path, default=None)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "compare":
        if args.tol < 0:
            print("error: --tol must be non-negative", file=sys.stderr)
            return EXIT_INPUT
        return compare(args.a, args.b, args.tol, args.metric)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "bench":
        outcome = run(cfg, threads=args.threads, out=args.out, benchmark=True)
        if outcome.benchmark:
            print(outcome.benchmark.to_text(), end="")
    else:
        outcome = run(cfg, fast=args.fast, threads=args.threads, out=args.out)
    n_ok = len(outcome.records) - len(outcome.failures)
    print(f"{n_ok} solve(s) written to {outcome.out_dir}")
    for rec in outcome.failures:
        print(f"failed: {rec.solver} at {rec.frequency_hz / 1e6:.6g} MHz: {rec.error}", file=sys.stderr)
    return EXIT_OK if outcome.ok else EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
