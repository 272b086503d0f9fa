"""Run artifacts: solve records, the cost benchmark report and figures."""

from __future__ import annotations

import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .postprocess import FarFieldPattern

__all__ = [
    "SolveRecord",
    "read_summary",
    "BenchmarkEntry",
    "BenchmarkReport",
    "REFERENCE_COSTS",
    "machine_descriptor",
    "split_cuts",
    "plot_patterns",
    "plot_sweep",
]

# Published cost figures for the 4x4 array (single_source, pmchwt); reference only.
REFERENCE_COSTS = {
    "machine": "2.5 GHz CPU, 8 cores, 16 GB",
    "n_unknowns": {"single_source": 14808, "pmchwt": 29616},
    "fill_s": {"single_source": 467.0, "pmchwt": 531.0},
    "solve_s": {"single_source": 168.0, "pmchwt": 1278.0},
    "memory_gb": {"single_source": 3.47, "pmchwt": 13.08},
}


@dataclass(frozen=True)
class SolveRecord:
    """One line of ``summary.jsonl``."""

    solver: str
    frequency_hz: float
    status: str = "ok"
    n_basis: int = 0
    n_unknowns: int = 0
    n_scatterers: int = 0
    fill_s: float = 0.0
    solve_s: float = 0.0
    total_s: float = 0.0
    peak_matrix_bytes: int = 0
    peak_rss_bytes: int = 0
    cond: dict = field(default_factory=dict)
    alpha: float | None = None
    weight: float | None = None
    shared_cache: bool = False
    pattern_file: str | None = None
    error: str | None = None

    @classmethod
    def from_summary(cls, summary: dict, **extra) -> "SolveRecord":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in {**summary, **extra}.items() if k in keys})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SolveRecord":
        return cls(**json.loads(line))


def read_summary(path) -> list[SolveRecord]:
    with open(path, encoding="utf-8") as fh:
        return [SolveRecord.from_json(line) for line in fh if line.strip()]


def machine_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    try:
        mem = os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_PHYS_PAGES") / 2**30
        mem_s = f"{mem:.1f} GB"
    except (ValueError, OSError, AttributeError):
        mem_s = "unknown memory"
    return f"{cpu}, {os.cpu_count()} logical cores, {mem_s}, {platform.system()} {platform.release()}"


@dataclass(frozen=True)
class BenchmarkEntry:
    solver: str
    frequency_hz: float
    n_basis: int
    n_unknowns: int
    fill_s: float
    solve_s: float
    total_s: float
    peak_matrix_bytes: int
    peak_rss_bytes: int

    def __post_init__(self):
        if self.peak_matrix_bytes <= 0:
            raise ValueError("benchmark memory must be positive")
        # timers overlap by at most the bookkeeping between phases
        if self.total_s < self.fill_s + self.solve_s - 1e-3:
            raise ValueError("total time is shorter than fill plus solve")


@dataclass(frozen=True)
class BenchmarkReport:
    entries: tuple[BenchmarkEntry, ...]
    machine: str
    threads: int | None = None

    def ratios(self) -> dict[float, dict[str, float]]:
        """PMCHWT over single-source cost ratios at each frequency with both solvers."""
        out = {}
        for f in sorted({e.frequency_hz for e in self.entries}):
            by = {e.solver: e for e in self.entries if e.frequency_hz == f}
            a, b = by.get("single_source"), by.get("pmchwt")
            if a and b:
                out[f] = {
                    "unknowns": b.n_unknowns / a.n_unknowns,
                    "memory": b.peak_matrix_bytes / a.peak_matrix_bytes,
                    "solve": b.solve_s / a.solve_s if a.solve_s > 0 else math.inf,
                    "fill": b.fill_s / a.fill_s if a.fill_s > 0 else math.inf,
                }
        return out

    def to_dict(self) -> dict:
        return {
            "machine": self.machine,
            "threads": self.threads,
            "entries": [asdict(e) for e in self.entries],
            "ratios": {repr(f): r for f, r in self.ratios().items()},
            "reference": REFERENCE_COSTS,
        }

    def to_text(self) -> str:
        head = (f"{'solver':<14} {'f (MHz)':>9} {'N':>7} {'unknowns':>9} {'fill (s)':>10} "
                f"{'solve (s)':>10} {'total (s)':>10} {'matrix MB':>10} {'RSS MB':>9}")
        lines = [f"machine: {self.machine}", f"threads: {self.threads or 'default'}", "", head,
                 "-" * len(head)]
        for e in self.entries:
            lines.append(f"{e.solver:<14} {e.frequency_hz / 1e6:>9.4g} {e.n_basis:>7d} {e.n_unknowns:>9d} "
                         f"{e.fill_s:>10.2f} {e.solve_s:>10.2f} {e.total_s:>10.2f} "
                         f"{e.peak_matrix_bytes / 1e6:>10.1f} {e.peak_rss_bytes / 1e6:>9.1f}")
        ratios = self.ratios()
        if ratios:
            lines += ["", "pmchwt / single_source:"]
            for f, r in ratios.items():
                lines.append(f"  {f / 1e6:.4g} MHz: unknowns {r['unknowns']:.2f}, memory {r['memory']:.2f}, "
                             f"solve {r['solve']:.2f}, fill {r['fill']:.2f}")
        ref = REFERENCE_COSTS
        lines += ["", f"published reference ({ref['machine']}; hardware dependent, not reproducible):"]
        for s in ("single_source", "pmchwt"):
            lines.append(f"  {s:<14} unknowns {ref['n_unknowns'][s]:>6d}  fill {ref['fill_s'][s]:>6.0f} s  "
                         f"solve {ref['solve_s'][s]:>6.0f} s  memory {ref['memory_gb'][s]:.2f} GB")
        m = ref["memory_gb"]["pmchwt"] / ref["memory_gb"]["single_source"]
        s = ref["solve_s"]["pmchwt"] / ref["solve_s"]["single_source"]
        lines.append(f"  reference ratios: memory {m:.2f}, solve {s:.2f}")
        lines.append("")
        lines.append("matrix MB counts live dense matrices (deterministic); RSS is the OS peak.")
        return "\n".join(lines) + "\n"

    def write(self, directory) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        txt, js = d / "benchmark.txt", d / "benchmark.json"
        txt.write_text(self.to_text())
        js.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return txt, js


def split_cuts(pattern: FarFieldPattern) -> list[tuple[str, FarFieldPattern]]:
    """Split a multi-cut CSV pattern using its ``cuts``/``cut_sizes`` header."""
    labels = [s for s in pattern.meta.get("cuts", "").split(",") if s]
    sizes = [int(s) for s in pattern.meta.get("cut_sizes", "").split(",") if s]
    if not labels or sum(sizes) != len(pattern):
        return [("all", pattern)]
    out, start = [], 0
    for lab, n in zip(labels, sizes):
        sl = slice(start, start + n)
        out.append((lab, FarFieldPattern(pattern.theta[sl], pattern.phi[sl], pattern.E_theta[sl],
                                         pattern.E_phi[sl], pattern.frequency, pattern.incident_amplitude,
                                         pattern.solver, pattern.meta)))
        start += n
    return out


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_patterns(patterns: dict[str, FarFieldPattern], path, title: str = "") -> Path:
    """RCS of several solvers, one panel per cut."""
    plt = _pyplot()
    first = next(iter(patterns.values()))
    cuts = split_cuts(first)
    fig, axes = plt.subplots(1, len(cuts), figsize=(5.0 * len(cuts), 3.6), squeeze=False, sharey=True)
    for j, (label, _) in enumerate(cuts):
        ax = axes[0, j]
        for solver, pat in patterns.items():
            part = dict(split_cuts(pat)).get(label, pat)
            if "theta" in label:
                x, xlabel = np.degrees(part.phi), "phi (deg)"
            else:
                x, xlabel = np.degrees(part.theta), "theta (deg)"
            style = {"mie": dict(color="k", lw=1.0, ls="--")}.get(solver, dict(lw=1.2))
            ax.plot(x, part.sigma_db, label=solver, **style)
        ax.set_xlabel(xlabel)
        ax.set_title(label)
        ax.grid(True, alpha=0.3)
    axes[0, 0].set_ylabel("bistatic RCS (dBsm)")
    axes[0, -1].legend(frameon=False, fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(records: list[SolveRecord], deviations: dict[str, dict[float, float]], path,
               reference: str | None) -> Path:
    """Condition estimates and worst RCS deviation from ``reference`` across frequency."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.5, 6.0), sharex=True)
    solvers = sorted({r.solver for r in records if r.status == "ok" and r.cond})
    for s in solvers:
        rs = sorted((r for r in records if r.solver == s and r.status == "ok"), key=lambda r: r.frequency_hz)
        for key in ("system", "eliminated"):
            pts = [(r.frequency_hz / 1e6, r.cond[key]) for r in rs if key in r.cond]
            if pts:
                f, c = zip(*pts)
                ax1.semilogy(f, c, marker=".", label=f"{s} ({key})")
    ax1.set_ylabel("condition estimate")
    ax1.grid(True, which="both", alpha=0.3)
    ax1.legend(frameon=False, fontsize=8)
    for s, dev in deviations.items():
        if dev:
            f = sorted(dev)
            ax2.plot(np.array(f) / 1e6, [dev[x] for x in f], marker=".", label=s)
    ax2.set_xlabel("frequency (MHz)")
    ax2.set_ylabel(f"max |RCS - {reference}| (dB)" if reference else "max RCS deviation (dB)")
    ax2.grid(True, alpha=0.3)
    if deviations:
        ax2.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
