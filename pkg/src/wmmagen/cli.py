"""Command-line driver: build the naive matmul, lower it, simulate, report.

Example::

    wmmagen --m 128 --n 128 --k 128 --tbm 64 --tbn 64 --tbk 32 --wm 32 --wn 32 \\
            --pad 8 --vec 128 --accum f32 --simulate --check

Everything written to stdout is deterministic for a given set of flags.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import ResourceReport, analyze
from .gpu import GpuKernel, emit_kernel_text
from .ir.builder import ProblemConfig, build_naive_matmul
from .ir.printer import print_ir
from .ir.types import ElemType
from .pipeline import PASS_NAMES, check_pass_names, load_state, module_of, run_passes
from .sim import MachineParams, SimError, SimMetrics, run_gpu, run_sequential
from .transforms import PassError, TileConfig

TOLERANCE = {ElemType.F32: 1e-3, ElemType.F16: 5e-2}
EMIT_CHOICES = ("ir", "kernel-text", "none")

EXIT_OK = 0
EXIT_PASS_ERROR = 1
EXIT_ILLEGAL = 2
EXIT_RACE = 3
EXIT_SIM_ERROR = 4
EXIT_CHECK = 5


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=lambda: ProblemConfig(128, 128, 128))
    tiles: TileConfig = field(default_factory=TileConfig)
    pipeline_stop: str | None = None
    dump_after: tuple = ()
    simulate: bool = False
    check: bool = False
    seed: int = 0
    emit: str = "none"
    machine: tuple = ()  # (name, value) overrides of MachineParams
    skip: tuple = ()
    input_ir: str | None = None
    resume_after: str | None = None
    dump_dir: str | None = None

    def __post_init__(self):
        check_pass_names([n for n in (self.pipeline_stop, self.resume_after) if n])
        check_pass_names(self.dump_after)
        check_pass_names(self.skip)
        if self.emit not in EMIT_CHOICES:
            raise ValueError(f"emit must be one of {EMIT_CHOICES}, got {self.emit!r}")

    @property
    def machine_params(self) -> MachineParams:
        return MachineParams().with_overrides(dict(self.machine))


@dataclass
class RunOutcome:
    status: int
    text: str
    final: object = None
    analysis: ResourceReport | None = None
    metrics: SimMetrics | None = None
    max_rel_error: float | None = None
    outputs: dict | None = None
    dumps: dict = field(default_factory=dict)


def make_inputs(problem: ProblemConfig, seed: int) -> dict:
    """Seeded operands: A and B uniform in [-1, 1] rounded to f16, C zero."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (problem.M, problem.K)).astype(np.float16)
    b = rng.uniform(-1.0, 1.0, (problem.K, problem.N)).astype(np.float16)
    c = np.zeros((problem.M, problem.N), dtype=problem.accum.dtype)
    return {"A": a, "B": b, "C": c}


def reference(inputs: dict) -> np.ndarray:
    a = inputs["A"].astype(np.float64)
    b = inputs["B"].astype(np.float64)
    return a @ b + inputs["C"].astype(np.float64)


def max_rel_error(out: np.ndarray, ref: np.ndarray) -> float:
    scale = float(np.max(np.abs(ref)))
    err = float(np.max(np.abs(out.astype(np.float64) - ref)))
    return err / scale if scale > 0 else err


def compile_kernel(rc: RunConfig, on_pass=None):
    """Build (or parse) the input and run the configured passes; returns the PassResult."""
    if rc.input_ir is not None:
        state = load_state(rc.input_ir)
    else:
        state = build_naive_matmul(rc.problem)
    return run_passes(state, rc.tiles, rc.problem, start_after=rc.resume_after,
                      stop=rc.pipeline_stop, skip=rc.skip, on_pass=on_pass)


def simulate(state, inputs: dict, params: MachineParams):
    """Run a kernel on the machine model, or an affine module sequentially."""
    if isinstance(state, GpuKernel):
        return run_gpu(state, inputs, params)
    return run_sequential(state, inputs), None


def run_pipeline(rc: RunConfig) -> RunOutcome:
    lines = []
    dumps = {}
    report = analyze(None, rc.tiles, rc.problem)

    def on_pass(name, state):
        if name in rc.dump_after:
            text = print_ir(module_of(state))
            dumps[name] = text
            if rc.dump_dir:
                Path(rc.dump_dir).mkdir(parents=True, exist_ok=True)
                (Path(rc.dump_dir) / f"after-{name}.ir").write_text(text, encoding="utf-8")
            else:
                lines.append(f"// ----- after {name} -----")
                lines.append(text.rstrip("\n"))

    def done(status, **kw):
        return RunOutcome(status, "\n".join(lines) + "\n", dumps=dumps, analysis=report, **kw)

    lines.append("// ----- analysis -----")
    lines.append(report.render().rstrip("\n"))
    if not report.legal:
        lines.append("error: configuration violates resource or tiling constraints")
        return done(EXIT_ILLEGAL)

    try:
        result = compile_kernel(rc, on_pass)
    except PassError as exc:
        lines.append(f"error: pass {exc.pass_name}: {exc.message}")
        return done(EXIT_PASS_ERROR)
    state = result.module
    lines.append("// ----- passes -----")
    lines.append(result.render())
    if isinstance(state, GpuKernel):
        report = analyze(state, rc.tiles, rc.problem)

    status = EXIT_OK
    metrics = outputs = err = None
    if rc.simulate or rc.check:
        inputs = make_inputs(rc.problem, rc.seed)
        try:
            outputs, metrics = simulate(state, inputs, rc.machine_params)
        except SimError as exc:
            lines.append(f"error: simulation failed: {type(exc).__name__}: {exc}")
            return done(EXIT_SIM_ERROR, final=state)
        lines.append("// ----- simulation -----")
        lines.append("simulator=" + ("gpu" if metrics is not None else "sequential"))
        if metrics is not None:
            lines.append(metrics.report().rstrip("\n"))
            for race in metrics.races[:8]:
                lines.append(f"race: {race}")
            if metrics.race_count:
                status = EXIT_RACE
        if rc.check:
            err = max_rel_error(outputs["C"], reference(inputs))
            tol = TOLERANCE[rc.problem.accum]
            ok = err <= tol
            lines.append(f"max_rel_error={err:.6e}")
            lines.append(f"tolerance={tol:.0e}")
            lines.append("check=" + ("pass" if ok else "fail"))
            if not ok and status == EXIT_OK:
                status = EXIT_CHECK

    if rc.emit == "ir":
        lines.append("// ----- ir -----")
        lines.append(print_ir(module_of(state)).rstrip("\n"))
    elif rc.emit == "kernel-text":
        if not isinstance(state, GpuKernel):
            lines.append("error: kernel text needs the pipeline to run through map-gpu")
            return done(EXIT_PASS_ERROR, final=state)
        lines.append("// ----- kernel -----")
        lines.append(emit_kernel_text(state).rstrip("\n"))
    return done(status, final=state, metrics=metrics, outputs=outputs, max_rel_error=err)


# --------------------------------------------------------------------------
# sweeps


SWEEP_KEYS = ("tbm", "tbn", "tbk", "wm", "wn", "pad", "pad_a", "pad_b", "vec")


def parse_sweep(text: str, base: TileConfig) -> list:
    """One configuration per line as ``key=value`` pairs; unset keys come from ``base``."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kw = {}
        for item in shlex.split(line):
            key, sep, value = item.partition("=")
            if not sep or key not in SWEEP_KEYS:
                raise ValueError(f"sweep line {lineno}: bad entry {item!r} (keys: {', '.join(SWEEP_KEYS)})")
            try:
                v = int(value)
            except ValueError:
                raise ValueError(f"sweep line {lineno}: {key} needs an integer, got {value!r}") from None
            if key == "pad":
                kw["padding_a"] = kw["padding_b"] = v
            elif key in ("pad_a", "pad_b"):
                kw["padding_" + key[-1]] = v
            elif key == "vec":
                kw["vector_bits"] = v
            else:
                kw[key] = v
        out.append(replace(base, **kw))
    return out


def describe(cfg: TileConfig) -> str:
    return (f"tb={cfg.tbm}x{cfg.tbn}x{cfg.tbk} warp={cfg.wm}x{cfg.wn} "
            f"pad={cfg.padding_a}/{cfg.padding_b} vec={cfg.vector_bits}")


@dataclass
class BenchRow:
    index: int
    cfg: TileConfig
    shared_bytes: int | None = None
    metrics: SimMetrics | None = None
    error: str | None = None
    best: bool = False

    @property
    def score(self) -> int:
        return self.metrics.stall_cycles + self.metrics.bank_conflicts


@dataclass
class BenchReport:
    rows: list

    @property
    def best(self) -> BenchRow | None:
        return next((r for r in self.rows if r.best), None)

    def table(self) -> str:
        head = f"{'#':>2}  {'config':<44} {'shared':>7} {'conflicts':>10} {'transactions':>13} {'stalls':>9} {'races':>6}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            if r.error is not None:
                lines.append(f"{r.index:>2}  {describe(r.cfg):<44} skipped: {r.error}")
                continue
            m = r.metrics
            mark = "  best" if r.best else ""
            lines.append(f"{r.index:>2}  {describe(r.cfg):<44} {r.shared_bytes:>7} {m.bank_conflicts:>10} "
                         f"{m.global_transactions:>13} {m.stall_cycles:>9} {m.race_count:>6}{mark}")
        return "\n".join(lines) + "\n"

    def key_values(self) -> str:
        lines = []
        for r in self.rows:
            c = r.cfg
            base = (f"config={r.index} tbm={c.tbm} tbn={c.tbn} tbk={c.tbk} wm={c.wm} wn={c.wn} "
                    f"pad_a={c.padding_a} pad_b={c.padding_b} vec={c.vector_bits}")
            if r.error is not None:
                lines.append(f"{base} status=skipped reason={shlex.quote(r.error)}")
                continue
            m = r.metrics
            lines.append(f"{base} status=ok shared_bytes={r.shared_bytes} bank_conflicts={m.bank_conflicts} "
                         f"global_transactions={m.global_transactions} stall_cycles={m.stall_cycles} "
                         f"races={m.race_count} best={'yes' if r.best else 'no'}")
        return "\n".join(lines) + "\n"


def bench_report(rc: RunConfig, sweep) -> BenchReport:
    """Lower and simulate every configuration of ``sweep`` on the same inputs."""
    inputs = make_inputs(rc.problem, rc.seed)
    rows = []
    for i, cfg in enumerate(sweep):
        row = BenchRow(i, cfg)
        rows.append(row)
        report = analyze(None, cfg, rc.problem)
        if not report.legal:
            row.error = "; ".join(report.legality)
            continue
        try:
            state = compile_kernel(replace(rc, tiles=cfg, pipeline_stop=None, resume_after=None,
                                           input_ir=None, dump_after=())).module
            _, row.metrics = run_gpu(state, inputs, rc.machine_params)
        except (PassError, SimError) as exc:
            row.error = str(exc)
            continue
        row.shared_bytes = analyze(state, cfg, rc.problem).shared_bytes
    ok = [r for r in rows if r.error is None]
    if ok:
        min(ok, key=lambda r: (r.score, r.index)).best = True
    return BenchReport(rows)


# --------------------------------------------------------------------------
# argument parsing


def _pass_list(text: str) -> tuple:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    try:
        check_pass_names(names)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return names


def _machine_item(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return key, int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{key} needs an integer, got {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wmmagen", description="Lower a matmul to a WMMA kernel and simulate it.")
    g = p.add_argument_group("problem")
    g.add_argument("--m", type=int, default=128)
    g.add_argument("--n", type=int, default=128)
    g.add_argument("--k", type=int, default=128)
    g.add_argument("--accum", choices=("f16", "f32"), default="f32", help="accumulator element type")
    g = p.add_argument_group("tiling")
    d = TileConfig()
    g.add_argument("--tbm", type=int, default=d.tbm)
    g.add_argument("--tbn", type=int, default=d.tbn)
    g.add_argument("--tbk", type=int, default=d.tbk)
    g.add_argument("--wm", type=int, default=d.wm)
    g.add_argument("--wn", type=int, default=d.wn)
    g.add_argument("--pad", type=int, default=d.padding_a, help="leading-dimension padding of both shared tiles")
    g.add_argument("--vec", type=int, choices=(0, 32, 64, 128), default=d.vector_bits,
                   help="copy vector width in bits (0 keeps scalar copies)")
    g = p.add_argument_group("pipeline")
    g.add_argument("--pipeline-stop", metavar="PASS", choices=PASS_NAMES, help="stop after this pass")
    g.add_argument("--dump-after", metavar="PASS,...", type=_pass_list, default=(),
                   help="print the IR after these passes")
    g.add_argument("--dump-dir", metavar="DIR", help="write dumps to DIR/after-<pass>.ir instead of stdout")
    g.add_argument("--skip", metavar="PASS,...", type=_pass_list, default=(), help="leave these passes out")
    g.add_argument("--input", metavar="FILE", help="start from an IR dump instead of the naive matmul")
    g.add_argument("--resume-after", metavar="PASS", choices=PASS_NAMES,
                   help="with --input: the pass the dump was taken after")
    g.add_argument("--emit", choices=EMIT_CHOICES, default="none")
    g = p.add_argument_group("simulation")
    g.add_argument("--simulate", action="store_true")
    g.add_argument("--check", action="store_true", help="compare against an f64 reference")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--machine", metavar="NAME=VALUE", type=_machine_item, action="append", default=[],
                   help="override a machine parameter, e.g. global_latency=200")
    g.add_argument("--sweep", metavar="FILE", help="simulate every configuration listed in FILE")
    return p


def config_from_args(ns) -> RunConfig:
    problem = ProblemConfig(ns.m, ns.n, ns.k, ElemType.parse(ns.accum))
    tiles = TileConfig(ns.tbm, ns.tbn, ns.tbk, ns.wm, ns.wn, ns.pad, ns.pad, ns.vec)
    input_ir = Path(ns.input).read_text(encoding="utf-8") if ns.input else None
    return RunConfig(problem, tiles, ns.pipeline_stop, tuple(ns.dump_after), ns.simulate, ns.check, ns.seed,
                     ns.emit, tuple(ns.machine), tuple(ns.skip), input_ir, ns.resume_after, ns.dump_dir)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.resume_after and not ns.input:
        parser.error("--resume-after needs --input")
    try:
        rc = config_from_args(ns)
        rc.machine_params
    except (ValueError, OSError) as exc:
        parser.error(str(exc))
    if ns.sweep:
        try:
            sweep = parse_sweep(Path(ns.sweep).read_text(encoding="utf-8"), rc.tiles)
        except (ValueError, OSError) as exc:
            parser.error(str(exc))
        bench = bench_report(rc, sweep)
        sys.stdout.write(bench.table())
        sys.stdout.write("\n")
        sys.stdout.write(bench.key_values())
        return EXIT_OK if bench.best is not None else EXIT_ILLEGAL
    outcome = run_pipeline(rc)
    sys.stdout.write(outcome.text)
    return outcome.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
