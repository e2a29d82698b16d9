import re
import subprocess
import sys

import pytest

from wmmagen.cli import (
    EXIT_ILLEGAL, EXIT_OK, EXIT_PASS_ERROR, EXIT_RACE, EXIT_SIM_ERROR, RunConfig, bench_report, main, parse_sweep,
    run_pipeline,
)
from wmmagen.transforms import TileConfig

from support import LISTING, SMALL, problem

SMALL_ARGS = ["--m", "128", "--n", "128", "--k", "128", "--tbm", "64", "--tbn", "64", "--tbk", "32",
              "--wm", "32", "--wn", "32", "--pad", "8", "--vec", "128"]
LISTING_ARGS = ["--m", "128", "--n", "128", "--k", "128", "--tbm", "128", "--tbn", "128", "--tbk", "64",
                "--wm", "64", "--wn", "64"]


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr().out


def values(text):
    return dict(re.findall(r"^(\w+)=(\S+)$", text, flags=re.M))


def test_simulate_and_check(capsys):
    code, out = run(SMALL_ARGS + ["--accum", "f32", "--simulate", "--check"], capsys)
    v = values(out)
    assert code == EXIT_OK
    assert v["races"] == "0" and v["check"] == "pass" and v["simulator"] == "gpu"
    assert float(v["max_rel_error"]) <= 1e-3


def test_f16_check(capsys):
    code, out = run(SMALL_ARGS + ["--accum", "f16", "--check"], capsys)
    assert code == EXIT_OK and values(out)["check"] == "pass"


def test_dump_after_pad(capsys):
    code, out = run(LISTING_ARGS + ["--dump-after", "pad", "--pipeline-stop", "pad"], capsys)
    assert code == EXIT_OK
    assert "// ----- after pad -----" in out
    assert "memref<128x72xf16, 3>" in out and "memref<64x136xf16, 3>" in out


def test_stop_after_tile(capsys):
    code, out = run(SMALL_ARGS + ["--pipeline-stop", "tile", "--emit", "ir"], capsys)
    ir = out.split("// ----- ir -----", 1)[1]
    assert code == EXIT_OK
    assert len(re.findall(r"\bfor %", ir)) == 8
    assert "global @" not in ir


def test_sequential_fallback_before_mapping(capsys):
    code, out = run(SMALL_ARGS + ["--pipeline-stop", "pipeline", "--check"], capsys)
    v = values(out)
    assert code == EXIT_OK and v["simulator"] == "sequential" and v["check"] == "pass"


def test_emit_kernel_text(capsys):
    code, out = run(LISTING_ARGS + ["--emit", "kernel-text"], capsys)
    assert code == EXIT_OK and "__shared__ half a_smem[128][72];" in out


def test_kernel_text_needs_mapping(capsys):
    code, _ = run(SMALL_ARGS + ["--pipeline-stop", "tile", "--emit", "kernel-text"], capsys)
    assert code == EXIT_PASS_ERROR


def test_illegal_config_exit_code(capsys):
    code, out = run(["--m", "100", "--tbm", "64"], capsys)
    assert code == EXIT_ILLEGAL
    assert "violation=M=100 is not a multiple of tbm=64" in out


def test_oversized_tile_exit_code(capsys):
    code, out = run(["--m", "256", "--n", "256", "--k", "256", "--tbm", "256", "--tbn", "256", "--tbk", "128"],
                    capsys)
    assert code == EXIT_ILLEGAL and "49152" in out


def test_skipped_barriers_report_races(capsys):
    code, out = run(SMALL_ARGS + ["--skip", "barriers", "--simulate"], capsys)
    assert code == EXIT_RACE
    assert int(values(out)["races"]) > 0 and "race: " in out


def test_pass_error_exit_code(capsys):
    code, out = run(SMALL_ARGS + ["--skip", "parallelize"], capsys)
    assert code == EXIT_PASS_ERROR and "error: pass map-gpu" in out


def test_machine_override(capsys):
    _, base = run(SMALL_ARGS + ["--simulate"], capsys)
    _, slow = run(SMALL_ARGS + ["--simulate", "--machine", "global_latency=800"], capsys)
    assert int(values(slow)["stall_cycles"]) == 2 * int(values(base)["stall_cycles"])


def test_bad_machine_parameter():
    with pytest.raises(SystemExit):
        main(SMALL_ARGS + ["--machine", "warp_size=64"])


def test_unknown_pass_name():
    with pytest.raises(SystemExit):
        main(SMALL_ARGS + ["--dump-after", "tiles"])


def test_stop_and_resume(tmp_path, capsys):
    code, _ = run(SMALL_ARGS + ["--dump-after", "hoist", "--dump-dir", str(tmp_path), "--pipeline-stop", "hoist"],
                  capsys)
    dump = tmp_path / "after-hoist.ir"
    assert code == EXIT_OK and dump.exists()
    _, direct = run(SMALL_ARGS + ["--simulate", "--emit", "ir"], capsys)
    _, resumed = run(SMALL_ARGS + ["--input", str(dump), "--resume-after", "hoist", "--simulate", "--emit", "ir"],
                     capsys)
    assert direct.split("// ----- simulation -----")[1] == resumed.split("// ----- simulation -----")[1]


def test_resume_from_kernel_dump(tmp_path, capsys):
    run(SMALL_ARGS + ["--dump-after", "map-gpu", "--dump-dir", str(tmp_path)], capsys)
    code, out = run(SMALL_ARGS + ["--input", str(tmp_path / "after-map-gpu.ir"), "--resume-after", "map-gpu",
                                  "--check"], capsys)
    assert code == EXIT_OK and values(out)["simulator"] == "gpu"


def test_resume_needs_input():
    with pytest.raises(SystemExit):
        main(SMALL_ARGS + ["--resume-after", "tile"])


def sweep_file(tmp_path, text):
    path = tmp_path / "sweep.txt"
    path.write_text(text)
    return str(path)


def test_sweep_pad(tmp_path, capsys):
    code, out = run(LISTING_ARGS + ["--sweep", sweep_file(tmp_path, "pad=0\npad=8\n")], capsys)
    rows = [dict(re.findall(r"(\w+)=(\S+)", ln)) for ln in out.splitlines() if ln.startswith("config=")]
    assert code == EXIT_OK
    assert int(rows[1]["bank_conflicts"]) < int(rows[0]["bank_conflicts"])


def test_sweep_vec(tmp_path, capsys):
    code, out = run(LISTING_ARGS + ["--sweep", sweep_file(tmp_path, "vec=32\nvec=64\nvec=128\n")], capsys)
    rows = [dict(re.findall(r"(\w+)=(\S+)", ln)) for ln in out.splitlines() if ln.startswith("config=")]
    tx = [int(r["global_transactions"]) for r in rows]
    assert code == EXIT_OK and tx == sorted(tx, reverse=True)


def test_single_config_is_best():
    p = problem(128)
    rc = RunConfig(p, SMALL)
    bench = bench_report(rc, [SMALL])
    assert bench.best is bench.rows[0]
    assert "best=yes" in bench.key_values()


def test_sweep_skips_illegal_rows():
    rc = RunConfig(problem(128), SMALL)
    bench = bench_report(rc, [TileConfig(128, 128, 128, 64, 64), SMALL])
    assert bench.rows[0].error is not None and bench.best is bench.rows[1]
    assert "skipped" in bench.table()


def test_parse_sweep():
    cfgs = parse_sweep("# comment\ntbm=128 pad=0\n\nvec=64 pad_b=16\n", SMALL)
    assert cfgs[0] == TileConfig(128, 64, 32, 32, 32, 0, 0, 128)
    assert cfgs[1] == TileConfig(64, 64, 32, 32, 32, 8, 16, 64)
    with pytest.raises(ValueError, match="line 1"):
        parse_sweep("colour=red", SMALL)


def test_reproducible_output(capsys):
    argv = SMALL_ARGS + ["--simulate", "--check", "--dump-after", "cse,pipeline", "--emit", "kernel-text"]
    _, a = run(argv, capsys)
    _, b = run(argv, capsys)
    assert a == b


def test_run_pipeline_api():
    outcome = run_pipeline(RunConfig(problem(128), SMALL, simulate=True))
    assert outcome.status == EXIT_OK and outcome.metrics.race_count == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "wmmagen", "--pipeline-stop", "tile"], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == EXIT_OK
    assert "tile:" in proc.stdout
