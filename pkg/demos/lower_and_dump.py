"""Lower a matmul step by step and show the IR at the interesting stages."""

import argparse

from wmmagen.gpu import emit_kernel_text
from wmmagen.ir import ProblemConfig, build_naive_matmul, print_ir
from wmmagen.pipeline import module_of, run_passes
from wmmagen.transforms import TileConfig

SHOW = ("pad", "hoist", "pipeline", "finalize-pipeline")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--show", default=",".join(SHOW), help="comma separated pass names to print after")
    ap.add_argument("--max-lines", type=int, default=40, help="truncate each dump")
    args = ap.parse_args()

    problem = ProblemConfig(args.size, args.size, args.size)
    cfg = TileConfig(128, 128, 64, 64, 64, 8, 8, 128)
    wanted = set(args.show.split(","))

    def show(name, state):
        if name not in wanted:
            return
        lines = print_ir(module_of(state)).splitlines()
        print(f"==== after {name} ({len(lines)} lines) ====")
        print("\n".join(lines[:args.max_lines]))
        if len(lines) > args.max_lines:
            print(f"... {len(lines) - args.max_lines} more lines")
        print()

    result = run_passes(build_naive_matmul(problem), cfg, problem, on_pass=show)
    print("==== pass report ====")
    print(result.render())
    print("==== kernel text (head) ====")
    print("\n".join(emit_kernel_text(result.module).splitlines()[:12]))


if __name__ == "__main__":
    main()
