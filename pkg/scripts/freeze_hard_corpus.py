"""Screen generated instances and freeze the ones that fail the t_a test untuned."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from aqo_workbench.graphs import generate_hard_instance
from aqo_workbench.ising import LINEAR, build_model
from aqo_workbench.spectrum import adiabatic_time, gap_profile
from aqo_workbench.tuner import DESK_EXPERIMENT


def screen(seed: int, n: int, edges: int, mis: int) -> tuple[object, dict]:
    inst = generate_hard_instance(n, edges, mis, seed)
    m = build_model(inst)
    prof = gap_profile(m, LINEAR, grid_size=DESK_EXPERIMENT["grid"], refine_tol=1e-4, method="iterative")
    ta = adiabatic_time(m, LINEAR, prof, method="iterative")
    return inst, {"seed": seed, "t_a": round(ta.t_a, 6), "g_min": round(prof.g_min, 6), "s_star": round(prof.s_star, 6)}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="tests/data/hard_n12")
    p.add_argument("--shape", type=int, nargs=3, default=(12, 18, 4), metavar=("N", "EDGES", "MIS"))
    p.add_argument("--seeds", type=int, nargs=2, default=(0, 220), metavar=("LO", "HI"))
    p.add_argument("--only", type=int, nargs="*", help="skip screening and take these seeds")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.only if args.only else range(*args.seeds)
    kept = []
    for seed in seeds:
        inst, info = screen(seed, *args.shape)
        if info["t_a"] <= DESK_EXPERIMENT["t_a_max"]:
            continue
        info["file"] = f"instance_{len(kept):03d}.json"
        (out / info["file"]).write_text(inst.to_json())
        kept.append(info)
        print(json.dumps(info), flush=True)
    index = {"shape": list(args.shape), "t_a_max": DESK_EXPERIMENT["t_a_max"], "instances": kept}
    (out / "index.json").write_text(json.dumps(index, indent=2) + "\n")


if __name__ == "__main__":
    main()
