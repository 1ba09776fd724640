"""Time the simulation kernels under numba and under the plain-Python fallback.

Each backend runs in its own interpreter because the flag is read at import.

    python3 benchmarks/bench_kernels.py --rounds 20000 --repeat 3
"""
import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    "spa eps-greedy bandit": dict(mechanism="spa", learner={"anneal_rounds": 10_000}),
    "fpa mwu full-info": dict(mechanism="fpa", learner={"policy": "mwu", "feedback": "full_info", "eta": 2.0}),
    "fpa n=3 exp3": dict(mechanism="fpa", n=3, learner={"policy": "exp3", "eta": 0.5}),
    "vcg k=2 ucb1 cross": dict(mechanism="vcg", n=3, multipliers=(1.0, 0.5),
                               learner={"policy": "ucb1", "feedback": "cross_learning"}),
}


def measure(rounds, repeat):
    import numpy as np

    from bidlearn import backend_name
    from bidlearn.engine import make_config, run_simulation
    from bidlearn.report import regret_table

    out = {"backend": backend_name(), "cases": {}}
    for name, kw in CASES.items():
        cfg = make_config(T0=min(1000, rounds // 10), horizon=rounds, seed=1, **kw)
        # warm-up compiles (or loads cached) kernels
        run_simulation(cfg.replace(horizon=cfg.T0 + 10))
        sim, reg = [], []
        for r in range(repeat):
            t = time.perf_counter()
            log = run_simulation(cfg.replace(seed=r + 1))
            sim.append(time.perf_counter() - t)
            t = time.perf_counter()
            regret_table(log, np.array([rounds]))
            reg.append(time.perf_counter() - t)
        out["cases"][name] = {"simulate": min(sim), "regret": min(reg)}
    return out


def run_backend(flag, rounds, repeat):
    env = dict(os.environ, BIDLEARN_NUMBA=flag)
    cmd = [sys.executable, __file__, "--worker", "--rounds", str(rounds), "--repeat", str(repeat)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(measure(args.rounds, args.repeat)))
        return

    py = run_backend("0", args.rounds, args.repeat)
    nb = run_backend("1", args.rounds, args.repeat)
    print(f"{args.rounds} rounds, best of {args.repeat}")
    print(f"{'case':<24} {'stage':<9} {'python s':>10} {'numba s':>10} {'speedup':>9} {'numba rounds/s':>15}")
    for name in CASES:
        for stage in ("simulate", "regret"):
            a = py["cases"][name][stage]
            b = nb["cases"][name][stage]
            print(f"{name:<24} {stage:<9} {a:>10.3f} {b:>10.4f} {a / b:>8.1f}x {args.rounds / b:>15,.0f}")


if __name__ == "__main__":
    main()
