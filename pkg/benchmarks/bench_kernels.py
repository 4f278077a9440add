"""Time the SIC frame pipeline with numba kernels and with the numpy fallback.

Each backend runs in its own interpreter because the switch is read at import.

    python benchmarks/bench_kernels.py --frames 10 --M 400
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = """
import json, sys, time
from cpasim._accel import backend_name
from cpasim.config import SystemConfig
from cpasim.sic import run_trial
M, frames, K = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3])
cfg = SystemConfig.from_scheme(1.2, 1.5, 4, K=K, M=M)
run_trial(cfg, 0)  # compile / warm caches
t = time.perf_counter()
n = sum(run_trial(cfg, i).n_decoded for i in range(1, frames + 1))
print(json.dumps({"backend": backend_name(), "seconds": time.perf_counter() - t, "decoded": int(n)}))
"""


def run(disable, M, frames, K):
    env = dict(os.environ)
    env.pop("CPASIM_DISABLE_NUMBA", None)
    if disable:
        env["CPASIM_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", CHILD, str(M), str(frames), str(K)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--M", type=int, default=400)
    ap.add_argument("--K", type=int, default=1000)
    ap.add_argument("--frames", type=int, default=10)
    args = ap.parse_args()
    fast = run(False, args.M, args.frames, args.K)
    slow = run(True, args.M, args.frames, args.K)
    for r in (fast, slow):
        print(f"{r['backend']:>6}: {r['seconds'] / args.frames * 1e3:8.1f} ms/frame  decoded={r['decoded']}")
    if fast["decoded"] != slow["decoded"]:
        print("backends disagree on the decoded count", file=sys.stderr)
        return 1
    print(f"speedup: {slow['seconds'] / fast['seconds']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
