"""Time the compiled kernels against the pure-python twins.

The backend is chosen once at import, so each side runs in a subprocess
with FRACGAUSS_PURE set accordingly.  Usage:

    python3 benchmarks/bench_kernels.py [--chain-steps N] [--dp-atoms A]
"""
import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, os, time
import numpy as np
from fracgauss import backend

steps = {steps}
atoms = {atoms}
rng = np.random.default_rng(0)

# chaos chain: three 2x2 contractions, long index stream
mats = np.ascontiguousarray(0.45 * np.stack([np.eye(2)] * 3))
shifts = np.ascontiguousarray(rng.random((3, 2)))
idx = rng.integers(0, 3, size=steps).astype(np.int64)
out = np.empty((steps - 64, 2))
t0 = time.perf_counter()
backend.chaos_chain(mats, shifts, idx, np.zeros(2), 64, out)
t_chain = time.perf_counter() - t0

# min-plus DP sweep: one full layer stack on a random cost matrix
spans = np.triu(rng.random((atoms, atoms)) + 0.01)
cost = np.where(spans > 0, spans, np.inf)
prev = np.full(atoms + 1, np.inf)
prev[0] = 0.0
nxt = np.empty_like(prev)
t0 = time.perf_counter()
for _ in range(64):
    backend.min_plus_step(prev, cost, nxt)
    prev, nxt = nxt, prev
t_dp = time.perf_counter() - t0

print(json.dumps({{"backend": backend.BACKEND,
                   "chain_s": t_chain, "dp_s": t_dp,
                   "checksum": float(out.sum() + prev[prev < np.inf].sum())}}))
"""


def run_side(pure: bool, steps: int, atoms: int) -> dict:
    env = dict(os.environ)
    if pure:
        env["FRACGAUSS_PURE"] = "1"
    else:
        env.pop("FRACGAUSS_PURE", None)
    code = _WORKER.format(steps=steps, atoms=atoms)
    res = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chain-steps", type=int, default=2_000_000)
    ap.add_argument("--dp-atoms", type=int, default=1024)
    args = ap.parse_args()

    fast = run_side(False, args.chain_steps, args.dp_atoms)
    slow = run_side(True, args.chain_steps, args.dp_atoms)
    if abs(fast["checksum"] - slow["checksum"]) > 1e-6 * abs(slow["checksum"]):
        raise SystemExit("backends disagree; benchmark aborted")

    print(f"chaos_chain ({args.chain_steps} steps):")
    print(f"  {fast['backend']:>8}: {fast['chain_s']:.3f} s")
    print(f"  {slow['backend']:>8}: {slow['chain_s']:.3f} s"
          f"   ({slow['chain_s'] / fast['chain_s']:.1f}x)")
    print(f"min_plus_step (64 layers, {args.dp_atoms} atoms):")
    print(f"  {fast['backend']:>8}: {fast['dp_s']:.3f} s")
    print(f"  {slow['backend']:>8}: {slow['dp_s']:.3f} s"
          f"   ({slow['dp_s'] / fast['dp_s']:.1f}x)")


if __name__ == "__main__":
    main()
