"""Wall-clock comparison of the numba and numpy paths of the hot kernels.

    python3 benchmarks/bench_kernels.py [--envs 64] [--size 64] [--repeats 5]

Each kernel runs once untimed (numba compiles or loads its cache), then the
best of ``--repeats`` runs is reported. Outputs of the two paths are compared
and the script exits non-zero if they differ.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from xmodal._accel import HAVE_NUMBA
from xmodal.config import SimConfig
from xmodal.corruption import eval_spec, make_mask, policy_train_spec
from xmodal.harness.rng import derive_rng_stream
from xmodal.simkit.camera import Camera, camera_pose, raycast
from xmodal.simkit.dynamics import RobotState
from xmodal.simkit.room import pack_rooms, sample_room


def best_of(fn, repeats: int) -> float:
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def raycast_case(envs: int, size: int, level: int):
    cfg = SimConfig()
    cam = Camera(cfg, size=size)
    rooms = [sample_room(level, derive_rng_stream(0, "bench-room", i), cfg) for i in range(envs)]
    batch = pack_rooms(rooms)
    state = RobotState.at_rest([r.start for r in rooms], yaw=np.array([r.start_yaw for r in rooms]))
    origin, rot = camera_pose(state, np.zeros((envs, 6)))

    def run(backend):
        return raycast(origin, rot, cam.rays, batch, backend)[0]

    return run


def mask_case(spec, size: int, count: int):
    def run(backend):
        rng = derive_rng_stream(0, "bench-mask")
        return np.stack([make_mask(spec, size, size, rng, backend).mask for _ in range(count)])

    return run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--envs", type=int, default=64)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--level", type=int, default=10, help="obstacles per room")
    ap.add_argument("--masks", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    cases = {
        f"raycast {args.envs} envs {args.size}x{args.size} level {args.level}": raycast_case(
            args.envs, args.size, args.level
        ),
        f"policy-train masks x{args.masks}": mask_case(policy_train_spec(), args.size, args.masks),
        f"eval 50% masks x{args.masks}": mask_case(eval_spec(0.5), args.size, args.masks),
    }
    ok = True
    print(f"{'kernel':<44} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  same")
    for name, run in cases.items():
        same = np.array_equal(run("numba"), run("numpy"))
        ok &= same
        t_np = best_of(lambda: run("numpy"), args.repeats)
        t_nb = best_of(lambda: run("numba"), args.repeats)
        print(f"{name:<44} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f} {t_np / t_nb:>7.1f}x  {'yes' if same else 'NO'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
