"""Fit load_scale so the default baseline run bottoms out at the target voltage.

Usage: python tools/calibrate_profiles.py [target_V]

Bisects the single scalar ``load_scale`` in the shipped profile parameter
file and rewrites it in place together with ``peak_s``.
"""
import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np  # noqa: E402

from evhil.config import scenario_defaults  # noqa: E402
from evhil.cosim import run_grid  # noqa: E402
from evhil.grid.feeder import build_default_feeder  # noqa: E402
from evhil.grid.profiles import (ProfileParams, default_profile_params_path,  # noqa: E402
                                 read_profile_params, synthesize_profiles)


def baseline(model, params, scale):
    prof = synthesize_profiles(model, ProfileParams(**{**params.__dict__, "load_scale": scale}))
    res = run_grid(scenario_defaults("grid_baseline"), model, prof)
    v = np.asarray(res.log.v)
    return float(v.min()), int(np.argmin(v))


def main(target=226.0):
    path = default_profile_params_path()
    params = read_profile_params(path)
    model = build_default_feeder()
    lo, hi = 0.2, 3.0
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        vmin, _ = baseline(model, params, mid)
        if vmin > target:
            lo = mid
        else:
            hi = mid
    scale = round(0.5 * (lo + hi), 6)
    vmin, k = baseline(model, params, scale)
    text = path.read_text()
    text = re.sub(r"(?m)^load_scale = .*$", f"load_scale = {scale}", text)
    text = re.sub(r"(?m)^peak_s = .*$", f"peak_s = {k}", text)
    path.write_text(text)
    print(f"load_scale = {scale}  baseline min {vmin:.4f} V at t = {k} s")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 226.0)
