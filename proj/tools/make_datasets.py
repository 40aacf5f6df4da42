#!/usr/bin/env python3
"""Regenerates the synthetic CSV datasets in data/ (fixed seeds).

    python3 tools/make_datasets.py [out_dir]
"""

import math
import pathlib
import sys

import numpy as np


def snr_model(length_km, r_exc, r_noise, r_dark, atten):
    t = 10.0 ** (-atten * length_km / 10.0)
    return (r_exc + r_noise) * t / (r_noise * t + r_dark)


def write(path, header, rows, comments=()):
    with open(path, "w") as f:
        for c in comments:
            f.write(f"# {c}\n")
        f.write(header + "\n")
        for r in rows:
            f.write(",".join(f"{v:.6g}" for v in r) + "\n")


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "data")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)

    # SNR versus fiber length, 1% multiplicative noise.
    r_exc, r_noise, r_dark, atten = 27736.3, 257.0, 38.0, 0.2
    lengths = [0, 5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
    rows = [(L, snr_model(L, r_exc, r_noise, r_dark, atten) * (1 + 0.01 * rng.standard_normal())) for L in lengths]
    write(out / "snr_vs_length.csv", "length_km,snr", rows,
          [f"generator: r_exc={r_exc} r_noise={r_noise} r_dark={r_dark} atten_db_per_km={atten}, 1% noise"])

    # Retrieval efficiency decay, Gaussian, absolute noise 0.004.
    rows = [(t, 0.5 * math.exp(-((t / 160.0) ** 2)) + 0.004 * rng.standard_normal()) for t in range(0, 330, 10)]
    write(out / "decay.csv", "time_us,efficiency", rows,
          ["generator: gaussian eta0=0.5 tau_us=160, absolute noise 0.004"])

    # DFG efficiency versus pump power, V arm, 2% noise.
    lc, p_peak, eta_max = 50.0, 1.749, 0.485
    alpha = (math.pi / 2) ** 2 / (p_peak * lc * lc)
    rows = []
    for p in np.arange(0.1, 3.01, 0.1):
        eta = eta_max * math.sin(math.sqrt(alpha * p) * lc) ** 2
        rows.append((p, eta * (1 + 0.02 * rng.standard_normal())))
    write(out / "dfg.csv", "pump_w,efficiency", rows,
          [f"generator: eta_max={eta_max} p_peak_w={p_peak} crystal_length_mm={lc}, 2% noise"])

    # z-basis fringe over one HWP period, raw Poisson counts (singles 0).
    settings = [k * 11.25 for k in range(8)]
    total, v = 7353.0, 0.89
    rows = [(x, rng.poisson(total / 8 * (1 + v * math.cos(math.radians(4 * x)))), 0) for x in settings]
    write(out / "fringe_z.csv", "setting,coincidences,singles", rows,
          ["generator: V=0.89 period_deg=90, 7353 expected coincidences, Poisson counts"])


if __name__ == "__main__":
    main()
