"""Calibrate the resonator unloaded Q.

Finds the q_u at which the antenna-loaded static boresight peak sits 3 dB
below the reference antenna, the gain drop the unloaded Q is meant to
reproduce. Prints the root and the static curve metrics there.

    python3 scripts/calibrate_qu.py [--target -3.0]
"""

import argparse

import numpy as np
from scipy.optimize import brentq

from tmfa.system import boresight_sweep, build_model, peak_band


def static_peak(q_u, freqs):
    model = build_model(q_u=q_u)
    rep = boresight_sweep(model, freqs)
    return peak_band(freqs, rep.static_tx, 3.0, model.spec.f0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", type=float, default=-3.0)
    args = ap.parse_args()
    freqs = np.linspace(2.3e9, 2.5e9, 201)
    q = brentq(lambda q: static_peak(q, freqs)[0] - args.target, 100.0, 250.0, xtol=0.05)
    peak, f_peak, _, _, fbw = static_peak(q, freqs)
    print(f"q_u = {q:.2f}: peak {peak:.3f} dB at {f_peak / 1e9:.4f} GHz, "
          f"3-dB FBW {100 * fbw:.3f} %")


if __name__ == "__main__":
    main()
