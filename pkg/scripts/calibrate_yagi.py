"""One-time calibration of the default Yagi lengths.

Directors are held at a fixed length and the reflector and driver lengths
are solved so the driving-point impedance at f0 is 50 + j0 ohm. Prints the
total lengths in wavelengths for ``tmfa.antenna.DEFAULT_LENGTHS_WL``.

    python3 scripts/calibrate_yagi.py [--director 0.34]
"""

import argparse

import numpy as np

from tmfa import antenna
from tmfa.optimizer import SimplexConfig, nelder_mead


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--f0", type=float, default=2.4e9)
    ap.add_argument("--director", type=float, default=0.34,
                    help="director total length in wavelengths")
    args = ap.parse_args()

    def geometry(p):
        return antenna.default_geometry(args.f0, (p[0], p[1], args.director, args.director))

    def objective(p):
        z = antenna.solve_currents(geometry(p), args.f0).z_in
        return ((z.real - 50.0) / 2) ** 2 + (z.imag / 2) ** 2

    rep = nelder_mead(objective, [0.51, 0.47], SimplexConfig(step=0.02, ftol=1e-14, xtol=1e-9))
    g = geometry(rep.x)
    pat = antenna.pattern(g, args.f0)
    print("lengths_wl =", tuple(round(float(v), 8) for v in rep.x) + (args.director,) * 2)
    print("z_in =", antenna.solve_currents(g, args.f0).z_in)
    print(f"peak D = {pat.peak_dbi:.3f} dBi at theta={pat.peak_theta_deg:g} phi={pat.peak_phi_deg:g}")


if __name__ == "__main__":
    main()
