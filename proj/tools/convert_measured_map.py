#!/usr/bin/env python3
"""Convert the measured flux map shipped with motulator to gradmag's CSV format.

The map belongs to a 5.6-kW PM synchronous reluctance machine; the output is
in per-unit values.

The source file is examples/drive/flux_vector/ABB_400rpm_map.mat of the
motulator source distribution (MIT license). It holds 21 x 27 grids of d- and
q-axis current (A) and flux linkage (Vs).

Usage: convert_measured_map.py ABB_400rpm_map.mat out.csv
"""
import argparse
import math

import numpy as np
from scipy.io import loadmat

# Rated values of the machine: 460 V (line-to-line rms), 8.8 A (rms), 60 Hz,
# two pole pairs. Peak-value scaling as in the per-unit system used
# throughout gradmag.
VOLTAGE_BASE = math.sqrt(2.0 / 3.0) * 460.0
CURRENT_BASE = math.sqrt(2.0) * 8.8
FREQUENCY_BASE = 60.0
POLE_PAIRS = 2


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("mat_file")
    parser.add_argument("out_csv")
    args = parser.parse_args()

    data = loadmat(args.mat_file)
    flux_base = VOLTAGE_BASE / (2.0 * math.pi * FREQUENCY_BASE)
    i_d = data["id_map"] / CURRENT_BASE
    i_q = data["iq_map"] / CURRENT_BASE
    psi_d = data["psid_map"] / flux_base
    psi_q = data["psiq_map"] / flux_base
    rows, cols = i_d.shape

    with open(args.out_csv, "w", encoding="utf-8", newline="\n") as f:
        f.write(
            f"# gradmag-dataset kind=current-grid dims={rows}x{cols} "
            f"voltage_base={VOLTAGE_BASE!r} current_base={CURRENT_BASE!r} "
            f"frequency_base={FREQUENCY_BASE!r} pole_pairs={POLE_PAIRS}\n"
        )
        f.write("psi_d,psi_q,i_d,i_q\n")
        for r in range(rows):
            for c in range(cols):
                values = (psi_d[r, c], psi_q[r, c], i_d[r, c], i_q[r, c])
                f.write(",".join(repr(float(v)) for v in values) + "\n")
    assert np.all(np.isfinite(psi_d)) and np.all(np.isfinite(psi_q))


if __name__ == "__main__":
    main()
