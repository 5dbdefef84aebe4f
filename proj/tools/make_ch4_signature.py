#!/usr/bin/env python3
"""Regenerates data/ch4_signature.txt.

The table is a smooth band-model approximation of the CH4 absorption
structure: Gaussian features placed at the 2nu3 (~1666 nm) and nu2+nu3 /
nu3+nu4 (~2200-2400 nm) band positions listed in HITRAN. It is not a
line-by-line calculation; coefficients are in relative radiance units per
unit mixing-ratio length and are negative (absorption lowers radiance).
"""
import math

FEATURES = [  # (centre nm, width nm, relative depth)
    (1645.0, 12.0, 0.10),
    (1666.0, 8.0, 0.22),
    (1690.0, 14.0, 0.08),
    (2200.0, 18.0, 0.18),
    (2250.0, 20.0, 0.30),
    (2298.0, 10.0, 0.85),
    (2317.0, 9.0, 1.00),
    (2335.0, 12.0, 0.70),
    (2353.0, 10.0, 0.80),
    (2370.0, 11.0, 0.65),
    (2395.0, 16.0, 0.40),
    (2430.0, 22.0, 0.22),
    (2470.0, 25.0, 0.12),
]


def coefficient(wl):
    return -sum(d * math.exp(-0.5 * ((wl - c) / w) ** 2) for c, w, d in FEATURES)


def main():
    lines = [
        "# CH4 target signature: change in radiance per unit mixing-ratio length",
        "# provenance: synthetic band-model approximation of HITRAN CH4 band positions "
        "(tools/make_ch4_signature.py); relative units",
        "# columns: wavelength_nm coefficient",
    ]
    for wl in range(350, 2551, 2):
        v = coefficient(float(wl))
        if abs(v) < 1e-12:
            v = 0.0
        lines.append(f"{wl} {v:.9e}")
    with open("data/ch4_signature.txt", "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
