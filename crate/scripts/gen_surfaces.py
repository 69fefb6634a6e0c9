#!/usr/bin/env python3
"""Generate the bundled D2 / D2+ potential tables.

D2+ 1s-sigma-g and 2p-sigma-u curves are the exact clamped-nuclei
one-electron energies of the hydrogen molecular ion, computed by
separating the Schrodinger equation in prolate spheroidal coordinates:
the angular equation is diagonalised in a Legendre basis, the radial one
by second-order finite differences (Richardson-extrapolated), and the
separation constants are matched by Brent root finding.

The neutral D2 ground state is a Morse fit (De = 0.1745 au,
Re = 1.401 au, a = 1.028 /au).

All energies are in hartree relative to the respective dissociation
asymptote: H(1s) + H+ for the ion, H(1s) + H(1s) for the neutral.
"""
import sys
import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

R_MIN, R_MAX, STEP = 0.4, 20.0, 0.02
LMAX = 60


def angular_constant(p, parity):
    """Lowest separation constant A of d/deta[(1-eta^2)M'] + (A + p^2 eta^2)M = 0."""
    n = LMAX + 2
    eta = np.zeros((n, n))
    for l in range(n - 1):
        c = (l + 1) / np.sqrt((2 * l + 1) * (2 * l + 3))
        eta[l, l + 1] = eta[l + 1, l] = c
    eta2 = eta @ eta
    ls = np.arange(parity, LMAX, 2)
    m = np.diag(ls * (ls + 1.0)) - p * p * eta2[np.ix_(ls, ls)]
    return np.linalg.eigvalsh(m)[0]


def radial_constant_fd(p, r, n):
    """Separation constant from the radial equation on n cell-centred points."""
    xmax = 45.0 / p + 2.0
    h = xmax / n
    xi = 1.0 + (np.arange(n) + 0.5) * h
    xf = 1.0 + np.arange(n + 1) * h  # faces
    w = xf * xf - 1.0
    diag = (w[:-1] + w[1:]) / h**2 + p * p * xi * xi - 2.0 * r * xi
    off = -w[1:-1] / h**2
    lam = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0),
                           eigvals_only=True)[0]
    return -lam


def radial_constant(p, r):
    n = 6000
    a1 = radial_constant_fd(p, r, n)
    a2 = radial_constant_fd(p, r, 2 * n)
    return (4.0 * a2 - a1) / 3.0


def electronic_energy(r, parity):
    f = lambda p: radial_constant(p, r) - angular_constant(p, parity)
    lo, hi = 0.3 * r, 1.3 * r
    p = brentq(f, lo, hi, xtol=1e-13, rtol=1e-13)
    return -2.0 * p * p / (r * r)


def morse(r, de=0.1745, re=1.401, a=1.028):
    return de * (1.0 - np.exp(-a * (r - re))) ** 2 - de


def write(path, header, rs, vs):
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("# R_au V_au\n")
        for r, v in zip(rs, vs):
            fh.write(f"{r:.2f} {v:.12e}\n")


def main(outdir):
    rs = np.round(np.arange(R_MIN, R_MAX + 0.5 * STEP, STEP), 10)
    g = np.array([electronic_energy(r, 0) + 1.0 / r + 0.5 for r in rs])
    u = np.array([electronic_energy(r, 1) + 1.0 / r + 0.5 for r in rs])
    write(f"{outdir}/d2plus_1ssg.dat",
          ["D2+ 1s sigma_g, exact clamped-nuclei H2+ energy",
           "zero at H(1s) + H+ asymptote"], rs, g)
    write(f"{outdir}/d2plus_2psu.dat",
          ["D2+ 2p sigma_u, exact clamped-nuclei H2+ energy",
           "zero at H(1s) + H+ asymptote"], rs, u)
    write(f"{outdir}/d2_neutral.dat",
          ["D2 X 1Sigma_g+, Morse fit De=0.1745 Re=1.401 a=1.028",
           "zero at H(1s) + H(1s) asymptote"], rs, morse(rs))


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] == "--check":
        print(electronic_energy(2.0, 0), -1.1026342144949)
        print(electronic_energy(2.0, 1), -0.6675343922023)
        print(electronic_energy(0.4, 0), electronic_energy(20.0, 0), electronic_energy(20.0, 1))
    else:
        main(sys.argv[1] if len(sys.argv) > 1 else "data")
