#!/usr/bin/env python3
"""Drift certificates for every certifiable model kind on the default grid.

Prints one row per kind: c, zeta, worst grid point and its band, wall time.
Also reports the plain-sum test function s + t, which has no certificate.
"""
import argparse
import time

from twofactor.certify import GridSpec, drift_certificate_search
from twofactor.errors import CertificateNotFound
from twofactor.lyapunov import LyapunovShape
from twofactor.model import ModelKind, ModelSpec

CASES = [
    ("WW1", ModelSpec(kind=ModelKind.WW1), LyapunovShape(0.3, 1.0), "V"),
    ("WW2", ModelSpec(kind=ModelKind.WW2, beta=1.5), LyapunovShape(0.5, 1.0), "V"),
    ("MIXED_Y", ModelSpec(kind=ModelKind.MIXED_Y, beta=1.5), LyapunovShape(0.5, 1.0), "V"),
    ("TYPE_I rho=-0.6", ModelSpec(kind=ModelKind.TYPE_I, beta=1.5, rho=-0.6), LyapunovShape(0.5, 1.0), "V"),
    ("TYPE_II gamma=0.5", ModelSpec(kind=ModelKind.TYPE_II, gamma=0.5),
     LyapunovShape.for_type_ii(0.3, 1.0, 0.5, 1.0), "V"),
    ("WW1 with G0 = s + t", ModelSpec(kind=ModelKind.WW1), LyapunovShape(0.3, 1.0), "G0"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-s", type=int, default=GridSpec.n_s)
    ap.add_argument("--n-r", type=int, default=GridSpec.n_r)
    args = ap.parse_args()
    grid = GridSpec(n_s=args.n_s, n_r=args.n_r)
    print(f"{'model':22s} {'c':>10s} {'zeta':>8s}  worst point (y~, s, d) / band   time")
    for name, spec, shape, test in CASES:
        t0 = time.perf_counter()
        try:
            cert = drift_certificate_search(spec, shape, grid, test=test)
            w = cert.to_dict()["worst_point"]
            c = f"{cert.c:10.4g}" if cert.c is not None else f"{'-':>10s}"
            print(f"{name:22s} {c} {cert.zeta:8.4f}  ({w['y_tilde']:g}, {w['s']:.3g}, {w['d']:.3g}) / {w['case']}"
                  f"   {time.perf_counter() - t0:.1f}s")
        except CertificateNotFound as e:
            w = e.worst_points[0]
            print(f"{name:22s} {'none':>10s} {e.worst_margins[0]:8.3g}  ({w['y_tilde']:g}, {w['s']:.3g}, "
                  f"{w['d']:.3g}) / {w['case']}   {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
