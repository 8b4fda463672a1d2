"""Geodesics on flat cones: angular advance, conjugate points and the disc checklist.

    python demos/cone_tour.py
"""

import numpy as np

from scatlab import jacobi, metrics, riccati2d, scattering


def main():
    for slope in (0.7, 1.3):
        model = metrics.cone2d(slope)
        adv = scattering.cone_angular_advance(model, 3.0)
        pts = jacobi.conjugate_scan(model, np.array([-60.0, 0.5]), np.array([1.0, 0.0]), (0.0, 200.0))
        rep = riccati2d.rigidity_checklist(riccati2d.surface(model), j_max=32, samples=16)
        print(f"slope {slope}: advance {adv:.6f} (pi/c = {np.pi / slope:.6f}), "
              f"conjugate times {np.round(pts, 3).tolist()}, hypotheses {rep.hypotheses}")
        print(f"    boundary curvature integrals {np.round(rep.boundary_curvature, 6).tolist()} "
              f"-> 2 pi c = {2 * np.pi * slope:.6f}")


if __name__ == "__main__":
    main()
