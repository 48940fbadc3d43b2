"""End-to-end walkthrough on the bundled toy network (6 hidden units, 3 inputs).

Each pipeline stage is run separately so its output can be inspected:
interval partition, primal bound, dual certificate, worst case, verdict.
"""

import pathlib

import numpy as np

from lipcert.certify import exactness_check, robustness_certificate, verify_worst_case
from lipcert.model import TargetSpec, classify, forward, load_input, load_model, margin
from lipcert.reduction import reduce

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def main():
    model = load_model(FIXTURES / "toy_model.json")
    w0 = load_input(FIXTURES / "toy_w0.json")
    target = TargetSpec(w0, eps=0.1)

    z0 = forward(model, w0)
    print(f"z0 = {np.round(z0, 4)}  -> class {classify(model, w0)}")
    print(f"margin at w0: {margin(model, w0):.6f}")

    rm = reduce(model, target)
    part = rm.partition
    print(f"partition (1-based): N+ = {[i + 1 for i in part.n_plus]}, "
          f"N0 = {[i + 1 for i in part.n_zero]}, Nr = {[i + 1 for i in part.n_res]}")

    cert = robustness_certificate(model, target, seed=0)
    print(f"gamma_upper = {cert.gamma_upper:.6f}")
    print(f"gamma_dual  = {cert.gamma_dual:.6f}   (gap {cert.duality_gap:.2e})")
    print(f"rank ratio  = {cert.rank_ratio:.2e}  -> exact = {cert.exact}")
    if cert.exact:
        print(f"w_star = {np.round(cert.w_star, 4)}")
        check = verify_worst_case(model, target, cert.w_star, cert.gamma_upper)
        print(f"  |w_star - w0| = {check['distance']:.6f} (eps = {target.eps})")
        print(f"  |G(w_star) - z0| = {check['deviation']:.6f}")
    print(f"PGD lower bound = {cert.lower_bound:.6f}")
    print(f"verdict: {cert.robust_verdict} "
          f"(gamma {cert.gamma_upper:.4f} vs margin {cert.margin_value:.4f})")


if __name__ == "__main__":
    main()
