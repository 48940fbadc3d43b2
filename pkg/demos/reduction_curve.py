"""Residual neuron count as a function of the ball radius.

Small radii freeze most preactivation signs, so almost every ReLU row is
eliminated before the SDP is assembled; the curve shows how quickly the
solved problem grows with eps.  Pass a model JSON and input JSON to plot
your own network, otherwise the bundled toy network is used.
"""

import pathlib
import sys

import numpy as np

from lipcert.model import TargetSpec, load_input, load_model
from lipcert.reduction import reduce

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def main(argv):
    if len(argv) >= 2:
        model = load_model(argv[0])
        w0 = load_input(argv[1])
        eps_max = float(argv[2]) if len(argv) > 2 else 1.0
    else:
        model = load_model(FIXTURES / "toy_model.json")
        w0 = load_input(FIXTURES / "toy_w0.json")
        eps_max = 1.2

    print(f"model: n = {model.n} hidden units, m = {model.m} inputs")
    print(f"{'eps':>8}  {'n_plus':>6}  {'n_zero':>6}  {'n_r':>4}")
    for eps in np.linspace(0.0, eps_max, 13):
        rm = reduce(model, TargetSpec(w0, float(eps)))
        np_, nz, nr = rm.partition.sizes
        bar = "#" * nr
        print(f"{eps:8.4f}  {np_:6d}  {nz:6d}  {nr:4d}  {bar}")


if __name__ == "__main__":
    main(sys.argv[1:])
