"""Bound quality across the three multiplier classes.

The entrywise-nonnegative class (nn) contains both the doubly
hyperdominant class (ozf) and the diagonal-plus-differences class (faz),
so its bound is never worse.  The gap between them is instance dependent;
this script prints all three on the toy network and on a few random ones.
"""

import pathlib

import numpy as np

from lipcert.certify import lower_bound_pgd, upper_bound
from lipcert.model import TargetSpec, gen_random, load_input, load_model
from lipcert.multipliers import MultiplierClass

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def compare(name, model, target):
    row = {"instance": name}
    for mclass in MultiplierClass:
        gamma, _, _ = upper_bound(model, target, mclass)
        row[mclass.value] = gamma
    lb, _ = lower_bound_pgd(model, target, restarts=30, steps=300, seed=0)
    print(f"{name:>12}:  nn = {row['nn']:.6f}   ozf = {row['ozf']:.6f}   "
          f"faz = {row['faz']:.6f}   (pgd lower bound {lb:.6f})")
    assert row["nn"] <= row["ozf"] * (1 + 1e-6)
    assert row["nn"] <= row["faz"] * (1 + 1e-6)


def main():
    model = load_model(FIXTURES / "toy_model.json")
    w0 = load_input(FIXTURES / "toy_w0.json")
    compare("toy", model, TargetSpec(w0, 0.1))

    for seed in (1, 2, 3):
        model = gen_random(12, 4, 3, seed=seed)
        w0 = 0.5 * np.random.default_rng(seed).standard_normal(4)
        compare(f"random-{seed}", model, TargetSpec(w0, 0.2))


if __name__ == "__main__":
    main()
