"""Empirical marginals and the 1-D earth mover's distance.

Walks through the two ingredients the scenario generator is built on:
right-continuous empirical CDFs with inverse-transform sampling, and
the EMD used to score how well synthetic marginals track the training
data. Run from anywhere after `pip install -e .`:

    python3 demos/marginal_distance.py
"""
import numpy as np

from nortagrid.stats import EmpiricalMarginal, emd

heights = [0, 0, 2, 2, 3, 7]
marg = EmpiricalMarginal(heights)

print("training heights:", heights)
print(f"mean {marg.mean():.4f}  population var {marg.var():.4f}")
print()

print("right-continuous CDF (jumps at each support point):")
for v in (-1.0, 0.0, 1.9, 2.0, 3.0, 7.0):
    print(f"  F({v:4}) = {marg.cdf(v):.4f}")
print()

print("quantile is the generalized inverse, domain (0, 1]:")
for u in (0.01, 1 / 3, 0.5, 0.9, 1.0):
    print(f"  F^-1({u:.4f}) = {marg.quantile(u)}")
print()

# inverse-transform sampling reproduces the training law exactly
rng = np.random.default_rng(7)
draws = marg.quantile(rng.uniform(size=20000))
resampled = EmpiricalMarginal(draws)
print(f"EMD(training, 20k inverse-transform draws) = "
      f"{emd(marg, resampled):.4f}  (sampling noise only)")

# EMD is the area between CDFs; for point masses it is just the shift
a = EmpiricalMarginal([0.0])
b = EmpiricalMarginal([3.0])
print(f"EMD(point at 0, point at 3)              = {emd(a, b):.4f}")

# a distribution missing the tail pays for the whole displaced mass
trimmed = EmpiricalMarginal([0, 0, 2, 2, 3, 3])
print(f"EMD(training, tail replaced by a 3)      = {emd(marg, trimmed):.4f}"
      f"  (= 4/6, the 7 moved to 3 with mass 1/6)")
