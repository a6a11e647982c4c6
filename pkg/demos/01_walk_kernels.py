"""Walk kernels, collision counts and the local CLT.

Everything in the package is built on q_n(z), the law of the simple random
walk after n steps.  This script prints a few exact values, shows that the
expected number of collisions R_N of two walks grows like log(N)/pi, and
checks the local central limit theorem rate.
"""
import math

from dpre2d import walk

# exact small-n values
for n in (2, 4, 6):
    print(f"q_{n}(0) = {walk.srw_kernel(n).at((0, 0)):.10f}")

# collisions of two independent walks: R_N - log(N)/pi settles to a constant
print("\n     N        R_N    R_N - log(N)/pi")
for k in range(4, 21, 4):
    N = 2**k
    R = walk.overlap(N)
    print(f"{N:8d}  {R:9.5f}  {R - math.log(N) / math.pi:9.5f}")

# local CLT: the sup-norm error against twice the heat kernel decays like 1/n^2
ns = [2**k for k in range(4, 12)]
print(f"\nlocal CLT log-log slope: {walk.local_clt_slope(ns):.3f} (expected -2)")

# the discrete Green function versus its continuum counterpart
L = 10_000
for z in [(0, 0), (10, 0), (20, 20), (60, 0)]:
    r = (math.hypot(*z) + 1) / math.sqrt(L)
    print(f"R_L(z={z}) = {walk.green_offset(L, z):.4f}   2 G(r) = {2 * walk.continuum_green((r, 0)):.4f}")
