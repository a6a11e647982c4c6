"""Exact second moments in the quasi-critical window.

The variance of an averaged partition function is a finite sum over the
renewal function U, so it can be computed exactly for N up to a few
million.  Here we average over a ball of radius delta_N sqrt(N) with
delta_N = exp(-theta_N / 2) and theta_N = sqrt(log N), and watch the
variance creep towards its limit 1 as N grows (for rho = 1 the limit of
Z_N is log-normal with E[Z^2] = 2).
"""
import math

from dpre2d import experiments as ex
from dpre2d.coupling import QuasiCritical, RADEMACHER, resolve_window
from dpre2d.moments import renewal_function, variance_bounds
from dpre2d.lattice import uniform_ball

print("     N   theta_N   radius    Var Z_N    lower    upper")
for k in range(8, 19, 2):
    N = 2**k
    th = math.sqrt(math.log(N))
    w = resolve_window(QuasiCritical(th), N, RADEMACHER)
    r = ex.ball_radius(N, th)
    phi = uniform_ball(r)
    table = renewal_function(w.sigma2, N)
    lo, hi = variance_bounds(w.sigma2, N, phi, table)
    v = ex.exact_quasi_critical_variance(N)
    print(f"{N:7d}  {th:7.3f}  {r:7.2f}  {v:9.5f}  {lo:7.4f}  {hi:7.4f}")

# the renewal function itself, for the point-to-plane second moment
N = 2**12
w = resolve_window(QuasiCritical(2.0), N, RADEMACHER)
t = renewal_function(w.sigma2, N)
print(f"\npoint-to-plane E[Z_N(0)^2] at N={N}, theta_N=2: {t.barU[-1]:.4f}")
