"""
Why least squares misreads a flow-occupancy curve
==================================================

Two toy systems where ordinary least squares converges to the wrong slope:
an omitted variable that moves with occupancy, and flow feeding back into
occupancy.
"""

from fdnpiv.simulation import ovb_demo, reverse_causality_demo

# An omitted driver w with slope delta on o adds delta * alpha to the OLS slope.
for beta, alpha, delta in [(3.0, 2.0, 0.8), (3.0, 0.0, 0.8), (3.0, -2.0, 0.8)]:
    r = ovb_demo(100_000, beta, alpha, delta, seed=1)
    print(f"beta={beta:+.1f} alpha={alpha:+.1f}: OLS {r.slope:.3f}  "
          f"predicted {r.plim:.3f}  (z = {r.z_score:+.2f})")

# Simultaneity: o depends on q, so the structural error leaks into o.
for gamma in (0.5, 0.0, -0.5):
    r = reverse_causality_demo(100_000, beta=0.5, gamma=gamma, seed=1)
    print(f"gamma={gamma:+.1f}: Cov(xi, o) {r.cov:.4f} vs {r.cov_analytic:.4f};  "
          f"OLS bias {r.bias:+.4f} vs {r.bias_analytic:+.4f}")
