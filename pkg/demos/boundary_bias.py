"""Boundary bias of the current status NPMLE when the monitoring times do
not reach the ends of the event time support.

U ~ U[0, 2] and V ~ U[0.5, 1.5], so G0(0.5) = 0.25.  The estimate at the
smallest monitoring time stays biased downward however large n is.

    python3 demos/boundary_bias.py
"""
from pltrans.simulate import bias_experiment

print(f"{'n':>7} {'mean G_hat(V_(1))':>18} {'P(G_hat <= 0.20)':>17} {'mean G_hat(V_(n))':>18}")
for n in (200, 2000, 20000):
    rep = bias_experiment(n, 500, seed=20050101)
    print(f"{n:>7} {rep.mean_lower:>18.4f} {rep.freq[0.05]:>17.3f} {rep.mean_upper:>18.4f}")
print(f"truth: G0(0.5) = {rep.G0_lower}, G0(1.5) = {rep.G0_upper}")
