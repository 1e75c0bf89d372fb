"""Efficient information for the simulation design and the implied
asymptotic standard deviations of the coefficient estimates.

    python3 demos/efficient_information.py
"""
import numpy as np

from pltrans.information import efficient_information, hstar_series, sec9_spec

spec = sec9_spec(201)
hs = hstar_series(spec)
pieces = efficient_information(spec, hs)
print(f"alternating projection series: {hs.terms} terms, last increment {hs.last_increment:.1e}")
print("I0 =")
print(np.array2string(pieces.I0, precision=5))
for n in (400, 1600):
    sd = np.sqrt(np.diag(pieces.I0_inv) / n)
    print(f"n = {n:>4}: asymptotic SD of (beta1, beta2) = ({sd[0]:.4f}, {sd[1]:.4f})")
