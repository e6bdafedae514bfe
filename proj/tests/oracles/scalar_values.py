"""High-precision reference values frozen into the unit tests."""
from mpmath import mp, mpf, exp, tanh

mp.dps = 40

# EMI at q = 2, rho = 0.5
q, r = mpf(2), mpf("0.5")
print("chi(2, 0.5) =", (exp(q * r) - 1) / (exp(q) - 1))

# smooth Heaviside at beta = 1, eta = 0.5, rho = 0.75
b, eta, x = mpf(1), mpf("0.5"), mpf("0.75")
print("H(1, 0.5; 0.75) =", (tanh(b * eta) + tanh(b * (x - eta))) / (tanh(b * eta) + tanh(b * (1 - eta))))

# penalty integrand at rho = 0, alpha = 1, delta = 1e-9
d = mpf("1e-9")
print("d(rho=0, alpha=1, delta=1e-9) =", 4 * (0 + d) * (1 - 0 + d))
