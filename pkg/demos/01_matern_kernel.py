"""How the smoothness parameter shapes the Matérn kernel."""

import numpy as np

from covgp import MaternParams, bessel_k, covariance_matrix, matern

# The kernel is built on K_nu, the modified Bessel function of the second kind.
# At half-integer orders it has elementary closed forms, e.g. K_1/2(x) = sqrt(pi/(2x)) e^-x.
x = 1.0
print("K_1/2(1) =", bessel_k(0.5, x), " closed form:", np.sqrt(np.pi / (2 * x)) * np.exp(-x))

# Correlation against distance for a few smoothness values at a fixed length-scale.
# Small nu means a rough process: the correlation drops steeply right away from zero.
d = np.array([0.0, 0.01, 0.05, 0.1, 0.3, 1.0])
print("\n d      " + "  ".join(f"{v:7.2f}" for v in d))
for nu in (0.1, 0.425, 0.5, 1.5, 2.5):
    row = matern(d, MaternParams(nu, rho=0.3))
    print(f" nu={nu:<5}" + "  ".join(f"{v:7.4f}" for v in row))

# The nugget only touches the diagonal of a self-covariance matrix.
X = np.array([[0.0], [0.1], [0.5]])
print("\nwith nugget tau2 = 0.1:\n", covariance_matrix(X, None, MaternParams(1.5, 0.3, gamma2=2.0, tau2=0.1)))
