"""The entropy minimum lambda on every catalog scenario.

Taut scenarios admit two routes to lambda: the ground state of a
Schrodinger operator (inverse iteration) and direct constrained
minimization of F.  With a nontrivial harmonic part of kappa only the
minimization route is available.
"""

from transflow import entropy, scenarios
from transflow.errors import ModeUnsupported

print(f"{'scenario':16s} {'lambda (eigen)':>16s} {'lambda (min)':>16s} {'lambda_bar':>12s}")
for name in scenarios.NAMES:
    dims = 32 if scenarios.CATALOG[name][0] == 2 else 12
    sc = scenarios.build(name, dims)
    mini = entropy.lambda_minimize(sc.g0, sc.model)
    try:
        eig = f"{entropy.lambda_eigen(sc.g0, sc.model).lambda_:16.10f}"
    except ModeUnsupported:
        eig = f"{'(not taut)':>16s}"
    print(f"{name:16s} {eig} {mini.lambda_:16.10f} {mini.lambda_bar:12.6f}")

# lambda_bar does not notice a constant rescaling of the metric.
sc = scenarios.build("conformal-taut", 32)
for c in (0.5, 1.0, 2.0, 10.0):
    rep = entropy.lambda_eigen(sc.g0.scaled(c), sc.model)
    print(f"c = {c:5.1f}: lambda = {rep.lambda_: .8f}, lambda_bar = {rep.lambda_bar: .12f}")
