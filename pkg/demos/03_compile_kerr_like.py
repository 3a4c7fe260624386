"""
Compiling a non-native Hamiltonian
==================================

H = i (a+ a^2 - a+^2 a) is not in the native set.  The compiler reaches it
with squeeze/cubic commutator gadgets, cancels the lower-order byproducts,
and checks the result against exp(-i H T) on the lowest Fock levels.
"""

from ionsim.compiler import OperatorExpr, parse_expr, synthesize
from ionsim.hilbert import HilbertSpace

target = parse_expr("""
# i a+ a^2 + h.c.
I 1 2 0 1
HERMITIZE
""")
print("target:", target.describe())

T = 0.05
space = HilbertSpace(5)
prev = None
for dt in (0.01, 0.005, 0.0025):
    program, report = synthesize(target, T, dt, max_depth=1, space=space)
    ratio = "" if prev is None else f"  (halving gain {prev / report.measured_error:.2f})"
    print(f"dt={dt:<7} steps={report.step_count:<6} gadgets={report.gadget_count:<5} "
          f"error={report.measured_error:.4g}  bound={report.predicted_error:.4g}{ratio}")
    prev = report.measured_error

# %% the schedule itself is plain text, one pulse per line
print("\n".join(program.to_text().splitlines()[:8]))

# %% an order-5 monomial cannot be reached with a single level of nesting
try:
    synthesize(OperatorExpr.term("I", 5, 0, 1.0, hermitize=True), 1.0, 0.01, max_depth=1)
except ValueError as exc:
    print("as expected:", exc)
