# The integer model and its LP-format export.
from jointroute.instance import cost_matrix, generate
from jointroute.model import (
    add_subtour_cut,
    build_generalized,
    build_simplified,
    detect_subtours,
    format_lp,
    parse_lp,
    validate_solution,
)
from jointroute.exact import solve_exact

inst = generate(3, 1, seed=0)[1000]
cost = cost_matrix(inst)

# Simplified model: one binary per item/placeholder edge, degree 2 everywhere
simple = build_simplified(inst, cost)
print(len(simple.variables), "variables,", len(simple.constraints), "rows")

# Generalized model: directed travel variables plus delivery variables
general = build_generalized(inst, cost)
print(len(general.variables), "variables,", len(general.constraints), "rows")

# Subtour cuts are appended lazily; the LP text round-trips
add_subtour_cut(simple, {0, 3})
lp = format_lp(simple)
print(lp[:300])
assert format_lp(parse_lp(lp)) == lp

# Any solution can be checked against every tour constraint
sol = solve_exact(inst)
print(validate_solution(inst, sol))
print(detect_subtours(inst, sol.edges))
