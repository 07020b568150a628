# Greedy construction plus 2-opt and pair-relocate local search.
from jointroute.exact import solve_exact
from jointroute.heuristics import greedy_construct, local_search, relocate_improve, two_opt_improve
from jointroute.instance import cost_matrix, generate

inst = generate(40, 1, seed=5)[1000]
cost = cost_matrix(inst)

g = greedy_construct(inst, cost, seed=0)
print("greedy", g.cost)
print("2-opt", two_opt_improve(g, cost, inst).cost)
print("relocate", relocate_improve(g, cost, inst).cost)

best = local_search(inst, restarts=8, seed=0)
opt = solve_exact(inst).cost
print(f"local search {best.cost:.4f}, optimum {opt:.4f}, gap {(best.cost - opt) / opt:.2%}")
