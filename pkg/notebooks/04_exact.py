# Exact branch and bound.
from jointroute.exact import solve_exact
from jointroute.instance import generate
from jointroute.oracle import brute_force_optimum

inst = generate(32, 1, seed=32)[1000]
sol = solve_exact(inst, time_limit=60)
st = sol.stats
print(f"cost {sol.cost:.4f} nodes {st.nodes_explored} gap {st.gap:.2%} dt {st.dt:.2f}s")
print("first legs", sol.order[:8])
print("deliveries", list(sol.assignment.items())[:4])

# Small instances agree with full enumeration
small = generate(6, 1, seed=1)[1000]
print(solve_exact(small).cost, brute_force_optimum(small).cost)

# A tight time limit still returns the incumbent and a valid lower bound
big = generate(150, 1, seed=0)[1000]
quick = solve_exact(big, time_limit=2)
print(quick.stats.timed_out, quick.stats.best_bound, quick.cost)
