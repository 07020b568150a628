# The 2-factor relaxation: min-cost flow with edge fixings.
import numpy as np

from jointroute.instance import cost_matrix, generate
from jointroute.relaxation import EdgeFixings, cycle_walks, masks, solve_flow
from jointroute.exact import solve_exact

inst = generate(12, 1, seed=3)[1000]
n = inst.n
d = np.ascontiguousarray(cost_matrix(inst).d)

# Without subtour constraints the cheapest degree-2 subgraph splits into cycles
base = EdgeFixings(forced={(n - 1, 2 * n - 1)})
x, _ = solve_flow(d, *masks(n, base))
bound = float((d * x).sum())
print("relaxation bound", bound)
print("cycles", [[int(v) for v in w] for w in cycle_walks(x)])

# The bound never exceeds the optimal tour
opt = solve_exact(inst).cost
print("optimum", opt, "bound gap", (opt - bound) / opt)
