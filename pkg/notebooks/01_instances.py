# Instances: items, placeholders and the cost matrix.
import numpy as np

from jointroute.instance import Instance, cost_matrix, format_csv, generate, parse_csv

# An instance is n items and n placeholders in the plane.  Node ids: item i is
# i, placeholder p is n + p.  By default the last item and the last
# placeholder form the fixed start/goal pair.
inst = Instance(0, [(0, 0), (1, 0)], [(0, 1), (1, 1)])
print(inst.n, inst.fixed_pair)

# The cost matrix is item x placeholder Euclidean distance
cost = cost_matrix(inst)
print(cost.d)

# Seeded uniform datasets; experiment ids start at 1000 like the benchmark files
data = generate(5, 3, seed=42)
print(sorted(data))

# The CSV format is one row per experiment, 6-decimal coordinates
text = format_csv(data)
print(text.splitlines()[0][:80])
assert format_csv(parse_csv(text)) == text

# Type labels restrict which placeholder an item may be delivered to
typed = inst.with_types({0: "a", 1: "b", 2: "a", 3: "b"})
print(typed.compat())
