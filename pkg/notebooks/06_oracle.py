# Brute-force enumeration for small n.
from jointroute.instance import generate
from jointroute.oracle import brute_force_optimum, count_tours, enumerate_tours

for n in (3, 4, 5):
    print(n, count_tours(n, False), count_tours(n, True), len(set(enumerate_tours(n, True))))

inst = generate(5, 1, seed=9)[1000]
sol = brute_force_optimum(inst)
print(sol.cost, sol.order)
