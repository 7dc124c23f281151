# %% [markdown]
# # A two-objective front with NSGA-II
#
# Minimise x^2 and (x - 2)^2 over [-5, 5]. Every x in [0, 2] is
# Pareto-optimal, so the front is the curve f2 = (sqrt(f1) - 2)^2.

# %%
import numpy as np

from paretoce.moo import MooConfig, MooProblem, evolve, hypervolume

problem = MooProblem(
    [-5.0], [5.0],
    lambda X: np.column_stack([X[:, 0] ** 2, (X[:, 0] - 2) ** 2]),
    n_objectives=2,
)
trace = []
front = evolve(problem, MooConfig(population=60, generations=60, seed=0), trace=trace)
F = np.array([ind.objectives for ind in front])
print(f"{len(front)} non-dominated points, x in [{min(i.genome[0] for i in front):.3f}, "
      f"{max(i.genome[0] for i in front):.3f}]")

# %% [markdown]
# Distance to the analytic curve, and the hypervolume against (4, 4)
# compared with a dense sampling of the true curve.

# %%
gap = np.abs(F[:, 1] - (np.sqrt(np.clip(F[:, 0], 0, 4)) - 2) ** 2).max()
x = np.linspace(0, 2, 2001)
exact = hypervolume(np.column_stack([x**2, (x - 2) ** 2]), [4.0, 4.0])
print(f"max gap {gap:.4f}; hypervolume {hypervolume(F, [4.0, 4.0]):.4f} vs {exact:.4f} for the dense curve")
print("best f1 per generation:", [round(float(t.best[0]), 4) for t in trace[::10]])
