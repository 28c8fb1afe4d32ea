"""Semi-discrete Perona-Malik gradient flow toolkit.

Library layers, bottom up:

* phi            -- convex-concave Lagrangians and derived constants
* grid           -- discrete functions, difference calculus, BV diagnostics
* flow           -- the ODE system and its adaptive integrator
* counterexample -- staircase data, barrier, comparison-lemma machinery
* analysis       -- v-field diagnostics, reference runs, convergence studies
* cli            -- reproducible command-line experiments
"""

__version__ = "0.1.0"
