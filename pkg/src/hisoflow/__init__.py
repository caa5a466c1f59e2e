"""
Centralized and distributed Hessian-inverse-sum optimization flows.

Submodules: ``graph`` (graph matrices), ``costs`` (agent cost families),
``central`` (GD / NR / HISO flows and stepsize search), ``dhiso`` (the
distributed protocol and its invariant checks), ``experiments`` (seeded
reproductions), ``io`` and ``plotting`` (trace files, configs, SVG plots).
"""

from .central import FlowField, euler_run, grid_search_stepsize, newton_oracle
from .costs import CostEnsemble, logistic_ensemble, quartic_ensemble
from .dhiso import dgd2_run, dhiso_run
from .experiments import ExperimentConfig, run_experiment, run_logreg, run_quartic
from .graph import build_graph, matrices, named_graph

__version__ = "0.1.0"
