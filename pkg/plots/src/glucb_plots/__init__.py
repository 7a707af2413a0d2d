"""Figure scripts for the bandit benchmark CSVs: regret bands, estimator scatters, detection curves."""

__version__ = "0.1.0"

from .io import SchemaError, load_regret_quantiles, load_theta_snapshots
from .figures import FIGURE_KINDS, PlotSpec, build_figure, render
