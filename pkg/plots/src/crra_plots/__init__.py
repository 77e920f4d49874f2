"""Charts for CRRA-BSDE experiment output.

Renders the opportunity-process and strategy figures (one curve per scenario,
display path only) from the experiment runner's CSV files.
"""

from .errors import SchemaMismatch
from .reader import ScenarioSeries, SeriesBundle, load_bundle
from .render import render

__version__ = "0.1.0"
