"""Post-processing for the vascularized tumor growth simulator's outputs.

Consumes only the simulator's documented file formats (legacy VTK states
and networks, diagnostics CSV) and produces PNG figures: plane heatmaps,
line profiles, diagnostics time series.
"""

from .plots import PlotJob, plot_line, plot_slice, plot_timeseries, read_diagnostics_csv
from .vtkread import GridData, PolyData, read_vtk

__all__ = [
    "GridData",
    "PlotJob",
    "PolyData",
    "plot_line",
    "plot_slice",
    "plot_timeseries",
    "read_diagnostics_csv",
    "read_vtk",
]
