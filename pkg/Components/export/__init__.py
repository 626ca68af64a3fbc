# Plot-data export: legacy VTK fields and CSV/JSON reports
from .vtk_writer import read_vtk_counts, write_vtk
from .reports import (read_csv, write_csv, write_error_report, write_gap_report, write_metadata,
                      write_residual_history)

__all__ = ['write_vtk', 'read_vtk_counts', 'write_csv', 'read_csv', 'write_error_report',
           'write_gap_report', 'write_metadata', 'write_residual_history']
