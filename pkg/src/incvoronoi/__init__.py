"""Zero-calibration indoor localization from pairwise RSS comparisons on a
Voronoi-clustered virtual grid, plus a channel simulator, two baselines and
an evaluation harness."""

from .floorplan import AccessPoint, Floorplan, FloorplanError, load_floorplan, reference_testbed
from .geometry import Point2D, Segment2D
from .gridder import VirtualGrid, build_grid, build_grid_cached
from .localizer import (
    EmptyScanError,
    Filter,
    LocationEstimate,
    ScanSample,
    ScanWindow,
    Tracker,
    TrackerConfig,
    compare_aps,
    locate_window,
    prob_stronger,
)
from .simulator import DeviceProfile, PropagationModel, ScenarioConfig, Trace, generate_trace

__version__ = "0.1.0"

__all__ = [
    "AccessPoint", "DeviceProfile", "EmptyScanError", "Filter", "Floorplan", "FloorplanError",
    "LocationEstimate", "Point2D", "PropagationModel", "ScanSample", "ScanWindow", "ScenarioConfig",
    "Segment2D", "Trace", "Tracker", "TrackerConfig", "VirtualGrid", "build_grid", "build_grid_cached",
    "compare_aps", "generate_trace", "load_floorplan", "locate_window", "prob_stronger", "reference_testbed",
]
