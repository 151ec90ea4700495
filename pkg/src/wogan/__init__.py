"""Online WGAN test generation for a lane-keeping function, with baselines and a mock simulator."""
from .baselines import frenetic_run, random_search_run
from .engine import WoganConfig, WoganGenerator, wogan_run
from .geometry import GeometryConfig, road_from_test, validate_road
from .harness import CampaignConfig, run_experiment
from .metrics import suite_stats
from .sut import MockSUT, SimConfig, simulate

__all__ = [
    "CampaignConfig",
    "GeometryConfig",
    "MockSUT",
    "SimConfig",
    "WoganConfig",
    "WoganGenerator",
    "frenetic_run",
    "random_search_run",
    "road_from_test",
    "run_experiment",
    "simulate",
    "suite_stats",
    "validate_road",
    "wogan_run",
]
