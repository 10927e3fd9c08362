import numpy as np
import pytest

from airsweep.field import RoomGeometry
from airsweep.plume import SourceSeries
from airsweep.presets import default_scenario
from airsweep.scenario import (
    ClassroomLayout,
    EmissionEvent,
    FilterPlacement,
    RobotSpec,
    Scenario,
    scenario_source,
)

TINY_LAYOUT = ClassroomLayout(d_x=0.4, d_y=0.3, rows=2, cols=3, seat_origin=(0.25, 0.25))
TINY_ROBOT = RobotSpec(footprint_w=0.25, footprint_l=0.25)


def tiny_scenario(filter=None, horizon=20, layout=TINY_LAYOUT, robot=TINY_ROBOT):
    """1 m x 1 m room (10 x 10 cells) with a 2 x 3 seat grid and source at (0, 1)."""
    return Scenario(
        geometry=RoomGeometry(1.0, 1.0, 3.5),
        layout=layout,
        emissions=(EmissionEvent((0, 1)),),
        filter=filter or FilterPlacement.none(),
        robot=robot,
        horizon=horizon,
    )


def random_source(geometry, seed=0, t_handoff=6, scale=50.0):
    rng = np.random.default_rng(seed)
    values = rng.random((t_handoff + 1, *geometry.shape)) * scale
    return SourceSeries(geometry, values, t_handoff)


@pytest.fixture(scope="session")
def default_source():
    return scenario_source(default_scenario(), seed=0)
