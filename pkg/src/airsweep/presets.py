"""Ready-made scenarios.

Seats are placed on cell centers so each observer's capture cell is
unambiguous.
"""
from __future__ import annotations

from .field import RoomGeometry
from .plume import CoughSpec
from .scenario import ClassroomLayout, EmissionEvent, FilterPlacement, Scenario

ROOM_HEIGHT = 3.5


def default_scenario(filter: FilterPlacement | None = None) -> Scenario:
    """3 m x 8 m classroom, two rows of five seats, source at the rear-row center."""
    return Scenario(
        geometry=RoomGeometry(3.0, 8.0, ROOM_HEIGHT),
        layout=ClassroomLayout(d_x=2.0, d_y=1.5, rows=2, cols=5, seat_origin=(0.55, 1.05)),
        emissions=(EmissionEvent((0, 2), spec=CoughSpec()),),
        filter=filter or FilterPlacement.mobile(0.5, 1.3, 10),
    )


def symmetric_scenario(filter: FilterPlacement | None = None) -> Scenario:
    """Room with an odd lateral cell count so the centered source sits on the mirror line."""
    return Scenario(
        geometry=RoomGeometry(3.0, 7.5, ROOM_HEIGHT),
        layout=ClassroomLayout(d_x=2.0, d_y=1.5, rows=2, cols=3, seat_origin=(0.55, 2.25)),
        emissions=(EmissionEvent((0, 1)),),
        filter=filter or FilterPlacement.none(),
    )


def experiment_scenario(filter: FilterPlacement | None = None) -> Scenario:
    """5 m x 6 m room with a 2 x 3 seat grid and the source at the rear center."""
    return Scenario(
        geometry=RoomGeometry(5.0, 6.0, ROOM_HEIGHT),
        layout=ClassroomLayout(d_x=2.0, d_y=1.5, rows=2, cols=3, seat_origin=(1.05, 1.55)),
        emissions=(EmissionEvent((0, 1)),),
        filter=filter or FilterPlacement.mobile(0.5, 1.3, 14),
    )


def four_person_scenario(filter: FilterPlacement | None = None) -> Scenario:
    """Four occupants A, B, C, D in a 3 m x 8 m room; A and C cough together.

    A and C share the rear row, B sits in front of A and D in front of C.
    """
    layout = ClassroomLayout(d_x=2.0, d_y=1.5, rows=2, cols=2, seat_origin=(0.55, 3.25))
    return Scenario(
        geometry=RoomGeometry(3.0, 8.0, ROOM_HEIGHT),
        layout=layout,
        emissions=(EmissionEvent((0, 0)), EmissionEvent((0, 1))),
        filter=filter or FilterPlacement.mobile(0.5, 1.0, 2),
    )


FOUR_PERSON_SEATS = {"A": (0, 0), "B": (1, 0), "C": (0, 1), "D": (1, 1)}
