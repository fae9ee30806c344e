"""Data association: Hungarian matching and object loop closure."""

from objslam.assoc.hungarian import GATE_SENTINEL, Assignment, hungarian_assign  # noqa: F401
from objslam.assoc.tracker import (  # noqa: F401
    AssocConfig,
    AssocRecord,
    Decision,
    FrameAssociation,
    Track,
    TrackStore,
    associate_frame,
    association_cost,
    detect_object_loop_closure,
    write_association_log,
)
