"""Online multi-person tracking with per-target instance scorers and joint association inference."""
from .association import (
    Assignment,
    JointAssociationMatrix,
    StateDecision,
    build_joint_matrix,
    calibrate_lambdas,
    decode_states,
    hungarian_min_cost,
    solve_joint,
)
from .core import (
    BoundingBox,
    Detection,
    InputError,
    InvariantError,
    Observation,
    Prediction,
    TargetState,
    TrackerParams,
)
from .metrics import MetricsReport, evaluate
from .simulator import ScenarioSpec, SyntheticWorld, generate
from .tracker import TrackerEngine, TrackerOutput, balance_learn, run_sequence, transition

__version__ = "0.1.0"
