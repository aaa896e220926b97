"""In-hand regrasp planning for multi-fingered hands.

Alternates two optimization primitives until a desired grasp is reached:
per-finger gaiting (relocate one fingertip along the object surface while
the rest hold the object) and object reposing (move the object with all
fingers to bring the desired contacts into reach), followed by a final
in-grasp move to the desired object pose.
"""

from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    InputError,
    NumericEvalError,
    RegraspError,
    SceneLoadError,
)
from .gait import GaitParams, GaitResult, collision_cost, gait_distance_cost, plan_finger_gait, stability_constraint
from .geometry import (
    ConvexPart,
    ObjectModel,
    RigidTransform,
    clearance_penalty,
    convex_hull,
    signed_distance_object,
    signed_distance_part,
)
from .kinematics import (
    FingerModel,
    HandModel,
    JointConfig,
    JointSpec,
    LinkProxy,
    fk_fingertip,
    fk_link_proxies,
    numeric_gradient,
)
from .nlp import NLPProblem, NLPSolution, minimize
from .planner import (
    Grasp,
    Plan,
    PlannerParams,
    PlanStep,
    ValidationReport,
    average_point_error,
    max_point_error,
    plan_regrasp,
    select_gait_pattern,
    validate_plan,
)
from .repose import (
    ReposeParams,
    ReposeResult,
    auxiliary_goal_pose,
    in_grasp_to_pose,
    kabsch_transform,
    relaxed_rigidity_costs,
    repose_object,
    workspace_gap_cost,
)
from .scene_io import Scene, load_hand, load_object, load_plan, load_scene, plans_equal, save_plan
from .workspace import ReachableWorkspace, estimate_workspace, workspace_signed_distance

__version__ = "0.1.0"
