"""Course-sequence planning and personalized policy selection.

Two layers: an exact finite-horizon planner (forward state-space search
plus backward induction over the resulting AND/OR graph) that produces
course recommendation policies under prerequisite, availability, load-cap
and pass/fail constraints; and an online contextual-bandit learner that
picks among candidate policies per student background, refining a dyadic
partition of the context space as students graduate.
"""

from .bandit import BanditConfig, Partition, Scheme, benchmark, regret, run
from .curriculum import (
    AvailabilityCalendar,
    Course,
    CourseState,
    Curriculum,
    FailureModel,
    RewardKind,
    action_sets,
    curriculum_sha256,
    dominates,
    feasible_courses,
    is_terminal,
    load_curriculum,
    reward,
    validate,
)
from .planner import (
    LayeredGraph,
    PolicyTable,
    backward_induction,
    best_failfree_sequence,
    enumerate_candidate_policies,
    forward_search,
    recommend,
    state_counts,
    transition_distribution,
)
from .simulate import (
    GradReport,
    Trajectory,
    graduation_stats,
    resource_experiment,
    simulate_student,
)
from .synth import EnvModel, GpaTable, load_gpa_table, oracle_means

__version__ = "0.1.0"
