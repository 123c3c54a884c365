"""Desk-scale grasp-pose laboratory.

Two stages: estimate the 3x3 image-to-robot position map from paired
observations (genetic search, per-axis regression, or pseudoinverse), and
learn a discrete gripper orientation with a small convolutional Q-network
against a simulated grasp cycle.
"""

from .errors import (CheckpointError, ConfigError, DataError, DegenerateAxisError,
                     EnvironmentError_, GraspolabError, RankDeficiencyError,
                     SingularMatrixError)
from .geometry import (BoundingBox, EEPosition, ImagePoint, WorkspaceConfig,
                       angular_distance, bbox_center)
from .mapping import (AxisLine, Chromosome, FitnessKind, GAConfig, MappingMatrix,
                      ObservationSet, assemble_observations, fitness, ga_fit,
                      lr_fit, pi_fit, predict_matrix, predict_position, rmse,
                      rmse_columns)
from .neuralnet import (Conv2D, Dense, HuberParams, Network, RMSProp, huber,
                        huber_terms, load_weights, restore_weights, save_weights)
from .gdqn import (ACTION_TABLES, AgentConfig, EpisodeRecord, ReplayMemory,
                   Transition, action_angles, build_q_network, deep_q_learn,
                   epsilon_at, q_targets, select_action, train)
from .simenv import (DEFAULT_DEPTH_PLANE, DEFAULT_TRUE_MAPPING, EnvConfig,
                     GraspEnv, SimObject, StepResult, detect_object,
                     gen_position_dataset, random_policy_success_rate,
                     render_crop, required_angle_span)
from .harness import (ResultTable, RunConfig, cmd_compare_fitness, cmd_eval_orient,
                      cmd_fit_position, cmd_gen_data, cmd_train_orient, load_config,
                      split_indices)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
