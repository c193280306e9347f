from .bench import FIXED_SEQUENCES, BenchReport, CheckpointPolicy, run_benchmark, sweep_thresholds
from .checkpoint import Checkpoint
from .config import RUN_PRESETS, RunConfig, load_run_config
from .env import EnvConfig, VecEnv
from .policy import ActorCritic, PpoConfig, train
from .task import THRESHOLD_PRESETS, Goal, GoalSequence, PlanarPose, ReachThresholds
