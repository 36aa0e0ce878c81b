"""Chains, checkpoints and experiment orchestration."""

from .chain import Chain, ChainContext
from .checkpoint import ChainCheckpoint, load_checkpoint, save_checkpoint
from .config import ModelKind, ModelSpec, RosterConfig, RunConfig, load_config
from .experiment import Experiment, report, resume, run_experiment, run_roster
from .models import ChainResult, ChainResultStatus
