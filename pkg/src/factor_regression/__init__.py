"""
Provides the public names of the factor_regression package.
"""
from .dataset import RegressionDataset, load_dataset, save_dataset
from .model import Hyperparams, LatentState, init_state, joint_log_likelihood, predict
from .proposals import AnnealSchedule, ProposalKind, ProposalStrategy
from .synth import SplitScheme, SynthConfig, generate, split
