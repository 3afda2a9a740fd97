"""Learned lifting linearization and lifted linear baselines for
system identification of controlled nonlinear systems."""

from .baselines import DFL, DMDc, EDMDc, KoopmanWithControl
from .causality import AnticausalFilter, estimate_filter, fold_input
from .evaluation import compare, ise, rollout
from .l3 import L3Config, LearnedLiftingLinearization, train
from .lifting import Dataset, LiftedLinearModel, PolyBasis, Trajectory
from .plant import ToyPlant, generate_dataset, square_wave_test

__version__ = "0.1.0"
