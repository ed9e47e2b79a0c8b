"""Analog neutral-atom emulation for MIS and MaxCut: embedding, pulse shaping, pulse prediction, Q-score."""

from .embedding import CONCENTRIC_TRIANGLES, LayoutKind, LayoutParams, Register, make_register
from .emulator import NOISE_MINUS, NOISE_OFF, NOISE_PLUS, NoiseParams, Pulse, SampleSet, evolve, run_noisy, sample
from .graphcore import CostKind, Graph, exact_solve, gen_erdos_renyi, graph_features, qubo_cost
from .pulsepredictor import ChainedModel, Dataset, build_dataset, fit_chain, predict_pulse
from .pulseshaper import OptBudget, select_best, shape_pulse, shape_with_embedding
from .qscore import asymptotic_baselines, beta_curve, fit_qscore, threshold_qscore

__version__ = "0.1.0"
