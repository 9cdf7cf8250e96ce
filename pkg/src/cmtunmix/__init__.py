"""Hyperspectral unmixing over a clustered multitask pixel network."""
from .core import (AbundanceMatrix, HsiCube, ShapeError, SignatureMatrix, SolverConfig,
                   forward_model, validate_abundances)
from .fcm import FcmResult, fcm_cluster, harden
from .graph import PixelGraph, build_graph, build_neighborhood, compute_rho, effective_neighbors
from .initialization import fcls, random_init, vca
from .metrics import EvalReport, aad, evaluate, match_endmembers, reconstruction_error, rms_aggregate, sad
from .simplex import project_simplex, project_simplex_columns
from .solver import VARIANTS, RunReport, SolverDivergence, SolverState, lambda_auto, run
from .synth import SynthSpec, generate_scene, load_library, standin_library

__version__ = "0.1.0"
