"""Kriging surrogates over expression trees for budget-limited symbolic regression."""

from .distance import TreeSet, distance_matrix, phd, shd1, shd2, ted
from .expr import (GeneratorParams, MutationParams, OperatorSet, crossover_subtree, depth,
                   evaluate, format_sexpr, mutate_subtree, parse_sexpr, ramped_half_and_half)
from .kriging import expected_improvement, fit, normalized_weights, predict
from .optim import BoxBounds, direct_minimize, nelder_mead
from .problems import PROBLEMS, evaluate_upper, get_problem, make_dataset
from .search import ea_optimize, random_search, single_distance_smbo, smbo
from .stats import kruskal_wallis

__version__ = "0.1.0"
