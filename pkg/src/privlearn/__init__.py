"""Simulator for privatised distributed learning over graphs."""
from privlearn.graph import CombinationTriple, GraphError, Topology, make_triple, random_connected_graph
from privlearn.learn import DivergenceError, RunConfig, Trajectory, run, step
from privlearn.objectives import Problem, generate_logistic, generate_regression, make_problem
from privlearn.privacy.noise import NoisePlan

__version__ = "0.1.0"
