from dag_feasibility.graph import NodeSpec, EdgeSpec, GraphSpec, build_graph, \
    topological_order, roots_and_leaves, adjacency_matrix
from dag_feasibility.domains import Box, SampleSet, interval_hull, box_product, contains, \
    project
from dag_feasibility.samplers import EvalCounter, sobol, rejection_sample, adaptive_sample, \
    acceptance_ratio, derive_seed
from dag_feasibility.surrogates import SvmClassifier, KrrRegressor, CvReport, \
    augment_balance, train_svm, svm_decision, svm_gradient, train_krr, krr_predict, \
    krr_jacobian
from dag_feasibility.optim import NlpResult, box_minimize, multistart_minimize, \
    penalty_objective
from dag_feasibility.propagate import NodeState, PropagationState, \
    estimate_backward_domains, forward_input_domain, feasibility_forward, \
    feasibility_backward, propagate, lift_coupling, reduced_coupling_domain
from dag_feasibility.reconstruct import ReconstructionResult, evaluate_composite, \
    composite_feasibility, reconstruct, simultaneous, compare_runs
from dag_feasibility.models import ReactorParams, SipResult, linear_example_graph, \
    arrhenius, rk4_integrate, reactor_graph, nonconvex_target, approximator_graph, \
    brute_force_oracle, sip_solve, get_case
from dag_feasibility.config import SamplerConfig, SurrogateConfig, NlpConfig, RunConfig


__all__ = [
    'NodeSpec',
    'EdgeSpec',
    'GraphSpec',
    'build_graph',
    'topological_order',
    'roots_and_leaves',
    'adjacency_matrix',
    'Box',
    'SampleSet',
    'interval_hull',
    'box_product',
    'contains',
    'project',
    'EvalCounter',
    'sobol',
    'rejection_sample',
    'adaptive_sample',
    'acceptance_ratio',
    'derive_seed',
    'SvmClassifier',
    'KrrRegressor',
    'CvReport',
    'augment_balance',
    'train_svm',
    'svm_decision',
    'svm_gradient',
    'train_krr',
    'krr_predict',
    'krr_jacobian',
    'NlpResult',
    'box_minimize',
    'multistart_minimize',
    'penalty_objective',
    'NodeState',
    'PropagationState',
    'estimate_backward_domains',
    'forward_input_domain',
    'feasibility_forward',
    'feasibility_backward',
    'propagate',
    'lift_coupling',
    'reduced_coupling_domain',
    'ReconstructionResult',
    'evaluate_composite',
    'composite_feasibility',
    'reconstruct',
    'simultaneous',
    'compare_runs',
    'ReactorParams',
    'SipResult',
    'linear_example_graph',
    'arrhenius',
    'rk4_integrate',
    'reactor_graph',
    'nonconvex_target',
    'approximator_graph',
    'brute_force_oracle',
    'sip_solve',
    'get_case',
    'SamplerConfig',
    'SurrogateConfig',
    'NlpConfig',
    'RunConfig',
]
