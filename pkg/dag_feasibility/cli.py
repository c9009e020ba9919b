# -*- coding: utf-8 -*-
"""Command-line entry point: ``dag-feasibility <command> [options]``.

Commands
  ``propagate``    run the passes of a case study and save the propagation state
  ``reconstruct``  rebuild joint feasible samples from a saved state
  ``baseline``     sample the joint box directly (the simultaneous approach)
  ``compare``      report acceptance ratios and costs of two runs
  ``export``       write plot-ready per-node parameter samples of a saved state

Exit codes are ``0`` on success, ``1`` when the run fails (a domain error or a missing
path) and ``2`` on invalid usage.
"""
import argparse
import logging
import os
import shutil
import sys

import simplejson as json
from validator_collection import checkers

from dag_feasibility import errors
from dag_feasibility.__version__ import __version__
from dag_feasibility.config import RunConfig, SamplingPolicyEnum, validate_directions
from dag_feasibility.domains import project
from dag_feasibility.propagate import PropagationState, propagate, reduced_coupling_domain
from dag_feasibility.reconstruct import (ReconstructionResult, compare_runs, reconstruct,
                                         simultaneous)
from dag_feasibility.samplers import EvalCounter, derive_seed

logger = logging.getLogger(__name__)

CONFIG_FILENAME = 'config.yaml'


def _positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected an integer. Was: {value}')
    if number < 1:
        raise argparse.ArgumentTypeError(f'expected a positive integer. Was: {value}')
    return number


def _nonnegative_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected an integer. Was: {value}')
    if number < 0:
        raise argparse.ArgumentTypeError(f'expected a nonnegative integer. Was: {value}')
    return number


def _directions(value):
    try:
        return validate_directions(value)
    except errors.InvalidDirectionsError as error:
        raise argparse.ArgumentTypeError(str(error))


def _add_run_options(parser):
    parser.add_argument('--output', '-o', help = 'Directory to write results to.')
    parser.add_argument('--overwrite',
                        action = 'store_true',
                        help = 'Replace the output directory if it already exists.')
    parser.add_argument('--workers',
                        type = _positive_int,
                        help = 'Threads evaluating candidates. Defaults to one per core.')
    parser.add_argument('--seed', type = _nonnegative_int, help = 'Run seed.')


def build_parser():
    """Return the argument parser of the ``dag-feasibility`` command.

    :rtype: :class:`argparse.ArgumentParser`
    """
    parser = argparse.ArgumentParser(
        prog = 'dag-feasibility',
        description = 'Feasible parameter sets of DAG-structured constraint problems.'
    )
    parser.add_argument('--version', action = 'version', version = f'%(prog)s {__version__}')
    parser.add_argument('--config', '-c', help = 'YAML run configuration.')
    parser.add_argument('--verbose', '-v',
                        action = 'count',
                        default = 0,
                        help = 'More logging (repeat for debug output).')
    parser.add_argument('--quiet', '-q',
                        action = 'store_true',
                        help = 'Log errors only.')
    commands = parser.add_subparsers(dest = 'command', metavar = 'command')
    commands.required = True

    command = commands.add_parser('propagate', help = 'Run the propagation passes.')
    command.add_argument('--case', help = 'Built-in case study.')
    command.add_argument('--directions', type = _directions, help = 'Pass letters, e.g. fb.')
    command.add_argument('--samples',
                         type = _positive_int,
                         help = 'Feasible samples sought per node subproblem.')
    command.add_argument('--max-evaluations',
                         type = _positive_int,
                         help = 'Evaluation budget per node subproblem.')
    _add_run_options(command)

    command = commands.add_parser('reconstruct',
                                  help = 'Rebuild joint samples from a propagation state.')
    command.add_argument('--state', required = True, help = 'Propagation state directory.')
    command.add_argument('--target', type = _positive_int, help = 'Joint samples sought.')
    command.add_argument('--budget', type = _positive_int, help = 'Evaluation budget.')
    command.add_argument('--adaptive',
                         action = 'store_true',
                         help = 'Sample the hull of the reduced domain adaptively.')
    _add_run_options(command)

    command = commands.add_parser('baseline', help = 'Sample the joint box directly.')
    command.add_argument('--case', help = 'Built-in case study.')
    command.add_argument('--target', type = _positive_int, help = 'Joint samples sought.')
    command.add_argument('--budget', type = _positive_int, help = 'Evaluation budget.')
    command.add_argument('--policy',
                         choices = [policy.value for policy in SamplingPolicyEnum],
                         help = 'Sampling policy.')
    _add_run_options(command)

    command = commands.add_parser('compare', help = 'Compare two run directories.')
    command.add_argument('run_a', help = 'Run directory (numerator of the ratios).')
    command.add_argument('run_b', help = 'Run directory (denominator of the ratios).')
    command.add_argument('--output', '-o', help = 'File to write the report to.')

    command = commands.add_parser('export', help = 'Export per-node samples of a state.')
    command.add_argument('--state', required = True, help = 'Propagation state directory.')
    command.add_argument('--output', '-o', help = 'Directory to write the CSV files to.')
    command.add_argument('--overwrite',
                         action = 'store_true',
                         help = 'Replace the output directory if it already exists.')

    return parser


def configure_logging(verbose = 0, quiet = False):
    if quiet:
        level = logging.ERROR
    else:
        level = max(logging.DEBUG, logging.WARNING - 10 * verbose)
    logging.basicConfig(level = level,
                        format = '%(asctime)s %(levelname)s %(name)s: %(message)s')


def _prepare_output(path, overwrite = False):
    """Create ``path``, refusing to touch an existing non-empty directory unless
    ``overwrite`` is set."""
    if os.path.exists(path) and os.listdir(path):
        if not overwrite:
            raise errors.InvalidConfigurationError(f'{path} already exists; pass --overwrite '
                                                   'to replace it')
        logger.info('removing existing output %s', path)
        shutil.rmtree(path)
    os.makedirs(path, exist_ok = True)
    return path


def _state_config(state_dir):
    path = os.path.join(state_dir, CONFIG_FILENAME)
    if not checkers.is_file(path):
        raise FileNotFoundError(f'no run configuration in {state_dir}')
    return RunConfig.from_yaml(path)


def _saved_hash(state_dir):
    path = os.path.join(state_dir, 'state.json')
    if not checkers.is_file(path):
        raise FileNotFoundError(f'no propagation state at {state_dir}')
    with open(path, 'r') as file_:
        return json.load(file_).get('config_hash')


def load_state(config, state_dir):
    """Load the propagation state saved in ``state_dir`` for ``config``.

    :rtype: :class:`PropagationState`

    :raises StateMismatchError: if the state was produced with different propagation
      settings
    """
    if not os.path.isdir(state_dir):
        raise FileNotFoundError(f'state directory {state_dir} does not exist')
    saved = _saved_hash(state_dir)
    if saved != config.config_hash:
        raise errors.StateMismatchError(f'state at {state_dir} was produced with other '
                                        f'settings (hash {saved}, expected '
                                        f'{config.config_hash})')
    return PropagationState.from_directory(state_dir, config.build_graph())


def cmd_propagate(config, overwrite = False):
    """Run the passes named in ``config`` and save the state.

    :returns: Exit code.
    :rtype: :class:`int <python:int>`
    """
    graph = config.build_graph()
    output = config.output_dir or f'{graph.name}-{config.directions}'
    _prepare_output(output, overwrite)

    state = propagate(graph,
                      config.directions,
                      sampler_config = config.sampler,
                      nlp_config = config.nlp,
                      surrogate_config = config.surrogate,
                      seed = config.seed,
                      n_sobol = config.n_sobol,
                      inflation = config.inflation,
                      workers = config.workers,
                      config_hash = config.config_hash)
    state.to_directory(output)
    config.to_yaml(os.path.join(output, CONFIG_FILENAME))

    for node, node_state in state.final_states().items():
        print(f'node {node}: {node_state.samples.n_feasible} feasible of '
              f'{node_state.samples.size} samples')
    counter = state.counter
    print(f'constituent evaluations: {counter.constituent_evals}, '
          f'nlp solves: {counter.nlp_solves}')
    print(f'state saved to {output}')
    return 0


def cmd_reconstruct(config, state_dir, output = None, overwrite = False, seed = None,
                    adaptive = False):
    """Rebuild joint samples from the state in ``state_dir``.

    :returns: Exit code.
    :rtype: :class:`int <python:int>`
    """
    state = load_state(config, state_dir)
    graph = config.build_graph()
    output = output or f'{os.path.normpath(state_dir)}-reconstruction'
    _prepare_output(output, overwrite)

    result = reconstruct(graph,
                         state,
                         target = config.target_joint,
                         budget = config.budget,
                         seed = seed,
                         adaptive = adaptive,
                         workers = config.workers,
                         sampler_config = config.sampler)
    result.to_directory(output)
    print(f'{result.n_feasible} joint feasible samples, acceptance ratio '
          f'{result.acceptance_ratio:.6g}')
    print(f'results saved to {output}')
    return 0


def cmd_baseline(config, overwrite = False, policy = None):
    """Sample the joint box of the configured case directly.

    :returns: Exit code.
    :rtype: :class:`int <python:int>`
    """
    graph = config.build_graph()
    output = config.output_dir or f'{graph.name}-simultaneous'
    _prepare_output(output, overwrite)

    sampler = config.sampler.copy(target_feasible = config.target_joint,
                                  max_evaluations = config.budget,
                                  policy = policy,
                                  seed = derive_seed(config.seed, 'simultaneous') % 2**32)
    result = simultaneous(graph,
                          sampler,
                          counter = EvalCounter(),
                          workers = config.workers,
                          config_hash = config.config_hash)
    result.to_directory(output)
    print(f'{result.n_feasible} joint feasible samples, acceptance ratio '
          f'{result.acceptance_ratio:.6g}')
    print(f'results saved to {output}')
    return 0


def cmd_compare(run_a, run_b, output = None):
    """Print (and optionally write) the comparison report of two run directories.

    :returns: Exit code.
    :rtype: :class:`int <python:int>`
    """
    report = compare_runs(ReconstructionResult.from_directory(run_a),
                          ReconstructionResult.from_directory(run_b))
    as_json = json.dumps(report, indent = 2, sort_keys = True, ignore_nan = True)
    if output:
        with open(output, 'w') as file_:
            file_.write(as_json)
    print(as_json)
    return 0


def cmd_export(config, state_dir, output = None, overwrite = False):
    """Write ``node<i>_v.csv`` (and ``coupling.csv`` for lifted runs) from a saved state.

    :returns: Exit code.
    :rtype: :class:`int <python:int>`
    """
    state = load_state(config, state_dir)
    output = output or f'{os.path.normpath(state_dir)}-export'
    _prepare_output(output, overwrite)

    for node, node_state in state.final_states().items():
        samples = project(node_state.samples, f'v{node}')
        samples.to_dataframe().to_csv(os.path.join(output, f'node{node}_v.csv'),
                                      index = False)
    if state.graph.is_lifted:
        reduced_coupling_domain(state).to_dataframe().to_csv(
            os.path.join(output, 'coupling.csv'), index = False
        )
    print(f'exported {state.graph.n_nodes} nodes to {output}')
    return 0


def _run_config(args):
    """Base configuration: ``--config`` if given, else the one saved with ``--state``, else
    the defaults."""
    if args.config:
        return RunConfig.from_yaml(args.config)
    state_dir = getattr(args, 'state', None)
    if state_dir:
        return _state_config(state_dir)
    return RunConfig()


def _overrides(args):
    keys = {'case': 'case', 'directions': 'directions', 'workers': 'workers',
            'target': 'target_joint', 'budget': 'budget', 'output': 'output_dir'}
    overrides = {}
    for flag, key in keys.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.command == 'reconstruct':
        overrides.pop('output_dir', None)
    elif getattr(args, 'seed', None) is not None:
        overrides['seed'] = args.seed
    return overrides


def _apply_sampler_flags(config, args):
    samples = getattr(args, 'samples', None)
    max_evaluations = getattr(args, 'max_evaluations', None)
    if samples is None and max_evaluations is None:
        return config
    sampler = config.sampler.copy(target_feasible = samples,
                                  max_evaluations = max_evaluations)
    return config.copy(sampler = sampler)


def main(argv = None):
    """Run the command line and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        if args.command == 'compare':
            return cmd_compare(args.run_a, args.run_b, args.output)

        config = _run_config(args)
        if args.command == 'export':
            return cmd_export(config, args.state, args.output, args.overwrite)

        config = _apply_sampler_flags(config.copy(**_overrides(args)), args)
        if args.command == 'propagate':
            return cmd_propagate(config, args.overwrite)
        if args.command == 'reconstruct':
            return cmd_reconstruct(config, args.state, args.output, args.overwrite, args.seed,
                                   args.adaptive)
        return cmd_baseline(config, args.overwrite, args.policy)
    except (errors.DagFeasibilityError, FileNotFoundError, ValueError) as error:
        logger.error('%s: %s', error.__class__.__name__, error)
        if isinstance(error, errors.EmptySubproblemSolutionError) and error.diagnostics:
            logger.error('rejections at node %s: %s', error.node, error.diagnostics)
        return 1


if __name__ == '__main__':
    sys.exit(main())
