# -*- coding: utf-8 -*-
"""The DAG of constituent functions: node data, edges, and precedence ordering."""
import heapq
import logging
from collections import namedtuple

import numpy as np
from validator_collection import validators, checkers

from dag_feasibility import errors
from dag_feasibility.domains import Box, box_product

logger = logging.getLogger(__name__)

NodeEvaluation = namedtuple('NodeEvaluation', ['constraints', 'outputs'])
CompositeEvaluation = namedtuple('CompositeEvaluation',
                                 ['inputs', 'payloads', 'constraints', 'n_evaluations'])


class EdgeSpec(object):
    """A directed edge ``(source, target)`` carrying a ``dim``-vector payload
    ``y_source^target = u_target^source``."""

    def __init__(self, source, target, dim):
        self._source = validators.integer(source, minimum = 0, coerce_value = True)
        self._target = validators.integer(target, minimum = 0, coerce_value = True)
        self._dim = validators.integer(dim, minimum = 1, coerce_value = True)

    @property
    def source(self):
        """:rtype: :class:`int <python:int>`"""
        return self._source

    @property
    def target(self):
        """:rtype: :class:`int <python:int>`"""
        return self._target

    @property
    def dim(self):
        """Payload length.

        :rtype: :class:`int <python:int>`
        """
        return self._dim

    @property
    def key(self):
        return (self._source, self._target)

    def to_dict(self):
        return {'source': self._source, 'target': self._target, 'dim': self._dim}

    def __repr__(self):
        return f'EdgeSpec({self._source} -> {self._target}, dim={self._dim})'


class NodeSpec(object):
    """One node of the graph: a parameter box, a constraint function, and one constituent
    function per out-edge.

    Callables receive ``(v, u)``, or ``(v, u, z)`` on graphs with coupling parameters,
    where ``u`` concatenates the in-edge payloads in ascending source-id order. The
    constraint function returns the vector ``G_i`` (feasible iff every entry ``<= 0``);
    it may return an empty vector for nodes without local constraints.
    """

    def __init__(self,
                 id,
                 param_box,
                 constraint_fn,
                 constituent_fns = None,
                 name = None,
                 cheap = False,
                 input_dim = None):
        self._id = validators.integer(id, minimum = 0, coerce_value = True)
        if not isinstance(param_box, Box):
            raise ValueError(f'param_box must be a Box. Was: {param_box.__class__.__name__}')
        self._param_box = param_box
        if not checkers.is_callable(constraint_fn):
            raise ValueError('constraint_fn must be callable')
        self._constraint_fn = constraint_fn

        constituent_fns = validators.dict(constituent_fns, allow_empty = True) or {}
        for target, fn in constituent_fns.items():
            if not checkers.is_callable(fn):
                raise ValueError(f'constituent function for edge to {target} is not callable')
        self._constituent_fns = {int(target): fn for target, fn in constituent_fns.items()}

        self._name = validators.string(name, allow_empty = True) or f'node{self._id}'
        self._cheap = bool(cheap)
        self._input_dim = validators.integer(input_dim,
                                             allow_empty = True,
                                             minimum = 0,
                                             coerce_value = True)

    @property
    def id(self):
        """:rtype: :class:`int <python:int>`"""
        return self._id

    @property
    def param_box(self):
        """Search box of the local parameters ``v_i``.

        :rtype: :class:`Box`
        """
        return self._param_box

    @property
    def constraint_fn(self):
        return self._constraint_fn

    @property
    def constituent_fns(self):
        """Map of out-neighbour id to constituent function.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._constituent_fns)

    @property
    def name(self):
        """:rtype: :class:`str <python:str>`"""
        return self._name

    @property
    def cheap(self):
        """If ``True`` the true edge maps replace trained regressors in coupling checks.

        :rtype: :class:`bool <python:bool>`
        """
        return self._cheap

    @property
    def input_dim(self):
        """Declared input length, checked against the incoming edges when given.

        :rtype: :class:`int <python:int>` / :obj:`None <python:None>`
        """
        return self._input_dim

    def to_dict(self):
        return {
            'id': self._id,
            'name': self._name,
            'param_box': self._param_box.to_dict(),
            'out_edges': sorted(self._constituent_fns),
            'cheap': self._cheap,
        }


class GraphSpec(object):
    """A validated, immutable DAG. Build instances with :func:`build_graph`."""

    def __init__(self, nodes, edges, order, coupling_box, coupling_roles, name, lift_dim):
        self._nodes = tuple(nodes)
        self._edges = tuple(sorted(edges, key = lambda edge: edge.key))
        self._edge_map = {edge.key: edge for edge in self._edges}
        self._order = tuple(order)
        self._position = {node: index for index, node in enumerate(self._order)}
        self._coupling_box = coupling_box
        self._coupling_roles = tuple(coupling_roles)
        self._name = name
        self._lift_dim = lift_dim

        in_neighbours = {node.id: [] for node in self._nodes}
        out_neighbours = {node.id: [] for node in self._nodes}
        for edge in self._edges:
            in_neighbours[edge.target].append(edge.source)
            out_neighbours[edge.source].append(edge.target)
        self._in = {key: tuple(sorted(value)) for key, value in in_neighbours.items()}
        self._out = {key: tuple(sorted(value)) for key, value in out_neighbours.items()}

    @property
    def nodes(self):
        """:rtype: :class:`tuple <python:tuple>` of :class:`NodeSpec`"""
        return self._nodes

    @property
    def edges(self):
        """Edges sorted by ``(source, target)``.

        :rtype: :class:`tuple <python:tuple>` of :class:`EdgeSpec`
        """
        return self._edges

    @property
    def n_nodes(self):
        return len(self._nodes)

    @property
    def name(self):
        """:rtype: :class:`str <python:str>`"""
        return self._name

    @property
    def coupling_box(self):
        """Box of the coupling parameters ``z`` (and ``eps``), if any.

        :rtype: :class:`Box` / :obj:`None <python:None>`
        """
        return self._coupling_box

    @property
    def coupling_roles(self):
        """Ordered ``(tag, width)`` roles of the coupling columns.

        :rtype: :class:`list <python:list>`
        """
        return list(self._coupling_roles)

    @property
    def coupling_dim(self):
        return self._coupling_box.dim if self._coupling_box is not None else 0

    @property
    def is_coupled(self):
        return self._coupling_box is not None

    @property
    def is_lifted(self):
        return self._lift_dim > 0

    @property
    def lift_dim(self):
        return self._lift_dim

    @property
    def order(self):
        """The precedence ordering (see :func:`topological_order`).

        :rtype: :class:`tuple <python:tuple>`
        """
        return self._order

    def position(self, node):
        return self._position[node]

    def node(self, node):
        return self._nodes[node]

    def edge(self, source, target):
        try:
            return self._edge_map[(source, target)]
        except KeyError:
            raise errors.GraphStructureError(f'no edge ({source}, {target})')

    def in_neighbours(self, node):
        """:rtype: :class:`tuple <python:tuple>` of :class:`int <python:int>`, ascending"""
        return self._in[node]

    def out_neighbours(self, node):
        """:rtype: :class:`tuple <python:tuple>` of :class:`int <python:int>`, ascending"""
        return self._out[node]

    def payload_dim(self, source, target):
        """Length of the edge payload without any lifted coupling tail."""
        return self.edge(source, target).dim - self._lift_dim

    def input_dim(self, node):
        return sum(self.payload_dim(source, node) for source in self._in[node])

    def param_dim(self, node):
        return self._nodes[node].param_box.dim - self._lift_dim

    def param_box(self, node):
        """Box of the node's own parameters (without lifted copies).

        :rtype: :class:`Box`
        """
        return self._nodes[node].param_box.slice(0, self.param_dim(node))

    def input_slices(self, node):
        """Map of in-neighbour to its column slice within ``u_node``."""
        slices = {}
        start = 0
        for source in self._in[node]:
            width = self.payload_dim(source, node)
            slices[source] = slice(start, start + width)
            start += width
        return slices

    def subproblem_roles(self, node):
        """Column roles of node subproblems: ``[v_i | u_i blocks | coupling]``."""
        roles = [(f'v{node}', self.param_dim(node))]
        roles.extend((f'u{source}>{node}', self.payload_dim(source, node))
                     for source in self._in[node])
        roles.extend(self._coupling_roles)
        return roles

    def subproblem_dim(self, node):
        return sum(width for _, width in self.subproblem_roles(node))

    def joint_roles(self):
        roles = [(f'v{node.id}', self.param_dim(node.id)) for node in self._nodes]
        roles.extend(self._coupling_roles)
        return roles

    def joint_box(self):
        """``K_v`` (times ``K_z`` on coupled graphs).

        :rtype: :class:`Box`
        """
        boxes = [self.param_box(node.id) for node in self._nodes]
        if self._coupling_box is not None:
            boxes.append(self._coupling_box)
        return box_product(boxes)

    def evaluate_node(self, node, v, u, z = None, constraints = True, outputs = True):
        """Evaluate node ``node`` at its own parameters ``v`` and inputs ``u``.

        ``v`` and ``u`` never include lifted coupling copies; on lifted graphs they are
        assembled here from ``z``.

        :returns: ``G_i`` (or :obj:`None <python:None>`) and a map of out-neighbour to
          payload (or :obj:`None <python:None>`).
        :rtype: :class:`NodeEvaluation`

        :raises DimensionMismatchError: if an argument or a returned payload has the
          wrong length
        """
        spec = self._nodes[node]
        v = np.asarray(v, dtype = float).reshape(-1)
        u = np.asarray(u, dtype = float).reshape(-1)
        if v.size != self.param_dim(node):
            raise errors.DimensionMismatchError(f'node {node} expects {self.param_dim(node)} '
                                                f'parameters. Was: {v.size}')
        if u.size != self.input_dim(node):
            raise errors.DimensionMismatchError(f'node {node} expects {self.input_dim(node)} '
                                                f'inputs. Was: {u.size}')
        if self.is_coupled:
            if z is None:
                raise errors.DimensionMismatchError(f'graph {self._name} needs coupling '
                                                    'parameters z')
            z = np.asarray(z, dtype = float).reshape(-1)
            if z.size != self.coupling_dim:
                raise errors.DimensionMismatchError(f'z must have {self.coupling_dim} '
                                                    f'entries. Was: {z.size}')

        if self.is_lifted:
            slices = self.input_slices(node)
            args = (np.concatenate([v, z]),
                    np.concatenate([np.concatenate([u[slices[source]], z])
                                    for source in self._in[node]] or [np.zeros(0)]))
        elif self.is_coupled:
            args = (v, u, z)
        else:
            args = (v, u)

        g = None
        if constraints:
            g = np.atleast_1d(np.asarray(spec.constraint_fn(*args), dtype = float)).reshape(-1)

        payloads = None
        if outputs:
            payloads = {}
            for target, fn in spec.constituent_fns.items():
                y = np.atleast_1d(np.asarray(fn(*args), dtype = float)).reshape(-1)
                if y.size != self.edge(node, target).dim:
                    raise errors.DimensionMismatchError(
                        f'edge ({node}, {target}) carries {self.edge(node, target).dim} '
                        f'values. Was: {y.size}'
                    )
                payloads[target] = y[:self.payload_dim(node, target)]

        return NodeEvaluation(g, payloads)

    def split_params(self, v):
        """Split a joint parameter vector into per-node blocks (node-id order).

        :raises DimensionMismatchError: if ``v`` does not have one entry per parameter
        """
        v = np.asarray(v, dtype = float).reshape(-1)
        sizes = [self.param_dim(node.id) for node in self._nodes]
        if v.size != sum(sizes):
            raise errors.DimensionMismatchError(f'graph {self._name} has {sum(sizes)} '
                                                f'parameters. Was: {v.size}')
        return np.split(v, np.cumsum(sizes)[:-1]) if sizes else []

    def evaluate_forward(self, v, z = None, constraints = True, stop_on_violation = False):
        """Evaluate every node in precedence order, wiring each output to its edge target.

        With ``constraints = False`` only nodes with out-edges are evaluated. With
        ``stop_on_violation`` the pass ends at the first node whose constraints are
        violated.

        :returns: Per-node inputs, per-edge payloads, per-node constraint values, and the
          number of node evaluations spent.
        :rtype: :class:`CompositeEvaluation`
        """
        blocks = self.split_params(v)
        inputs, payloads, values = {}, {}, {}
        n_evaluations = 0
        for node in self._order:
            incoming = [payloads[(source, node)] for source in self._in[node]]
            inputs[node] = np.concatenate(incoming) if incoming else np.zeros(0)
            needs_outputs = bool(self._out[node])
            if not constraints and not needs_outputs:
                continue

            result = self.evaluate_node(node,
                                        blocks[node],
                                        inputs[node],
                                        z,
                                        constraints = constraints,
                                        outputs = needs_outputs)
            n_evaluations += 1
            for target, payload in (result.outputs or {}).items():
                payloads[(node, target)] = payload
            if constraints:
                values[node] = result.constraints
                if stop_on_violation and np.any(result.constraints > 0):
                    break

        return CompositeEvaluation(inputs, payloads, values, n_evaluations)

    def to_dict(self):
        """Structural description (no callables)."""
        return {
            'name': self._name,
            'nodes': [node.to_dict() for node in self._nodes],
            'edges': [edge.to_dict() for edge in self._edges],
            'coupling_box': self._coupling_box.to_dict() if self._coupling_box else None,
            'coupling_roles': [[tag, width] for tag, width in self._coupling_roles],
            'lift_dim': self._lift_dim,
        }

    def __repr__(self):
        return (f'GraphSpec(name={self._name!r}, nodes={self.n_nodes}, '
                f'edges={[edge.key for edge in self._edges]})')


def _kahn(n_nodes, edges):
    """Kahn's algorithm; ties are broken by ascending node id."""
    in_degree = [0] * n_nodes
    children = [[] for _ in range(n_nodes)]
    for edge in edges:
        in_degree[edge.target] += 1
        children[edge.source].append(edge.target)

    ready = [node for node in range(n_nodes) if in_degree[node] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in children[node]:
            in_degree[child] -= 1
            if in_degree[child] == 0:
                heapq.heappush(ready, child)

    if len(order) != n_nodes:
        stuck = sorted(set(range(n_nodes)) - set(order))
        raise errors.CycleDetectedError(f'edges admit no topological order; nodes {stuck} '
                                        'lie on or behind a cycle')
    return order


def build_graph(nodes,
                edges,
                coupling_box = None,
                coupling_roles = None,
                name = None,
                lifted = False):
    """Validate a node and edge declaration and return the immutable graph.

    :param nodes: Node declarations with ids ``0..N-1`` (any order).
    :type nodes: iterable of :class:`NodeSpec`

    :param edges: Edges as :class:`EdgeSpec` objects or ``(source, target, dim)`` tuples.
    :type edges: iterable

    :param coupling_box: Box of coupling parameters shared by all nodes. Defaults to
      :obj:`None <python:None>`.
    :type coupling_box: :class:`Box` / :obj:`None <python:None>`

    :param coupling_roles: ``(tag, width)`` roles splitting ``coupling_box``. Defaults to a
      single ``'z'`` role.

    :param name: Graph name, used to match runs against each other.
    :type name: :class:`str <python:str>`

    :param lifted: ``True`` when parameter boxes and edge payloads already carry coupling
      copies (see :func:`dag_feasibility.propagate.lift_coupling`).
    :type lifted: :class:`bool <python:bool>`

    :rtype: :class:`GraphSpec`

    :raises GraphStructureError: on non-contiguous ids, unknown endpoints, self-loops,
      parallel edges, or constituent functions that do not match the out-edges
    :raises CycleDetectedError: if the edges contain a cycle
    :raises DimensionMismatchError: if a declared input dimension disagrees with the
      incoming edges
    """
    nodes = sorted(validators.iterable(nodes, allow_empty = False), key = lambda node: node.id)
    for node in nodes:
        if not isinstance(node, NodeSpec):
            raise ValueError(f'nodes must be NodeSpec objects. Was: {node.__class__.__name__}')
    ids = [node.id for node in nodes]
    if ids != list(range(len(nodes))):
        raise errors.GraphStructureError(f'node ids must be contiguous from 0. Was: {ids}')

    edges = [edge if isinstance(edge, EdgeSpec) else EdgeSpec(*edge)
             for edge in (validators.iterable(edges, allow_empty = True) or [])]
    seen = set()
    for edge in edges:
        if edge.source >= len(nodes) or edge.target >= len(nodes):
            raise errors.GraphStructureError(f'{edge} references a missing node')
        if edge.source == edge.target:
            raise errors.GraphStructureError(f'{edge} is a self-loop')
        if edge.key in seen:
            raise errors.GraphStructureError(f'parallel edge {edge.key} is not permitted')
        seen.add(edge.key)

    for node in nodes:
        declared = set(node.constituent_fns)
        expected = {edge.target for edge in edges if edge.source == node.id}
        if declared != expected:
            raise errors.GraphStructureError(f'node {node.id} maps edges to {sorted(declared)} '
                                             f'but its out-neighbours are {sorted(expected)}')

    if coupling_box is not None and not isinstance(coupling_box, Box):
        raise ValueError('coupling_box must be a Box')
    if coupling_box is not None:
        coupling_roles = coupling_roles or [('z', coupling_box.dim)]
        coupling_roles = [(validators.string(tag), validators.integer(width, minimum = 1))
                          for tag, width in coupling_roles]
        if sum(width for _, width in coupling_roles) != coupling_box.dim:
            raise errors.DimensionMismatchError('coupling roles do not cover the coupling box')
    else:
        if lifted:
            raise errors.MissingCouplingBoxError('a lifted graph needs a coupling box')
        coupling_roles = []
    lift_dim = coupling_box.dim if lifted else 0

    for node in nodes:
        incoming = sum(edge.dim - lift_dim for edge in edges if edge.target == node.id)
        if node.input_dim is not None and node.input_dim != incoming:
            raise errors.DimensionMismatchError(f'node {node.id} declares {node.input_dim} '
                                                f'inputs but its in-edges carry {incoming}')
        if node.param_box.dim < lift_dim:
            raise errors.DimensionMismatchError(f'lifted node {node.id} lacks coupling copies')

    order = _kahn(len(nodes), edges)
    graph = GraphSpec(nodes,
                      edges,
                      order,
                      coupling_box,
                      coupling_roles,
                      validators.string(name, allow_empty = True) or 'graph',
                      lift_dim)
    logger.debug('built %r with order %s', graph, list(order))
    return graph


def topological_order(graph):
    """Return the precedence ordering of ``graph``.

    Kahn's algorithm with ties broken by ascending id, so the order is a deterministic
    total order consistent with the edges.

    :rtype: :class:`list <python:list>` of :class:`int <python:int>`
    """
    return list(graph.order)


def roots_and_leaves(graph):
    """Return the nodes without in-neighbours and the nodes without out-neighbours.

    :rtype: :class:`tuple <python:tuple>` of two :class:`set <python:set>` objects
    """
    roots = {node.id for node in graph.nodes if not graph.in_neighbours(node.id)}
    leaves = {node.id for node in graph.nodes if not graph.out_neighbours(node.id)}
    return roots, leaves


def adjacency_matrix(graph):
    """Return the ``N x N`` 0/1 matrix with ``a[i, k] = 1`` iff edge ``(i, k)`` exists.

    :rtype: :class:`numpy.ndarray`
    """
    matrix = np.zeros((graph.n_nodes, graph.n_nodes), dtype = int)
    for edge in graph.edges:
        matrix[edge.source, edge.target] = 1
    return matrix
