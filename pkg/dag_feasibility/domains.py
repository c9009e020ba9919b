# -*- coding: utf-8 -*-
"""Axis-aligned boxes, interval hulls, and labeled sample containers."""
import logging
import os
from typing import Callable, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import simplejson as json
from validator_collection import validators, checkers

from dag_feasibility import errors

logger = logging.getLogger(__name__)

HULL_FLOOR = 1e-9

FEASIBLE = -1
INFEASIBLE = 1


def _as_vector(value, name = 'value'):
    array = np.asarray(value, dtype = float)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.ndim != 1:
        raise errors.DimensionMismatchError(f'{name} must be a vector. '
                                            f'Was: {array.ndim}-dimensional')
    return array


class Box(object):
    """Closed axis-aligned interval domain ``[lo, hi]``.

    Boxes are immutable. A box may have zero dimensions, which is how the input domain of a
    root node (or the parameter box of a node without local parameters) is represented.
    """

    def __init__(self, lo, hi):
        lo = _as_vector(lo, 'lo').copy()
        hi = _as_vector(hi, 'hi').copy()
        if lo.shape != hi.shape:
            raise errors.DimensionMismatchError(f'lo and hi must have the same length. '
                                                f'Was: {lo.size} and {hi.size}')
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError('box bounds must be finite')
        if np.any(lo > hi):
            raise ValueError(f'box bounds must satisfy lo <= hi. Was: lo={lo}, hi={hi}')

        lo.setflags(write = False)
        hi.setflags(write = False)
        self._lo = lo
        self._hi = hi

    @classmethod
    def empty(cls):
        """Return the zero-dimensional box.

        :rtype: :class:`Box`
        """
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def unit(cls, dim):
        """Return ``[0, 1]^dim``.

        :rtype: :class:`Box`
        """
        dim = validators.integer(dim, minimum = 0, coerce_value = True)
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def lo(self):
        """Lower corner of the box.

        :rtype: :class:`numpy.ndarray`
        """
        return self._lo

    @property
    def hi(self):
        """Upper corner of the box.

        :rtype: :class:`numpy.ndarray`
        """
        return self._hi

    @property
    def dim(self):
        """Number of dimensions.

        :rtype: :class:`int <python:int>`
        """
        return int(self._lo.size)

    @property
    def width(self):
        """Per-dimension widths ``hi - lo``.

        :rtype: :class:`numpy.ndarray`
        """
        return self._hi - self._lo

    @property
    def center(self):
        """Midpoint of the box.

        :rtype: :class:`numpy.ndarray`
        """
        return 0.5 * (self._lo + self._hi)

    def contains(self, points):
        """Closed containment test for a single point or a ``K x d`` matrix of points.

        :returns: :class:`bool <python:bool>` for a single point, otherwise a boolean vector
          with one entry per row.
        """
        return contains(self, points)

    def clip(self, points):
        """Project ``points`` onto the box componentwise."""
        return np.clip(np.asarray(points, dtype = float), self._lo, self._hi)

    def intersect(self, other):
        """Return the intersection with ``other``.

        :raises DimensionMismatchError: if the boxes differ in dimension
        :raises ValueError: if the intersection is empty
        """
        if other.dim != self.dim:
            raise errors.DimensionMismatchError(f'cannot intersect a {self.dim}-dim box with '
                                                f'a {other.dim}-dim box')
        return Box(np.maximum(self._lo, other.lo), np.minimum(self._hi, other.hi))

    def slice(self, start, stop):
        """Return the sub-box over columns ``start:stop``."""
        return Box(self._lo[start:stop], self._hi[start:stop])

    def to_dict(self):
        return {'lo': self._lo.tolist(), 'hi': self._hi.tolist()}

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = False)
        return cls(as_dict.get('lo', []), as_dict.get('hi', []))

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self._lo, other.lo) and np.array_equal(self._hi, other.hi)

    def __hash__(self):
        return hash((self._lo.tobytes(), self._hi.tobytes()))

    def __repr__(self):
        bounds = ' x '.join(f'[{a:g}, {b:g}]' for a, b in zip(self._lo, self._hi))
        return f'Box({bounds or "empty"})'


def interval_hull(points, inflation_fraction = 0.0):
    """Return the interval hull of ``points``, inflated for conservatism.

    Each dimension's width grows by ``inflation_fraction`` times its sampled range, split
    evenly between the two sides. A dimension with zero range is widened by ``1e-9`` on each
    side instead.

    :param points: ``K x d`` matrix, ``K >= 1``.
    :type points: array-like

    :param inflation_fraction: Relative growth of each width. Defaults to ``0``.
    :type inflation_fraction: :class:`float <python:float>`

    :rtype: :class:`Box`

    :raises EmptyPointSetError: if ``points`` holds no rows
    """
    inflation_fraction = validators.float(inflation_fraction, minimum = 0)
    points = np.asarray(points, dtype = float)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.ndim != 2 or points.shape[0] == 0:
        raise errors.EmptyPointSetError('interval_hull requires at least one point')
    if points.shape[1] == 0:
        return Box.empty()

    lo = points.min(axis = 0)
    hi = points.max(axis = 0)
    spread = hi - lo
    pad = 0.5 * inflation_fraction * spread
    pad[spread == 0] = HULL_FLOOR

    return Box(lo - pad, hi + pad)


def box_product(boxes):
    """Return the Cartesian product of ``boxes`` (lo/hi vectors concatenated in order).

    :rtype: :class:`Box`
    """
    boxes = validators.iterable(boxes, allow_empty = False)
    for box in boxes:
        if not isinstance(box, Box):
            raise ValueError(f'box_product expects Box objects. Was: {box.__class__.__name__}')

    return Box(np.concatenate([box.lo for box in boxes]),
               np.concatenate([box.hi for box in boxes]))


def contains(box, point):
    """Closed containment test ``lo <= point <= hi``.

    :param box: The box to test against.
    :type box: :class:`Box`

    :param point: A ``d``-vector, or a ``K x d`` matrix to test row-wise.

    :returns: ``True`` if inside (or a boolean vector for a matrix).

    :raises DimensionMismatchError: if the trailing dimension differs from ``box.dim``
    """
    array = np.asarray(point, dtype = float)
    if array.ndim == 0:
        array = array.reshape(1)
    if array.shape[-1] != box.dim:
        raise errors.DimensionMismatchError(f'point has dimension {array.shape[-1]}, '
                                            f'box has dimension {box.dim}')
    inside = np.logical_and(array >= box.lo, array <= box.hi).all(axis = -1)
    if array.ndim == 1:
        return bool(inside)
    return inside


RoleFilter = Union[str, Iterable[str], Callable[[str], bool]]


class SampleSet(object):
    """Matrix of evaluated points with feasibility labels and evaluation provenance.

    Columns are grouped into contiguous *roles*, each an ordered ``(tag, width)`` pair.
    Tags used by the library are ``v<i>`` (parameters of node ``i``), ``u<j>><i>`` (payload
    of edge ``(j, i)``), ``z`` and ``eps`` (lifted coupling parameters).
    """

    def __init__(self, points, labels, n_evaluations, column_roles, metadata = None):
        points = np.asarray(points, dtype = float)
        if points.ndim == 1:
            points = points.reshape(-1, 1) if points.size else points.reshape(0, 0)
        if points.ndim != 2:
            raise errors.DimensionMismatchError('points must be a K x d matrix')

        labels = np.asarray(labels, dtype = int).reshape(-1)
        if labels.size != points.shape[0]:
            raise errors.DimensionMismatchError(f'expected {points.shape[0]} labels. '
                                                f'Was: {labels.size}')
        if not np.all(np.isin(labels, (FEASIBLE, INFEASIBLE))):
            raise ValueError('labels must be -1 (feasible) or +1 (infeasible)')

        column_roles = [(validators.string(tag), validators.integer(width,
                                                                    minimum = 0,
                                                                    coerce_value = True))
                        for tag, width in column_roles]
        tags = [tag for tag, _ in column_roles]
        if len(set(tags)) != len(tags):
            raise ValueError(f'column role tags must be unique. Was: {tags}')
        if sum(width for _, width in column_roles) != points.shape[1]:
            raise errors.DimensionMismatchError(
                f'column roles cover {sum(w for _, w in column_roles)} columns, '
                f'points have {points.shape[1]}'
            )

        points.setflags(write = False)
        labels.setflags(write = False)
        self._points = points
        self._labels = labels
        self._n_evaluations = validators.integer(n_evaluations,
                                                 minimum = points.shape[0],
                                                 coerce_value = True)
        self._column_roles = column_roles
        self._metadata = dict(metadata or {})

    @property
    def points(self):
        """``K x d`` matrix of evaluated points.

        :rtype: :class:`numpy.ndarray`
        """
        return self._points

    @property
    def labels(self):
        """Feasibility labels, ``-1`` feasible and ``+1`` infeasible.

        :rtype: :class:`numpy.ndarray`
        """
        return self._labels

    @property
    def n_evaluations(self):
        """Constituent-function evaluations spent producing the set.

        :rtype: :class:`int <python:int>`
        """
        return self._n_evaluations

    @property
    def column_roles(self):
        """Ordered ``(tag, width)`` pairs describing the columns.

        :rtype: :class:`list <python:list>` of :class:`tuple <python:tuple>`
        """
        return list(self._column_roles)

    @property
    def metadata(self):
        """Free-form provenance (sampler phase statistics and the like).

        :rtype: :class:`dict <python:dict>`
        """
        return self._metadata

    @property
    def size(self):
        return int(self._points.shape[0])

    @property
    def dim(self):
        return int(self._points.shape[1])

    @property
    def n_feasible(self):
        return int(np.count_nonzero(self._labels == FEASIBLE))

    @property
    def feasible_mask(self):
        return self._labels == FEASIBLE

    @property
    def tags(self):
        return [tag for tag, _ in self._column_roles]

    def role_slice(self, tag):
        """Return the column slice occupied by ``tag``.

        :raises UnknownRoleError: if ``tag`` is not a column role of this set
        """
        start = 0
        for role, width in self._column_roles:
            if role == tag:
                return slice(start, start + width)
            start += width
        raise errors.UnknownRoleError(f'role "{tag}" not in {self.tags}')

    def columns(self, tag):
        """Return the ``K x width`` block of columns for ``tag``."""
        return self._points[:, self.role_slice(tag)]

    def subset(self, rows):
        """Return the rows selected by ``rows`` (index array or boolean mask)."""
        rows = np.asarray(rows)
        return SampleSet(self._points[rows],
                         self._labels[rows],
                         self._n_evaluations,
                         self._column_roles,
                         metadata = self._metadata)

    def feasible(self):
        """Return the feasible rows only. ``n_evaluations`` is carried through."""
        return self.subset(self.feasible_mask)

    def column_names(self):
        names = []
        for tag, width in self._column_roles:
            names.extend(f'{tag}[{k}]' for k in range(width))
        return names

    def to_dataframe(self):
        """Return a :class:`pandas.DataFrame` with one column per coordinate plus ``label``."""
        df = pd.DataFrame(self._points, columns = self.column_names())
        df['label'] = self._labels
        return df

    def to_csv(self, path):
        """Write the set to ``path`` and its provenance to a JSON sidecar next to it.

        :returns: The path of the sidecar.
        :rtype: :class:`str <python:str>`
        """
        path = validators.path(path)
        self.to_dataframe().to_csv(path, index = False)
        sidecar = os.path.splitext(path)[0] + '.json'
        with open(sidecar, 'w') as file_:
            json.dump({
                'n_evaluations': self._n_evaluations,
                'column_roles': [[tag, width] for tag, width in self._column_roles],
                'metadata': self._metadata,
            }, file_, indent = 2, sort_keys = True, ignore_nan = True)

        return sidecar

    @classmethod
    def from_csv(cls, path):
        """Read a set written by :meth:`to_csv`."""
        if not checkers.is_file(path):
            raise FileNotFoundError(f'no sample file at {path}')
        df = pd.read_csv(path)
        sidecar = os.path.splitext(path)[0] + '.json'
        with open(sidecar, 'r') as file_:
            provenance = json.load(file_)

        labels = df.pop('label').to_numpy(dtype = int)
        points = df.to_numpy(dtype = float).reshape(len(df), -1)
        return cls(points,
                   labels,
                   provenance.get('n_evaluations', len(df)),
                   [tuple(role) for role in provenance.get('column_roles', [])],
                   metadata = provenance.get('metadata'))

    def __len__(self):
        return self.size

    def __repr__(self):
        return (f'SampleSet(size={self.size}, feasible={self.n_feasible}, '
                f'n_evaluations={self._n_evaluations}, roles={self.tags})')


def _select_tags(samples, column_role_filter):
    if callable(column_role_filter):
        return [tag for tag in samples.tags if column_role_filter(tag)]
    if checkers.is_string(column_role_filter):
        column_role_filter = [column_role_filter]
    wanted = validators.iterable(column_role_filter, allow_empty = False)
    for tag in wanted:
        if tag not in samples.tags:
            raise errors.UnknownRoleError(f'role "{tag}" not in {samples.tags}')
    return [tag for tag in samples.tags if tag in wanted]


def project(samples, column_role_filter):
    """Keep only the columns whose role tags pass ``column_role_filter``.

    Labels and ``n_evaluations`` are carried through unchanged; columns keep their original
    order.

    :param samples: The set to project.
    :type samples: :class:`SampleSet`

    :param column_role_filter: A tag, an iterable of tags, or a predicate on tags.

    :rtype: :class:`SampleSet`

    :raises UnknownRoleError: if a requested tag is not present
    """
    tags = _select_tags(samples, column_role_filter)
    if not tags:
        raise errors.UnknownRoleError('column_role_filter selected no columns')

    blocks = [samples.columns(tag) for tag in tags]
    roles = [(tag, width) for tag, width in samples.column_roles if tag in tags]
    return SampleSet(np.hstack(blocks) if blocks else np.zeros((samples.size, 0)),
                     samples.labels,
                     samples.n_evaluations,
                     roles,
                     metadata = samples.metadata)
