"""
Search tree over candidate pipelines.

Nodes keep a value on the raw fitness scale; the normalized q used by UCT is
(value - min) / (max - min + epsilon) over every fitness seen so far and is
refreshed for all nodes whenever the extrema move. Every mutating call is
journaled so a run can be replayed into an identical tree.
"""

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

OPERATIONS = ('seed', 'init', 'PC', 'SC', 'PWC', 'PM')


@dataclass
class TreeNode:
    id: int
    parent: int = None
    depth: int = 0
    origin_op: str = 'seed'
    candidate: str = ''
    design_idea: str = ''
    summary: str = ''
    reflection: str = ''
    fitness: float = None
    value: float = None
    q: float = 0.0
    visits: int = 0
    pruned: bool = False
    children: list = field(default_factory=list)

    @property
    def evaluated(self):
        return self.fitness is not None

    def to_dict(self):
        return {
            'id': self.id,
            'parent': self.parent,
            'depth': self.depth,
            'op': self.origin_op,
            'fitness': self.fitness,
            'q': self.q,
            'value': self.value,
            'visits': self.visits,
            'pruned': self.pruned,
            'children': list(self.children),
            'design_idea': self.design_idea,
            'summary': self.summary,
            'reflection': self.reflection,
            'candidate': self.candidate,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=data['id'], parent=data['parent'], depth=data['depth'], origin_op=data['op'],
            candidate=data.get('candidate', ''), design_idea=data.get('design_idea', ''),
            summary=data.get('summary', ''), reflection=data.get('reflection', ''),
            fitness=data['fitness'], value=data.get('value'), q=data['q'], visits=data['visits'],
            pruned=data.get('pruned', False), children=list(data.get('children', [])),
        )


class SearchState:
    """Node store with UCT selection, gated expansion and discounted backpropagation."""

    def __init__(self, budget, *, c0=1.0, gamma=0.5, epsilon=1e-6, expansion_visits=2, max_depth=10,
                 prune_margin=0.2, prune_min_siblings=3, convergence_window=30, convergence_tol=0.01):
        self.budget = int(budget)
        self.c0 = c0
        self.gamma = gamma
        self.epsilon = epsilon
        self.expansion_visits = expansion_visits
        self.max_depth = max_depth
        self.prune_margin = prune_margin
        self.prune_min_siblings = prune_min_siblings
        self.convergence_window = convergence_window
        self.convergence_tol = convergence_tol

        self.nodes = {}
        self.q_min = None
        self.q_max = None
        self.t = 0
        self.ranked = []
        self.best_history = []
        self.journal = []

    @classmethod
    def from_config(cls, tree_config, budget):
        return cls(
            budget,
            c0=tree_config.c0,
            gamma=tree_config.gamma,
            epsilon=tree_config.epsilon,
            expansion_visits=tree_config.expansion_visits,
            max_depth=tree_config.max_depth,
            prune_margin=tree_config.prune_margin,
            prune_min_siblings=tree_config.prune_min_siblings,
            convergence_window=tree_config.convergence_window,
            convergence_tol=tree_config.convergence_tol,
        )

    def _settings(self):
        return {
            'c0': self.c0, 'gamma': self.gamma, 'epsilon': self.epsilon,
            'expansion_visits': self.expansion_visits, 'max_depth': self.max_depth,
            'prune_margin': self.prune_margin, 'prune_min_siblings': self.prune_min_siblings,
            'convergence_window': self.convergence_window, 'convergence_tol': self.convergence_tol,
        }

    # -- structure ---------------------------------------------------------

    @property
    def root(self):
        return self.nodes[0]

    def add_root(self, candidate='', design_idea='', summary='', reflection=''):
        if self.nodes:
            raise ParameterError("tree already has a root")
        self.journal.append(('root', candidate, design_idea, summary, reflection))
        self.nodes[0] = TreeNode(0, candidate=candidate, design_idea=design_idea, summary=summary,
                                 reflection=reflection)
        return 0

    def add_node(self, parent_id, origin_op, candidate='', design_idea='', summary='', reflection=''):
        """Attach a child without the expansion gate (initial population)."""
        if origin_op not in OPERATIONS:
            raise ParameterError(f"unknown operation {origin_op!r}")
        parent = self.nodes[parent_id]
        if parent.depth >= self.max_depth:
            raise ParameterError(f"node {parent_id} is at the depth cap {self.max_depth}")
        self.journal.append(('add', parent_id, origin_op, candidate, design_idea, summary, reflection))
        node_id = len(self.nodes)
        node = TreeNode(
            node_id, parent=parent_id, depth=parent.depth + 1, origin_op=origin_op,
            candidate=candidate, design_idea=design_idea, summary=summary, reflection=reflection,
            value=parent.value, q=parent.q,
        )
        self.nodes[node_id] = node
        parent.children.append(node_id)
        return node_id

    def can_expand(self, node_id):
        node = self.nodes[node_id]
        return node.depth < self.max_depth and node.visits >= self.expansion_visits

    def expansion_point(self, leaf_id):
        """The leaf itself, or its nearest ancestor below the depth cap."""
        node = self.nodes[leaf_id]
        while node.depth >= self.max_depth and node.parent is not None:
            node = self.nodes[node.parent]
        return node.id

    def expand(self, leaf_id, origin_op, candidate='', design_idea='', summary='', reflection=''):
        """New child of `leaf_id`; its q starts at the parent's q."""
        node = self.nodes[leaf_id]
        if node.depth >= self.max_depth:
            raise ParameterError(f"expansion refused: node {leaf_id} is at the depth cap {self.max_depth}")
        if node.visits < self.expansion_visits:
            raise ParameterError(
                f"expansion refused: node {leaf_id} has {node.visits} visits, needs {self.expansion_visits}"
            )
        return self.add_node(leaf_id, origin_op, candidate, design_idea, summary, reflection)

    def path_to_root(self, node_id):
        """Node ids from the root down to `node_id`."""
        path = []
        current = node_id
        while current is not None:
            path.append(current)
            current = self.nodes[current].parent
        return path[::-1]

    def evaluated_nodes(self):
        return [n for n in self.nodes.values() if n.evaluated]

    def best_node(self, max_depth=None):
        """Highest-fitness evaluated node (lowest id on ties), optionally limited in depth."""
        best = None
        for node in self.evaluated_nodes():
            if max_depth is not None and node.depth > max_depth:
                continue
            if best is None or node.fitness > best.fitness:
                best = node
        return best

    # -- selection ---------------------------------------------------------

    def exploration_constant(self):
        if self.budget <= 0:
            return 0.0
        return self.c0 * max(1.0 - self.t / self.budget, 0.0)

    def normalize(self, value):
        if value is None or self.q_min is None:
            return 0.0
        return (value - self.q_min) / (self.q_max - self.q_min + self.epsilon)

    def uct_score(self, node_id):
        node = self.nodes[node_id]
        if node.parent is None:
            raise ParameterError("the root has no UCT score")
        parent = self.nodes[node.parent]
        exploration = math.sqrt(math.log(parent.visits + 1) / (node.visits + self.epsilon))
        return node.q + self.exploration_constant() * exploration

    def select_leaf(self):
        """Descend by maximal UCT (ties to the lowest id), counting a visit on every node passed."""
        if not self.nodes:
            raise ParameterError("cannot select in an empty tree")
        self.journal.append(('select',))
        node = self.root
        node.visits += 1
        while node.depth < self.max_depth:
            children = [c for c in node.children if not self.nodes[c].pruned]
            if not children:
                break
            best_id, best_score = None, -math.inf
            for child_id in sorted(children):
                score = self.uct_score(child_id)
                if score > best_score:
                    best_id, best_score = child_id, score
            node = self.nodes[best_id]
            node.visits += 1
        return node.id

    # -- updates -----------------------------------------------------------

    def _refresh(self):
        for node in self.nodes.values():
            node.q = self.normalize(node.value)

    def backpropagate(self, node_id, fitness):
        """Record `fitness` on the node and blend it into every ancestor's value."""
        fitness = float(fitness)
        self.journal.append(('backprop', node_id, fitness))
        node = self.nodes[node_id]
        node.fitness = fitness
        node.value = fitness

        previous = (self.q_min, self.q_max)
        self.q_min = fitness if self.q_min is None else min(self.q_min, fitness)
        self.q_max = fitness if self.q_max is None else max(self.q_max, fitness)

        current = node
        while current.parent is not None:
            parent = self.nodes[current.parent]
            child_values = [self.nodes[c].value for c in parent.children if self.nodes[c].value is not None]
            if parent.value is None:
                parent.value = max(child_values)
            else:
                parent.value = parent.value * (1.0 - self.gamma) + max(child_values) * self.gamma
            current = parent

        if (self.q_min, self.q_max) != previous:
            logger.debug("Fitness range now [%.4f, %.4f]", self.q_min, self.q_max)
        self._refresh()
        bisect.insort(self.ranked, fitness)
        self.best_history.append(self.q_max)

    def tick(self):
        """Count one processed operation against the budget."""
        self.journal.append(('tick',))
        self.t += 1

    def maintenance(self):
        """Recompute pruning marks; returns (pruned ids, converged flag)."""
        self.journal.append(('maintenance',))
        pruned = []
        for node in self.nodes.values():
            node.pruned = False
            if node.parent is None or node.children or not node.evaluated:
                continue
            siblings = [
                self.nodes[c].q for c in self.nodes[node.parent].children
                if c != node.id and self.nodes[c].evaluated
            ]
            if len(siblings) < self.prune_min_siblings:
                continue
            if node.q < float(np.median(siblings)) - self.prune_margin:
                node.pruned = True
                pruned.append(node.id)
        return pruned, self.converged()

    def converged(self):
        window = self.convergence_window
        if len(self.best_history) <= window:
            return False
        now, then = self.best_history[-1], self.best_history[-1 - window]
        return now - then < self.convergence_tol * max(abs(then), self.epsilon)

    # -- persistence -------------------------------------------------------

    def to_dict(self):
        return {
            'budget': self.budget,
            't': self.t,
            'q_min': self.q_min,
            'q_max': self.q_max,
            'settings': self._settings(),
            'nodes': [self.nodes[i].to_dict() for i in sorted(self.nodes)],
        }

    @classmethod
    def from_dict(cls, data):
        state = cls(data['budget'], **data.get('settings', {}))
        state.t = data['t']
        state.q_min = data['q_min']
        state.q_max = data['q_max']
        for item in data['nodes']:
            node = TreeNode.from_dict(item)
            state.nodes[node.id] = node
        state.ranked = sorted(n.fitness for n in state.nodes.values() if n.evaluated)
        return state

    @classmethod
    def replay(cls, journal, budget, **settings):
        """Rebuild a state by re-applying a recorded journal."""
        state = cls(budget, **settings)
        for event in journal:
            kind, args = event[0], event[1:]
            if kind == 'root':
                state.add_root(*args)
            elif kind == 'add':
                state.add_node(*args)
            elif kind == 'select':
                state.select_leaf()
            elif kind == 'backprop':
                state.backpropagate(*args)
            elif kind == 'tick':
                state.tick()
            elif kind == 'maintenance':
                state.maintenance()
            else:
                raise ParameterError(f"unknown journal event {kind!r}")
        return state
