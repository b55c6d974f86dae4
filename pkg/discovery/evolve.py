"""
Evolutionary layer over the search tree.

An expansion level issues a fixed multiset of operators against the node the
tree policy selected: parent crossover (PC), path-wise crossover (PWC),
sibling crossover (SC) and point mutation (PM). The population keeps the
elite and refills its other slots by softmax sampling on fitness.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, SearchAborted

logger = logging.getLogger(__name__)

KINDS = ('PC', 'SC', 'PWC', 'PM')
LEVEL_SCHEDULE = ('PC',) * 5 + ('PWC',) * 2 + ('SC',) + ('PM',) * 2
SIBLING_EPSILON = 1e-10
# keeps every member drawable when the softmax underflows
SELECTION_FLOOR = 1e-12


@dataclass(frozen=True)
class OpRequest:
    kind: str
    focus: int
    inputs: tuple
    variant: str = ''

    def to_dict(self):
        return {'kind': self.kind, 'focus': self.focus, 'inputs': list(self.inputs), 'variant': self.variant}

    @classmethod
    def from_dict(cls, data):
        return cls(data['kind'], data['focus'], tuple(data['inputs']), data.get('variant', ''))


@dataclass
class Population:
    k: int = 10
    beta: float = 0.005
    members: list = field(default_factory=list)
    elite: int = None

    def to_dict(self):
        return {'k': self.k, 'beta': self.beta, 'members': list(self.members), 'elite': self.elite}


class VariantCycle:
    """Alternates prompt variants per operator kind (PM single/two-stage, PWC reflection/analysis)."""

    def __init__(self, variants):
        self.variants = {kind: tuple(options) for kind, options in variants.items() if options}
        self.position = {kind: 0 for kind in self.variants}

    def next(self, kind):
        options = self.variants.get(kind)
        if not options:
            return ''
        variant = options[self.position[kind] % len(options)]
        self.position[kind] += 1
        return variant


def level_schedule():
    return list(LEVEL_SCHEDULE)


def plan_level(enabled=True, rng=None):
    """Operator kinds for one expansion: the full schedule, or one random operator when disabled."""
    if enabled:
        return level_schedule()
    return [KINDS[int(rng.integers(len(KINDS)))]]


def sibling_weights(fitnesses):
    """Sampling probabilities proportional to fitness (negative fitness counts as zero)."""
    weights = np.maximum(np.asarray(fitnesses, dtype=np.float64), 0.0) + SIBLING_EPSILON
    return weights / weights.sum()


def selection_probabilities(fitnesses, beta):
    """Softmax of beta * fitness, shifted by the maximum for stability."""
    scaled = beta * np.asarray(fitnesses, dtype=np.float64)
    weights = np.exp(scaled - scaled.max())
    weights = np.maximum(weights / weights.sum(), SELECTION_FLOOR)
    return weights / weights.sum()


def choose_inputs(kind, state, focus_id, *, elite_id, rng, m=3, variant=''):
    """Input node ids for one operator applied at `focus_id`."""
    focus = state.nodes[focus_id]
    if kind == 'PC':
        baseline = focus.parent if focus.parent is not None else focus_id
        better = state.best_node(max_depth=focus.depth)
        return OpRequest('PC', focus_id, (baseline, better.id if better else focus_id), variant)
    if kind == 'SC':
        siblings = [
            n for n in state.evaluated_nodes()
            if n.depth == focus.depth and n.id != focus_id
        ]
        if not siblings:
            logger.debug("No siblings at depth %d for node %d; using PM", focus.depth, focus_id)
            return OpRequest('PM', focus_id, (focus_id, elite_id), variant)
        siblings.sort(key=lambda n: n.id)
        count = min(m, len(siblings))
        p = sibling_weights([n.fitness for n in siblings])
        picked = rng.choice(len(siblings), size=count, replace=False, p=p)
        return OpRequest('SC', focus_id, (focus_id,) + tuple(siblings[i].id for i in picked), variant)
    if kind == 'PWC':
        return OpRequest('PWC', focus_id, tuple(state.path_to_root(focus_id)), variant)
    if kind == 'PM':
        return OpRequest('PM', focus_id, (focus_id, elite_id), variant)
    raise ParameterError(f"unknown operator {kind!r}")


def update_population(population, node_id, state, rng):
    """Add an evaluated node, keep the elite, and sample the remaining k-1 members."""
    node = state.nodes[node_id]
    if not node.evaluated:
        raise ParameterError(f"node {node_id} has no fitness")
    pool = sorted(set(population.members) | {node_id})
    elite = population.elite
    if elite is None or node.fitness > state.nodes[elite].fitness:
        elite = node_id
    others = [i for i in pool if i != elite]
    if len(others) > population.k - 1:
        p = selection_probabilities([state.nodes[i].fitness for i in others], population.beta)
        picked = rng.choice(len(others), size=population.k - 1, replace=False, p=p)
        others = sorted(others[i] for i in picked)
    if elite != population.elite:
        logger.info("New elite: node %d with fitness %.4f", elite, state.nodes[elite].fitness)
    population.elite = elite
    population.members = sorted([elite] + others)
    return population


def init_population(state, seed_id, propose, *, population, rng, variants=8, mutations=2, retries=2):
    """Fill the population with `variants` initialisation variants and `mutations` point mutations.

    `propose(kind, index, request)` runs one generation and returns the new
    node id, or None when the correction loop gave up. Every call consumes one
    unit of budget; the loop stops quietly when the budget is spent. A slot
    still failing after `retries` extra attempts aborts the search.
    """
    plan = [('init', i) for i in range(variants)] + [('PM', j) for j in range(mutations)]
    for kind, index in plan:
        node_id = None
        for attempt in range(retries + 1):
            if state.t >= state.budget:
                return population
            if kind == 'init':
                request = OpRequest('init', seed_id, (seed_id,))
            else:
                request = OpRequest('PM', seed_id, (seed_id, population.elite if population.elite is not None
                                                    else seed_id))
            node_id = propose(kind, index, request)
            if node_id is not None:
                break
            logger.warning("Initial %s slot %d failed (attempt %d of %d)", kind, index, attempt + 1, retries + 1)
        if node_id is None:
            raise SearchAborted(f"initial population slot {kind} #{index} failed after {retries + 1} attempts")
        update_population(population, node_id, state, rng)
    return population
