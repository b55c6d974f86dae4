"""Database index of search runs. The run directory stays the source of truth."""

import logging

from django.db import transaction
from django.utils import timezone

from .models import NodeEvaluation, SearchRun

logger = logging.getLogger(__name__)


class RunRegistry:
    """Mirrors run-log records and the final summary of one run into the database."""

    def __init__(self, config, output_dir):
        self.run = SearchRun.objects.create(
            output_dir=str(output_dir),
            budget=config.budget,
            search_seed=config.search_seed,
            data_seed=config.data_seed,
        )
        logger.debug("Registered run %d for %s", self.run.pk, output_dir)

    def record(self, record):
        if record.get('op') == 'seed':
            self.run.seed_fitness = record.get('fitness')
        with transaction.atomic():
            NodeEvaluation.objects.create(
                run=self.run,
                eval_index=record['eval'],
                op=record['op'],
                inputs=record.get('inputs', []),
                node=record.get('node'),
                fitness=record.get('fitness'),
                elite_fitness=record.get('elite_fitness'),
                rechat_rounds=record.get('rechat_rounds', 0),
            )
            self.run.evaluations = record['eval']
            self.run.elite_fitness = record.get('elite_fitness')
            self.run.save(update_fields=['evaluations', 'elite_fitness', 'seed_fitness'])

    def finish(self, status, summary):
        self.run.status = status
        self.run.elite_fitness = summary.get('elite_fitness')
        self.run.elite_node = summary.get('elite_node')
        self.run.test_fitness = summary.get('test_fitness')
        self.run.message = summary.get('message', '')
        self.run.finished_at = timezone.now()
        self.run.save()
