from django.db import models


class SearchRun(models.Model):
    """One search run; the run directory holds the full artifacts."""

    STATUS_CHOICES = [
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('halted', 'Halted'),
        ('aborted', 'Aborted'),
    ]

    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='running')
    budget = models.IntegerField()
    search_seed = models.IntegerField(default=0)
    data_seed = models.IntegerField(default=0)
    evaluations = models.IntegerField(default=0)
    seed_fitness = models.FloatField(blank=True, null=True)
    elite_fitness = models.FloatField(blank=True, null=True)
    test_fitness = models.FloatField(blank=True, null=True)
    elite_node = models.IntegerField(blank=True, null=True)
    message = models.TextField(blank=True, default='')
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    def __str__(self):
        return f"{self.output_dir} ({self.status})"

    class Meta:
        ordering = ['-started_at']


class NodeEvaluation(models.Model):
    """One record of the run log."""

    run = models.ForeignKey(SearchRun, on_delete=models.CASCADE, related_name='records')
    eval_index = models.IntegerField()
    op = models.CharField(max_length=10)
    inputs = models.JSONField(default=list)
    node = models.IntegerField(blank=True, null=True)  # null when the expansion was skipped
    fitness = models.FloatField(blank=True, null=True)
    elite_fitness = models.FloatField(blank=True, null=True)
    rechat_rounds = models.IntegerField(default=0)

    def __str__(self):
        return f"{self.run_id}#{self.eval_index} {self.op}: {self.fitness}"

    class Meta:
        unique_together = ('run', 'eval_index')
        ordering = ['run', 'eval_index']
