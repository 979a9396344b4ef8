from django.db import models
from django.utils import timezone


class RunStatus(models.TextChoices):
    PENDING = 'pending', 'Pending'
    RUNNING = 'running', 'Running'
    COMPLETED = 'completed', 'Completed'
    FAILED = 'failed', 'Failed'


class CommandKind(models.TextChoices):
    KL = 'kl', 'KL decomposition'
    CERTIFY = 'certify', 'Stability certificate'
    SIMULATE = 'simulate', 'Simulation'
    SWEEP = 'sweep', 'Parameter sweep'


class ExperimentRun(models.Model):
    """One invocation of a stabilizer command on a config file"""
    name = models.CharField(max_length=255)
    command = models.CharField(max_length=20, choices=CommandKind.choices)
    config_hash = models.CharField(max_length=64)
    config_text = models.TextField(blank=True)
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.PENDING)
    started_at = models.DateTimeField(default=timezone.now)
    basis_size = models.IntegerField(null=True, blank=True)
    lambda_min = models.FloatField(null=True, blank=True)
    margin = models.FloatField(null=True, blank=True)
    decay_rate = models.FloatField(null=True, blank=True)
    certificate_valid = models.BooleanField(null=True, blank=True)
    final_normalized_lyapunov = models.FloatField(null=True, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    error_message = models.TextField(blank=True, null=True)

    class Meta:
        ordering = ['-started_at']
        indexes = [
            models.Index(fields=['name'], name='stabilizer_run_name_idx'),
            models.Index(fields=['started_at'], name='stabilizer_run_started_idx'),
        ]
        unique_together = [
            ['config_hash', 'command']
        ]

    def __str__(self):
        return f"{self.name} [{self.command}] ({self.started_at.strftime('%Y-%m-%d %H:%M')})"


class SweepPoint(models.Model):
    """Outcome of one value of a parameter sweep"""
    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name='points'
    )
    parameter = models.CharField(max_length=100)
    value = models.CharField(max_length=100)
    position = models.IntegerField(default=0)
    status = models.CharField(max_length=20, choices=RunStatus.choices, default=RunStatus.PENDING)
    margin = models.FloatField(null=True, blank=True)
    decay_rate = models.FloatField(null=True, blank=True)
    final_normalized_lyapunov = models.FloatField(null=True, blank=True)
    error_message = models.TextField(blank=True, null=True)

    class Meta:
        ordering = ['run', 'position']
        unique_together = [
            ['run', 'position']
        ]

    def __str__(self):
        return f"{self.parameter} = {self.value}: {self.status}"
