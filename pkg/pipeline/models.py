"""
Models for the pipeline application.

A TrainingRun records one invocation of the `train` command: the resolved
configuration, where the checkpoint went and how the run ended. Each
finished epoch adds an EpochRecord, so the loss curve of every run can be
listed later with `train --history`.
"""

from django.db import models


class TrainingRun(models.Model):
    """One training invocation and its outcome."""

    class Status(models.TextChoices):
        RUNNING = 'running', 'Running'
        COMPLETED = 'completed', 'Completed'
        DIVERGED = 'diverged', 'Diverged'
        FAILED = 'failed', 'Failed'

    config = models.JSONField(
        help_text='The resolved RunConfig as a mapping.',
    )
    checkpoint = models.CharField(
        max_length=500,
        help_text='Path the trained parameters are written to.',
    )
    status = models.CharField(
        max_length=10,
        choices=Status.choices,
        default=Status.RUNNING,
    )
    message = models.TextField(
        blank=True,
        help_text='Diagnostics when the run did not complete.',
    )
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        ordering = ['-started_at']
        verbose_name = 'Training run'
        verbose_name_plural = 'Training runs'

    def __str__(self):
        return f'run {self.pk} [{self.status}]'

    @property
    def final_loss(self):
        """Mean loss of the last recorded epoch, or None."""
        last = self.epochs.order_by('-epoch').first()
        return last.mean_loss if last else None


class EpochRecord(models.Model):
    """Learning rate and mean loss of one epoch of a run."""

    class Stage(models.TextChoices):
        PRETRAIN = 'pretrain', 'Pretrain'
        END_TO_END = 'end_to_end', 'End to end'

    run = models.ForeignKey(
        TrainingRun,
        on_delete=models.CASCADE,
        related_name='epochs',
    )
    epoch = models.PositiveIntegerField()
    stage = models.CharField(max_length=12, choices=Stage.choices)
    learning_rate = models.FloatField()
    mean_loss = models.FloatField()
    full_loss = models.FloatField(
        null=True,
        blank=True,
        help_text='Mean of the complete two-term loss, comparable across stages.',
    )

    class Meta:
        unique_together = ['run', 'epoch']
        ordering = ['run', 'epoch']
        verbose_name = 'Epoch record'
        verbose_name_plural = 'Epoch records'

    def __str__(self):
        return f'{self.run} epoch {self.epoch}: {self.mean_loss:.4f}'
