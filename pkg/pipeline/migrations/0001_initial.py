# Generated by Django 5.2.9 on 2026-10-17 10:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config', models.JSONField(help_text='The resolved RunConfig as a mapping.')),
                ('checkpoint', models.CharField(help_text='Path the trained parameters are written to.', max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('diverged', 'Diverged'), ('failed', 'Failed')], default='running', max_length=10)),
                ('message', models.TextField(blank=True, help_text='Diagnostics when the run did not complete.')),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'verbose_name': 'Training run',
                'verbose_name_plural': 'Training runs',
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('stage', models.CharField(choices=[('pretrain', 'Pretrain'), ('end_to_end', 'End to end')], max_length=12)),
                ('learning_rate', models.FloatField()),
                ('mean_loss', models.FloatField()),
                ('full_loss', models.FloatField(blank=True, help_text='Mean of the complete two-term loss, comparable across stages.', null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='pipeline.trainingrun')),
            ],
            options={
                'verbose_name': 'Epoch record',
                'verbose_name_plural': 'Epoch records',
                'ordering': ['run', 'epoch'],
                'unique_together': {('run', 'epoch')},
            },
        ),
    ]
