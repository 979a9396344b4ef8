# Generated by Django 5.0.1

import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=255)),
                ('command', models.CharField(choices=[('kl', 'KL decomposition'), ('certify', 'Stability certificate'), ('simulate', 'Simulation'), ('sweep', 'Parameter sweep')], max_length=20)),
                ('config_hash', models.CharField(max_length=64)),
                ('config_text', models.TextField(blank=True)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('started_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('basis_size', models.IntegerField(blank=True, null=True)),
                ('lambda_min', models.FloatField(blank=True, null=True)),
                ('margin', models.FloatField(blank=True, null=True)),
                ('decay_rate', models.FloatField(blank=True, null=True)),
                ('certificate_valid', models.BooleanField(blank=True, null=True)),
                ('final_normalized_lyapunov', models.FloatField(blank=True, null=True)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('error_message', models.TextField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-started_at'],
                'indexes': [models.Index(fields=['name'], name='stabilizer_run_name_idx'), models.Index(fields=['started_at'], name='stabilizer_run_started_idx')],
                'unique_together': {('config_hash', 'command')},
            },
        ),
        migrations.CreateModel(
            name='SweepPoint',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('parameter', models.CharField(max_length=100)),
                ('value', models.CharField(max_length=100)),
                ('position', models.IntegerField(default=0)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('margin', models.FloatField(blank=True, null=True)),
                ('decay_rate', models.FloatField(blank=True, null=True)),
                ('final_normalized_lyapunov', models.FloatField(blank=True, null=True)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='points', to='stabilizer.experimentrun')),
            ],
            options={
                'ordering': ['run', 'position'],
                'unique_together': {('run', 'position')},
            },
        ),
    ]
