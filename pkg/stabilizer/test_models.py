from datetime import datetime, timezone as dt_timezone
from django.db import IntegrityError
from django.test import TestCase
from .models import CommandKind, ExperimentRun, RunStatus, SweepPoint


class ExperimentRunModelTest(TestCase):
    def create_run(self, **kwargs):
        values = {
            'name': 'certified_sigma40',
            'command': CommandKind.CERTIFY,
            'config_hash': 'a' * 64,
            'started_at': datetime(2024, 1, 15, 14, 30, tzinfo=dt_timezone.utc),
        }
        values.update(kwargs)
        return ExperimentRun.objects.create(**values)

    def test_create_run(self):
        """Test creating a run with defaults"""
        run = self.create_run()
        self.assertEqual(run.status, RunStatus.PENDING)
        self.assertIsNone(run.margin)
        self.assertIsNone(run.certificate_valid)
        self.assertEqual(str(run), 'certified_sigma40 [certify] (2024-01-15 14:30)')

    def test_hash_unique_per_command(self):
        """Test the same config may be run once per command"""
        self.create_run()
        self.create_run(command=CommandKind.SIMULATE)
        with self.assertRaises(IntegrityError):
            self.create_run()

    def test_ordering(self):
        """Test runs are listed newest first"""
        older = self.create_run()
        newer = self.create_run(config_hash='b' * 64, started_at=datetime(2024, 2, 1, tzinfo=dt_timezone.utc))
        self.assertEqual(list(ExperimentRun.objects.all()), [newer, older])


class SweepPointModelTest(TestCase):
    def setUp(self):
        self.run = ExperimentRun.objects.create(name='sweep_stress', command=CommandKind.SWEEP, config_hash='c' * 64)

    def test_create_points(self):
        """Test points are ordered by position within a run"""
        second = SweepPoint.objects.create(run=self.run, parameter='material.desired_stress', value='70', position=1)
        first = SweepPoint.objects.create(
            run=self.run,
            parameter='material.desired_stress',
            value='40',
            position=0,
            status=RunStatus.COMPLETED,
            margin=0.0887,
            decay_rate=0.09,
        )
        self.assertEqual(list(self.run.points.all()), [first, second])
        self.assertEqual(str(first), 'material.desired_stress = 40: completed')

    def test_position_unique_per_run(self):
        SweepPoint.objects.create(run=self.run, parameter='material.kappa', value='0.5', position=0)
        with self.assertRaises(IntegrityError):
            SweepPoint.objects.create(run=self.run, parameter='material.kappa', value='0.7', position=0)

    def test_cascade_delete(self):
        """Test deleting a run removes its points"""
        SweepPoint.objects.create(run=self.run, parameter='material.kappa', value='0.5')
        self.run.delete()
        self.assertEqual(SweepPoint.objects.count(), 0)
