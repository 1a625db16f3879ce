import unittest

from distortion_lab.errors import ConfigurationError
from distortion_lab.runlog import BatchRecord, RunLog
from distortion_lab.schedules import (
    Constant,
    Cyclic,
    StepDecay,
    check_schedule,
    eps_schedule_from_log,
    lr_at,
    schedule_from_dict,
)


def _log(values_per_epoch):
    records = [BatchRecord(epoch=e, batch_index=b, train_loss=0.0, clean_acc=1.0, mean_delta_linf=v)
               for e, values in enumerate(values_per_epoch) for b, v in enumerate(values)]
    return RunLog(config={}, records=records)


class TestLearningRate(unittest.TestCase):
    def test_step_decay(self):
        schedule = StepDecay(0.01, 0.2, (60, 120, 160))
        self.assertAlmostEqual(lr_at(schedule, 130), 4e-4, places=15)
        self.assertEqual(lr_at(schedule, 59.9), 0.01)
        self.assertAlmostEqual(lr_at(schedule, 60), 0.002, places=15)

    def test_cyclic(self):
        schedule = Cyclic(0.3, 15, 30)
        self.assertEqual(lr_at(schedule, 15), 0.3)
        self.assertEqual(lr_at(schedule, 0), 0.0)
        self.assertAlmostEqual(lr_at(schedule, 7.5), 0.15)
        self.assertAlmostEqual(lr_at(schedule, 22.5), 0.15)
        self.assertEqual(lr_at(schedule, 30), 0.0)

    def test_constant(self):
        self.assertEqual(lr_at(Constant(0.01), 99.5), 0.01)

    def test_from_dict(self):
        self.assertEqual(schedule_from_dict(None, 0.01, 10), Constant(0.01))
        step = schedule_from_dict({"kind": "step", "milestones": [60, 120]}, 0.01, 200)
        self.assertEqual(step, StepDecay(0.01, 0.2, (60, 120)))
        cyclic = schedule_from_dict({"kind": "cyclic", "max_lr": 0.3}, 0.01, 30)
        self.assertEqual(cyclic, Cyclic(0.3, 15.0, 30.0))

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            StepDecay(0.01, 0.2, (120, 60))
        with self.assertRaises(ConfigurationError):
            Cyclic(0.3, 30, 30)
        with self.assertRaises(ConfigurationError):
            schedule_from_dict({"kind": "cosine"}, 0.01, 10)
        with self.assertRaises(ConfigurationError):
            schedule_from_dict({"kind": "step", "gamma": 0.1}, 0.01, 10)


class TestEpsSchedule(unittest.TestCase):
    def test_constant_source(self):
        self.assertEqual(eps_schedule_from_log(_log([[0.02] * 4] * 3)), [0.02, 0.02, 0.02])

    def test_epoch_means(self):
        schedule = eps_schedule_from_log(_log([[0.125, 0.375], [0.25, 0.5, 0.75]]))
        self.assertEqual(schedule, [0.25, 0.5])

    def test_truncates_to_requested_epochs(self):
        self.assertEqual(eps_schedule_from_log(_log([[0.1], [0.2], [0.3]]), epochs=2), [0.1, 0.2])

    def test_source_too_short(self):
        with self.assertRaises(ConfigurationError):
            eps_schedule_from_log(_log([[0.1], [0.2]]), epochs=3)

    def test_missing_epoch(self):
        log = _log([[0.1], [0.2], [0.3]])
        log.records = [r for r in log.records if r.epoch != 1]
        with self.assertRaises(ConfigurationError):
            eps_schedule_from_log(log)

    def test_missing_values(self):
        log = _log([[0.1, None]])
        with self.assertRaises(ConfigurationError):
            eps_schedule_from_log(log)

    def test_check_schedule(self):
        self.assertEqual(check_schedule([0.1, 0.2, 0.3], 2), [0.1, 0.2, 0.3])
        with self.assertRaises(ConfigurationError):
            check_schedule([0.1], 2)
        with self.assertRaises(ConfigurationError):
            check_schedule([0.1, -0.2], 2)


if __name__ == '__main__':
    unittest.main()
