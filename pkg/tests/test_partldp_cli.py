#!/usr/bin/env python3
"""
Tests for the partldp command line.

Runs the module as a subprocess from the project root.
"""

import os
import shutil
import struct
import subprocess
import tempfile
import unittest

PROJECT_ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..')

SWEEP_CONFIG = """\
[distribution]
kind = "example1"
delta = 1.0

[sweep]
mode = "observable"
n_grid_log2 = [6, 9]
replications = 3
master_seed = 7

[probe]
h = 0.01
t_min = 0.001
points = 8
"""


class TestPartldpCLI(unittest.TestCase):
    """Test partldp CLI functionality."""

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.config = self.write('sweep.toml', SWEEP_CONFIG)

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def run_command(self, args, env=None):
        """Run a partldp command and return result."""
        cmd = ['python3', '-m', 'partldp'] + args
        full_env = dict(os.environ)
        full_env.update(env or {})
        return subprocess.run(cmd, capture_output=True, text=True, cwd=PROJECT_ROOT, env=full_env)

    def test_sweep_writes_rate_table(self):
        out = os.path.join(self.tmp, 'rates.csv')
        result = self.run_command(['sweep', self.config, '-o', out, '--threads', '1'])
        self.assertEqual(result.returncode, 0, result.stderr)
        with open(out) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], 'n,h,mean_excess,std_err,replications')
        self.assertEqual([line.split(',')[0] for line in lines[1:5]], ['64', '128', '256', '512'])
        self.assertTrue(lines[5].startswith('# slope='))
        self.assertTrue(lines[6].startswith('# ci='))

    def test_sweep_is_byte_identical_across_runs(self):
        first = os.path.join(self.tmp, 'a.csv')
        second = os.path.join(self.tmp, 'b.csv')
        self.assertEqual(self.run_command(['sweep', self.config, '-o', first, '--threads', '1']).returncode, 0)
        result = self.run_command(['sweep', self.config, '-o', second], env={'PARTLDP_THREADS': '3'})
        self.assertEqual(result.returncode, 0, result.stderr)
        with open(first, 'rb') as a, open(second, 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_sweep_seed_override_changes_output(self):
        result_a = self.run_command(['sweep', self.config])
        result_b = self.run_command(['sweep', self.config, '--seed', '8'])
        self.assertEqual(result_a.returncode, 0)
        self.assertEqual(result_b.returncode, 0)
        self.assertNotEqual(result_a.stdout, result_b.stdout)

    def test_missing_n_grid_is_usage_error(self):
        bad = self.write('bad.toml', SWEEP_CONFIG.replace('n_grid_log2 = [6, 9]\n', ''))
        result = self.run_command(['sweep', bad])
        self.assertEqual(result.returncode, 2)
        self.assertIn('n_grid', result.stderr)
        self.assertEqual(result.stdout, '')

    def test_unknown_key_is_usage_error(self):
        bad = self.write('bad.toml', SWEEP_CONFIG.replace('master_seed', 'master_sed'))
        result = self.run_command(['sweep', bad])
        self.assertEqual(result.returncode, 2)
        self.assertIn('sweep.master_sed', result.stderr)

    def test_ldp_check(self):
        result = self.run_command(['ldp-check', '--alpha', '0.5,1,2', '--trials', '2000'])
        self.assertEqual(result.returncode, 0, result.stdout)
        self.assertIn('pass', result.stdout)
        self.assertNotIn('FAIL', result.stdout)

    def test_ldp_check_detects_miscalibration(self):
        result = self.run_command(['ldp', '--alpha', '1', '--trials', '2000', '--scale-multiplier', '0.5'])
        self.assertEqual(result.returncode, 1)
        self.assertIn('FAIL', result.stdout)

    def test_probe_footer(self):
        result = self.run_command(['probe', self.config])
        self.assertEqual(result.returncode, 0, result.stderr)
        lines = result.stdout.splitlines()
        self.assertEqual(lines[0], 't,g_star,g_h,g_tilde_h')
        self.assertEqual(len([line for line in lines if not line.startswith('#')]), 9)
        footer = {line[2:].split('=')[0] for line in lines if line.startswith('# ')}
        self.assertEqual(
            footer, {'gamma', 'gamma1', 'gamma2', 'sda_ratio', 'predicted_observable', 'predicted_private'}
        )

    def test_sample_fit_evaluate_pipeline(self):
        train = os.path.join(self.tmp, 'train.csv')
        clf = os.path.join(self.tmp, 'clf.bin')
        source = ['--kind', 'example1', '--delta', '1']

        result = self.run_command(['sample', '-n', '500', '-o', train, '--seed', '3'] + source)
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertIn('Wrote 500 samples', result.stdout)

        result = self.run_command(['fit', train, '--h', '0.1', '-o', clf] + source)
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertIn('observable classifier on 500 samples', result.stdout)

        result = self.run_command(['evaluate', clf] + source)
        self.assertEqual(result.returncode, 0, result.stderr)
        fields = result.stdout.strip().split(',')
        self.assertEqual(len(fields), 5)
        self.assertEqual(fields[2], 'quadrature')
        self.assertGreaterEqual(float(fields[1]), 0.0)
        self.assertAlmostEqual(float(fields[0]) - float(fields[1]), 1 / 3, places=6)

    def test_private_fit(self):
        train = os.path.join(self.tmp, 'train.csv')
        clf = os.path.join(self.tmp, 'clf.bin')
        self.run_command(['s', '--kind', 'example1', '-n', '200', '-o', train])
        result = self.run_command(['f', train, '--h', '0.25', '-o', clf, '--kind', 'example1', '--private'])
        self.assertEqual(result.returncode, 2)
        self.assertIn('--alpha', result.stderr)
        result = self.run_command(
            ['f', train, '--h', '0.25', '-o', clf, '--kind', 'example1', '--private', '--alpha', '1']
        )
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertIn('private classifier', result.stdout)
        result = self.run_command(['ev', clf, '--kind', 'example1', '--eval', 'mc', '--n-eval', '5000'])
        self.assertEqual(result.returncode, 0, result.stderr)
        fields = result.stdout.strip().split(',')
        self.assertEqual(fields[2], 'monte-carlo')
        self.assertEqual(fields[4], '5000')

    def test_fit_takes_label_set_from_distribution(self):
        train = self.write('train.csv', 'x1,y\n-0.5,1\n0.25,2\n0.75,1\n')
        clf = os.path.join(self.tmp, 'clf.bin')
        result = self.run_command(['fit', train, '--h', '0.5', '-o', clf, '--kind', 'three-class'])
        self.assertEqual(result.returncode, 0, result.stderr)
        with open(clf, 'rb') as f:
            payload = f.read()
        self.assertTrue(payload.startswith(b'PCLF1'))
        flags, _, num_classes, n, _ = struct.unpack('<BIIQd', payload[5:30])
        self.assertEqual((flags & 1, num_classes, n), (0, 3, 3))

        result = self.run_command(['fit', train, '--h', '0.5', '-o', clf, '--classes', '4'])
        self.assertEqual(result.returncode, 0, result.stderr)
        with open(clf, 'rb') as f:
            self.assertEqual(struct.unpack('<BIIQd', f.read()[5:30])[2], 4)

        result = self.run_command(['fit', train, '--h', '0.5', '-o', clf, '--kind', 'three-class', '--classes', '2'])
        self.assertEqual(result.returncode, 2)
        self.assertIn('contradicts', result.stderr)

    def test_evaluate_rejects_corrupt_dump(self):
        clf = self.write('clf.bin', 'not a classifier')
        result = self.run_command(['evaluate', clf, '--kind', 'example1'])
        self.assertEqual(result.returncode, 2)
        self.assertIn('magic', result.stderr)

    def test_help_and_aliases(self):
        result = self.run_command(['help'])
        self.assertEqual(result.returncode, 0)
        self.assertIn('COMMAND ALIASES', result.stdout)
        self.assertIn('sw   = sweep', result.stdout)
        result = self.run_command(['h', 'sw'])
        self.assertEqual(result.returncode, 0)
        self.assertIn('SWEEP COMMAND', result.stdout)

    def test_no_command(self):
        result = self.run_command([])
        self.assertEqual(result.returncode, 2)


if __name__ == '__main__':
    unittest.main()
