import numpy as np
from django.test import SimpleTestCase

from discovery import datagen, dsl, dsp, pipelines
from discovery.exceptions import DslParseError, ParameterError
from discovery.pipelines import STAGES, DetectionCatalog, MetricSeries

from .factories import FS, noise_pair


def loud_dataset(snr=60.0, t_coal=20.0):
    """Noise pair with one chirp scaled to the requested optimal network SNR."""
    noise = noise_pair(seed=11)
    model = datagen.PsdModel()
    unit = datagen.render_dataset(noise, [datagen.InjectionRecord(t_coal, 1.0, 10.0)], psd_model=model)
    distance = unit.injections[0].snr_opt / snr
    return datagen.render_dataset(noise, [datagen.InjectionRecord(t_coal, distance, 10.0)], psd_model=model)


def resolved(stages):
    return tuple((name, STAGES[name].resolve(params)) for name, params in stages)


class ReferencePipelineTestCase(SimpleTestCase):
    def setUp(self):
        self.h1, self.l1 = noise_pair(seed=3)

    def test_zero_strain_gives_empty_catalogs(self):
        zeros = dsp.SampledSeries(np.zeros(len(self.h1)), 0.0, 1 / FS)
        self.assertEqual(len(pipelines.seed_pipeline(zeros, zeros)), 0)
        self.assertEqual(len(pipelines.elite_pipeline(zeros, zeros)), 0)

    def test_seed_noise_stats_stay_near_median(self):
        defaults = dict(STAGES['whiten_welch'].resolve({}))
        h1, l1 = pipelines.whiten_welch(self.h1, self.l1, **defaults)
        metric = pipelines.metric_meanpower(h1, l1, **STAGES['metric_meanpower'].resolve({}))
        found = pipelines.seed_pipeline(self.h1, self.l1)
        self.assertTrue(np.all(found.stats < 10 * np.median(metric.values)))

    def test_seed_finds_loud_chirp(self):
        data = loud_dataset()
        found = pipelines.seed_pipeline(data.h1, data.l1)
        loudest = found.times[np.argmax(found.stats)]
        self.assertLess(abs(loudest - 20.0), 0.5)

    def test_elite_is_deterministic(self):
        first = pipelines.elite_pipeline(self.h1, self.l1)
        second = pipelines.elite_pipeline(self.h1, self.l1)
        np.testing.assert_array_equal(first.times, second.times)
        np.testing.assert_array_equal(first.stats, second.stats)
        np.testing.assert_array_equal(first.vars, second.vars)

    def test_prominence_factor_controls_peak_count(self):
        loose = pipelines.run_stages(
            (('whiten_welch', {}), ('metric_meanpower', {}), ('trigger_basic', {'prominence_factor': 0})),
            self.h1, self.l1,
        )
        strict = pipelines.seed_pipeline(self.h1, self.l1)
        self.assertGreater(len(loose), len(strict))

    def test_channels_must_share_time_axis(self):
        shifted = dsp.SampledSeries(self.l1.samples, 1.0, self.l1.dt)
        with self.assertRaises(ParameterError):
            pipelines.seed_pipeline(self.h1, shifted)


class StageRegistryTestCase(SimpleTestCase):
    def test_every_role_has_a_stage(self):
        roles = {spec.role for spec in STAGES.values()}
        self.assertEqual(roles, set(pipelines.ROLES))

    def test_resolve_fills_defaults(self):
        params = STAGES['detrend_median'].resolve({})
        self.assertEqual(params, {'kernel': 101})

    def test_unknown_parameter(self):
        with self.assertRaisesMessage(ParameterError, "no parameter 'width'"):
            STAGES['trigger_basic'].resolve({'width': 3})

    def test_cross_parameter_check(self):
        with self.assertRaisesMessage(ParameterError, 'lambda_min must not exceed lambda_max'):
            STAGES['metric_coherent'].resolve({'lambda_min': 0.5, 'lambda_max': 0.1})

    def test_catalog_lists_every_stage(self):
        text = pipelines.stage_catalog()
        for name in STAGES:
            self.assertIn(name, text)


class DetectionCatalogTestCase(SimpleTestCase):
    def test_tolerances_must_be_positive(self):
        with self.assertRaises(ParameterError):
            DetectionCatalog([1.0], [2.0], [0.0])

    def test_missing_csv_columns(self):
        import pandas as pd
        with self.assertRaisesMessage(ParameterError, 'var'):
            DetectionCatalog.from_frame(pd.DataFrame({'time': [1.0], 'stat': [2.0]}))

    def test_concatenate_and_sort(self):
        merged = DetectionCatalog.concatenate([
            DetectionCatalog([5.0], [1.0], [0.1]), DetectionCatalog([2.0], [3.0], [0.2]),
        ]).sorted()
        np.testing.assert_array_equal(merged.times, [2.0, 5.0])
        np.testing.assert_array_equal(merged.stats, [3.0, 1.0])


class ParseDslTestCase(SimpleTestCase):
    def test_elite_text_matches_elite_pipeline(self):
        text = ("detrend_median(kernel=101); whiten_adaptive(default); "
                "metric_coherent(default); trigger_multires(default)")
        self.assertEqual(dsl.parse_dsl(text).stages, resolved(pipelines.ELITE_STAGES))

    def test_seed_text_matches_seed_pipeline(self):
        self.assertEqual(dsl.parse_dsl(dsl.SEED_DSL).stages, resolved(pipelines.SEED_STAGES))

    def test_even_kernel(self):
        with self.assertRaisesMessage(DslParseError, 'must be odd'):
            dsl.parse_dsl("detrend_median(kernel=100)\nwhiten_welch(default)\n"
                          "metric_meanpower(default)\ntrigger_basic(default)")

    def test_missing_trigger(self):
        with self.assertRaisesMessage(DslParseError, 'missing trigger stage'):
            dsl.parse_dsl("whiten_welch(default)\nmetric_meanpower(default)")

    def test_error_position(self):
        with self.assertRaises(DslParseError) as ctx:
            dsl.parse_dsl("whiten_welch(default)\nmetric_meanpower(nperseg=8)\ntrigger_basic(default)")
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('[16, 8192]', str(ctx.exception))

    def test_unknown_stage(self):
        with self.assertRaisesMessage(DslParseError, "unknown stage 'whiten_magic'"):
            dsl.parse_dsl("whiten_magic(default)")

    def test_stage_order(self):
        with self.assertRaisesMessage(DslParseError, 'must come before'):
            dsl.parse_dsl("whiten_welch(default)\ntrigger_basic(default)\nmetric_meanpower(default)")

    def test_duplicate_role(self):
        with self.assertRaisesMessage(DslParseError, 'duplicate whiten stage'):
            dsl.parse_dsl("whiten_welch(default)\nwhiten_adaptive(default)\n"
                          "metric_meanpower(default)\ntrigger_basic(default)")

    def test_fenced_text_with_comments_and_docstring(self):
        text = ('Here you go:\n```pipeline\n"""Plain seed."""\n# conditioning\n'
                'whiten_welch(default)  # Welch\nmetric_meanpower(default); trigger_basic(default)\n```\n')
        self.assertEqual(dsl.parse_dsl(text).to_text(), dsl.parse_dsl(dsl.SEED_DSL).to_text())

    def test_numerals_are_canonical(self):
        first = dsl.parse_dsl("detrend_median(kernel=101.0)\nwhiten_welch(default)\n"
                              "metric_meanpower(default)\ntrigger_basic(default)")
        second = dsl.parse_dsl("detrend_median(kernel=101)\nwhiten_welch(default)\n"
                               "metric_meanpower(default)\ntrigger_basic(default)")
        self.assertEqual(first.to_text(), second.to_text())

    def test_canonical_text_spells_out_defaults(self):
        text = dsl.parse_dsl(dsl.SEED_DSL).to_text()
        self.assertIn('whiten_welch(nperseg=4096, overlap=0.5, smoothing_kernel=32, window=hann)', text)


class RunDslTestCase(SimpleTestCase):
    def setUp(self):
        self.h1, self.l1 = noise_pair(seed=5)

    def assertSameCatalog(self, first, second):
        np.testing.assert_array_equal(first.times, second.times)
        np.testing.assert_array_equal(first.stats, second.stats)
        np.testing.assert_array_equal(first.vars, second.vars)

    def test_seed_encoding(self):
        self.assertSameCatalog(
            dsl.run_dsl(dsl.parse_dsl(dsl.SEED_DSL), self.h1, self.l1),
            pipelines.seed_pipeline(self.h1, self.l1),
        )

    def test_elite_encoding(self):
        self.assertSameCatalog(
            dsl.run_dsl(dsl.parse_dsl(dsl.ELITE_DSL), self.h1, self.l1),
            pipelines.elite_pipeline(self.h1, self.l1),
        )


class StageInvarianceTestCase(SimpleTestCase):
    def test_seed_times_ignore_power_of_two_strain_scale(self):
        rng = np.random.default_rng(41)
        for case in range(200):
            h1, l1 = noise_pair(duration=4.0, seed=case)
            scale = 2.0 ** int(rng.integers(-20, 21))
            plain = pipelines.seed_pipeline(h1, l1)
            scaled = pipelines.seed_pipeline(h1.with_samples(h1.samples * scale),
                                             l1.with_samples(l1.samples * scale))
            np.testing.assert_array_equal(scaled.times, plain.times, err_msg=str(case))

    def test_curvature_veto_only_removes_triggers(self):
        rng = np.random.default_rng(42)
        vetoed = STAGES['trigger_multires'].resolve({})
        open_ = STAGES['trigger_multires'].resolve({'curvature_veto': 'off'})
        for case in range(200):
            n = int(rng.integers(16, 400))
            values = rng.exponential(1.0, n)
            for centre in rng.integers(0, n, size=int(rng.integers(0, 6))):
                width = rng.uniform(0.5, 4.0)
                values += rng.uniform(1, 20) * np.exp(-0.5 * ((np.arange(n) - centre) / width) ** 2)
            metric = MetricSeries(values, np.arange(n) * 0.0625)
            on = pipelines.trigger_multires(metric, **vetoed)
            off = pipelines.trigger_multires(metric, **open_)
            self.assertTrue(set(on.times) <= set(off.times), case)

    def test_elite_without_veto_keeps_every_vetoed_trigger(self):
        h1, l1 = noise_pair(seed=9)
        on = pipelines.elite_pipeline(h1, l1)
        stages = pipelines.ELITE_STAGES[:-1] + (('trigger_multires', {'curvature_veto': 'off'}),)
        off = pipelines.run_stages(stages, h1, l1)
        self.assertTrue(set(on.times) <= set(off.times))
        self.assertGreaterEqual(len(off), len(on))


class CoherentMetricTestCase(SimpleTestCase):
    def test_identical_channels_score_below_independent_noise(self):
        h1, l1 = noise_pair(seed=13)
        params = STAGES['metric_coherent'].resolve({})
        same = pipelines.metric_coherent(h1, h1, **params)
        independent = pipelines.metric_coherent(h1, l1, **params)
        # |cos| is 1 everywhere for a shared channel, so the curvature boost stays at 1
        self.assertLess(np.mean(same.values), np.mean(independent.values))


class DefaultSegmentTestCase(SimpleTestCase):
    """One full-length segment at the default sampling rate and amplitude."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        model = datagen.PsdModel()
        noise = datagen.generate_noise(900.0, 2048.0, model, 0)
        injections = datagen.generate_injections(6, 2500.0, 900.0, 1)
        cls.data = datagen.render_dataset(noise, injections, psd_model=model, d_max=2500.0)

    def assertFiniteCatalog(self, found):
        for column in (found.times, found.stats, found.vars):
            self.assertTrue(np.all(np.isfinite(column)))

    def test_adaptive_whitening_stays_finite(self):
        for floor in (0.5, 0.0):
            params = STAGES['whiten_adaptive'].resolve({'gain_floor': floor})
            h1, l1 = pipelines.whiten_adaptive(self.data.h1, self.data.l1, **params)
            self.assertTrue(np.all(np.isfinite(h1.samples)), floor)
            self.assertTrue(np.all(np.isfinite(l1.samples)), floor)

    def test_elite_produces_a_catalog(self):
        found = pipelines.elite_pipeline(self.data.h1, self.data.l1)
        self.assertGreater(len(found), 0)
        self.assertFiniteCatalog(found)

    def test_seed_produces_a_catalog(self):
        found = pipelines.seed_pipeline(self.data.h1, self.data.l1)
        self.assertGreater(len(found), 0)
        self.assertFiniteCatalog(found)
