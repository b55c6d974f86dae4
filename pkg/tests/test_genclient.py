import json
import shutil
import tempfile
from pathlib import Path
from unittest import mock

import requests
from django.test import SimpleTestCase

from discovery import genclient
from discovery.exceptions import ConfigError, EvaluationError, GeneratorError, GeneratorOutage
from discovery.genclient import LiveGenerator, ScriptedGenerator
from discovery.prompts import REFLECTION_KINDS, PromptBundle

from .factories import JUNK_REPLY, TWEAK_REPLY, desk_config

API_KEY = 'sk-test-123'


def bundle(kind='pm', depth=1):
    return PromptBundle(system='You design detection pipelines.', turns=(('user', 'Improve it.'),),
                        kind=kind, depth=depth)


class FakeResponse:
    def __init__(self, status_code, body=None):
        self.status_code = status_code
        self.body = body
        self.text = json.dumps(body) if body is not None else 'upstream trouble'

    def json(self):
        if self.body is None:
            raise ValueError('no JSON')
        return self.body

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.exceptions.HTTPError(f"{self.status_code} error")


def completion(text):
    return FakeResponse(200, {'choices': [{'message': {'role': 'assistant', 'content': text}}]})


@mock.patch.dict('os.environ', {'EVOMCTS_API_KEY': API_KEY})
@mock.patch('discovery.genclient.time.sleep')
class LiveGeneratorTestCase(SimpleTestCase):
    def make(self, *responses):
        session = mock.Mock()
        session.post.side_effect = list(responses)
        config = desk_config(generator={'backend': 'live'}).generator
        return LiveGenerator(config, session=session), session

    def test_rate_limit_is_retried(self, sleep):
        generator, session = self.make(FakeResponse(429), completion('{idea}\n```\nx\n```'))
        self.assertEqual(generator.generate(bundle()), '{idea}\n```\nx\n```')
        self.assertEqual(session.post.call_count, 2)
        sleep.assert_called_once_with(1.0)

    def test_outage_after_retries(self, sleep):
        generator, session = self.make(*[FakeResponse(503)] * 4)
        with self.assertRaises(GeneratorOutage):
            generator.generate(bundle())
        self.assertEqual(session.post.call_count, 4)
        self.assertEqual([c.args[0] for c in sleep.call_args_list], [1.0, 2.0, 4.0])

    def test_client_error_is_not_retried(self, sleep):
        generator, session = self.make(FakeResponse(400))
        with self.assertRaises(GeneratorError) as ctx:
            generator.generate(bundle())
        self.assertNotIsInstance(ctx.exception, GeneratorOutage)
        self.assertFalse(ctx.exception.retryable)
        self.assertEqual(session.post.call_count, 1)

    def test_connection_error_is_retried(self, sleep):
        generator, session = self.make(requests.exceptions.ConnectionError('refused'), completion('ok'))
        self.assertEqual(generator.generate(bundle()), 'ok')

    def test_malformed_body(self, sleep):
        generator, _ = self.make(FakeResponse(200, {'choices': []}))
        with self.assertRaisesMessage(GeneratorError, 'unexpected response body'):
            generator.generate(bundle())

    def test_models_follow_prompt_role(self, sleep):
        generator, session = self.make(completion('a'), completion('b'))
        generator.generate(bundle('pwc_reflection'))
        generator.generate(bundle('pwc'))
        models = [c.kwargs['json']['model'] for c in session.post.call_args_list]
        self.assertEqual(models, ['deepseek-r1', 'o3-mini'])
        first = session.post.call_args_list[0]
        self.assertEqual(first.kwargs['headers']['Authorization'], f"Bearer {API_KEY}")
        self.assertEqual(first.kwargs['json']['messages'][0]['role'], 'system')

    def test_key_never_logged(self, sleep):
        generator, _ = self.make(FakeResponse(429), FakeResponse(500), completion('ok'))
        with self.assertLogs('discovery', level='DEBUG') as logs:
            generator.generate(bundle())
        self.assertEqual(len(logs.output), 2)
        self.assertFalse(any(API_KEY in line for line in logs.output))


class MissingKeyTestCase(SimpleTestCase):
    @mock.patch.dict('os.environ', {}, clear=True)
    def test_missing_key(self):
        config = desk_config(generator={'backend': 'live'}).generator
        with self.assertRaisesMessage(ConfigError, 'EVOMCTS_API_KEY'):
            LiveGenerator(config)
        with self.assertRaises(ConfigError):
            genclient.build_generator(config)


class ScriptedGeneratorTestCase(SimpleTestCase):
    def test_lookup_order(self):
        generator = ScriptedGenerator({
            'keyed': {'pm:2:1': 'keyed'},
            'responses': {'PM': ['pm-a', 'pm-b']},
            'default': ['fallback'],
        })
        texts = [generator.generate(bundle('pm', 2)) for _ in range(4)]
        self.assertEqual(texts, ['pm-a', 'keyed', 'pm-b', 'pm-a'])
        self.assertEqual(generator.generate(bundle('pc', 2)), 'fallback')

    def test_canned_text_for_summaries_and_reflections(self):
        generator = ScriptedGenerator({'responses': {'pm': ['x']}})
        self.assertEqual(generator.generate(bundle('summary')), genclient.CANNED_SUMMARY)
        self.assertEqual(generator.generate(bundle('sc_reflection')), genclient.CANNED_REFLECTION)
        with self.assertRaises(GeneratorError):
            generator.generate(bundle('pc'))

    def test_default_never_answers_summaries_or_reflections(self):
        generator = ScriptedGenerator({'default': [TWEAK_REPLY]})
        self.assertEqual(generator.generate(bundle('summary')), genclient.CANNED_SUMMARY)
        for kind in REFLECTION_KINDS:
            self.assertEqual(generator.generate(bundle(kind)), genclient.CANNED_REFLECTION, kind)
        self.assertEqual(generator.generate(bundle()), TWEAK_REPLY)

    def test_explicit_responses_still_answer_reflections(self):
        generator = ScriptedGenerator({'responses': {'sc_reflection': ['r']}, 'default': ['d']})
        self.assertEqual(generator.generate(bundle('sc_reflection')), 'r')

    def test_weighted_choices(self):
        script = {'default': [{'choices': [{'weight': 7, 'text': 'good'}, {'weight': 3, 'text': 'bad'}]}]}
        first = [ScriptedGenerator(script, seed=4).generate(bundle()) for _ in range(3)]
        self.assertEqual(len(set(first)), 1)
        generator = ScriptedGenerator(script, seed=4)
        draws = [generator.generate(bundle()) for _ in range(1000)]
        self.assertAlmostEqual(draws.count('good') / 1000, 0.7, delta=0.05)

    def test_calls_are_recorded(self):
        generator = ScriptedGenerator({'default': ['d']})
        generator.generate(bundle('pm_reflection', 3))
        self.assertEqual(generator.calls, [('pm_reflection', 3, 'reflection')])

    def test_script_files(self):
        directory = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, directory, True)
        with self.assertRaises(ConfigError):
            ScriptedGenerator.from_file(directory / 'absent.json')
        (directory / 'broken.json').write_text('{"default": [')
        with self.assertRaisesMessage(ConfigError, 'not valid JSON'):
            ScriptedGenerator.from_file(directory / 'broken.json')
        (directory / 'script.json').write_text(json.dumps({'default': ['from file']}))
        config = desk_config(generator={'script': str(directory / 'script.json')}).generator
        self.assertEqual(genclient.build_generator(config).generate(bundle()), 'from file')


class RecordingGenerator:
    def __init__(self, replies):
        self.replies = list(replies)
        self.bundles = []

    def generate(self, prompt):
        self.bundles.append(prompt)
        return self.replies[len(self.bundles) - 1]


class CorrectionLoopTestCase(SimpleTestCase):
    def test_success_after_two_rechats(self):
        generator = ScriptedGenerator({'default': [JUNK_REPLY, JUNK_REPLY, TWEAK_REPLY]})
        outcome = genclient.correction_loop(generator, bundle(), lambda parsed: 42.0)
        self.assertTrue(outcome.success)
        self.assertEqual((outcome.calls, outcome.rechat_rounds), (3, 2))
        self.assertEqual(outcome.result, 42.0)
        self.assertEqual([e['kind'] for e in outcome.errors], ['parse', 'parse'])

    def test_gives_up_after_three_rechats(self):
        generator = ScriptedGenerator({'default': [JUNK_REPLY]})
        outcome = genclient.correction_loop(generator, bundle(), lambda parsed: 42.0)
        self.assertFalse(outcome.success)
        self.assertEqual((outcome.calls, outcome.rechat_rounds), (4, 3))

    def test_rechat_carries_error_report(self):
        generator = RecordingGenerator([TWEAK_REPLY, TWEAK_REPLY])
        verdicts = iter([EvaluationError('timeout', 'exceeded 60 s'), 1.5])

        def evaluate(parsed):
            verdict = next(verdicts)
            if isinstance(verdict, Exception):
                raise verdict
            return verdict

        outcome = genclient.correction_loop(generator, bundle(), evaluate)
        self.assertTrue(outcome.success)
        rechat = generator.bundles[1]
        self.assertEqual(rechat.turns[1], ('assistant', TWEAK_REPLY))
        self.assertIn('## Error Report', rechat.turns[2][1])
        self.assertIn('exceeded 60 s', rechat.turns[2][1])
        self.assertEqual(outcome.errors, [{'kind': 'timeout', 'message': 'exceeded 60 s'}])

    def test_outage_propagates(self):
        generator = mock.Mock()
        generator.generate.side_effect = GeneratorOutage('down')
        with self.assertRaises(GeneratorOutage):
            genclient.correction_loop(generator, bundle(), lambda parsed: 1.0)


class RerunEdgeTestCase(SimpleTestCase):
    def test_outcome_rates(self):
        script = {'default': [{'choices': [{'weight': 0.7, 'text': TWEAK_REPLY},
                                           {'weight': 0.3, 'text': JUNK_REPLY}]}]}
        generator = ScriptedGenerator(script, seed=11)

        def run_once(repetition):
            outcome = genclient.correction_loop(generator, bundle(), lambda parsed: 10.0, max_rounds=0)
            return outcome.result if outcome.success else 1.0

        stats = genclient.rerun_edge(run_once, 200, reference=5.0)
        self.assertEqual(len(stats.samples), 200)
        self.assertAlmostEqual(stats.fraction_exceeding, 0.7, delta=0.1)

    def test_failed_repetitions(self):
        def run_once(repetition):
            if repetition % 2:
                raise GeneratorError('timeout')
            return float(repetition)

        summary = genclient.rerun_edge(run_once, 6, reference=1.0).summary()
        self.assertEqual(summary['failures'], 3)
        self.assertEqual(summary['samples'], [0.0, None, 2.0, None, 4.0, None])
        self.assertAlmostEqual(summary['mean'], 2.0)
        self.assertAlmostEqual(summary['sd'], 2.0)
        self.assertAlmostEqual(summary['fraction_exceeding'], 2 / 6)
