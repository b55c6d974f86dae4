import shutil
import string
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from discovery import prompts
from discovery.exceptions import RenderError, ResponseParseError
from discovery.prompts import PromptLibrary


def placeholders(library, kind):
    template = prompts._unescape(library._adapt(library.templates[kind]))
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


def full_bindings(library, kind):
    defaults = library._defaults(1)
    return {name: f"<{name}>" for name in placeholders(library, kind) if name not in defaults}


class TemplateAssetTestCase(SimpleTestCase):
    def test_checksums_match_record(self):
        self.assertEqual(prompts.file_checksums(), prompts.recorded_checksums())

    def test_every_kind_renders_in_both_modes(self):
        for dsl_mode in (True, False):
            library = PromptLibrary(dsl_mode=dsl_mode)
            for kind in prompts.PROMPT_KINDS:
                with self.subTest(kind=kind, dsl_mode=dsl_mode):
                    text = library.render_text(kind, 3, full_bindings(library, kind))
                    for name in full_bindings(library, kind):
                        self.assertNotIn('{' + name + '}', text)

    def test_crossover_template_has_both_versions(self):
        library = PromptLibrary()
        text = library.render_text('pc', 2, full_bindings(library, 'pc'))
        self.assertIn('VERSION A (Baseline Implementation)', text)
        self.assertIn('<worse_code>', text)
        self.assertIn('<better_code>', text)


class RenderTestCase(SimpleTestCase):
    def setUp(self):
        self.library = PromptLibrary()

    def test_pipeline_mode_swaps_output_format(self):
        text = self.library.render_text('pm', 3, full_bindings(self.library, 'pm'))
        self.assertIn('```pipeline', text)
        self.assertNotIn('```python', text)
        self.assertNotIn('def pipeline_v2', text)
        self.assertIn('whiten_adaptive', text)
        self.assertIn('{Core design description here', text)

    def test_code_mode_keeps_python_format(self):
        library = PromptLibrary(dsl_mode=False)
        text = library.render_text('pm', 3, full_bindings(library, 'pm'))
        self.assertIn('```python', text)
        self.assertIn('Implement as Python function: pipeline_v2', text)
        self.assertNotIn('trigger_multires(', text)

    def test_depth_guidance(self):
        bindings = full_bindings(self.library, 'pm')
        self.assertTrue(self.library.render_text('pm', 1, bindings).endswith(
            "Depth guidance: Shallow (Depth 1-2), focus on structural patterns.\n"))
        self.assertIn("Medium (Depth 3-4), focus on implementation techniques",
                      self.library.render_text('pm', 4, bindings))
        self.assertIn("Deep (Depth 5+), focus on mathematical details",
                      self.library.render_text('pm', 7, bindings))

    def test_depth_bands(self):
        self.assertEqual([prompts.depth_band(d)[0][:4] for d in (1, 2, 3, 4, 5, 10)],
                         ['Shal', 'Shal', 'Medi', 'Medi', 'Deep', 'Deep'])

    def test_summary_has_no_depth_guidance(self):
        bundle = self.library.summarize('Welch whitening.', 'whiten_welch(default)')
        self.assertNotIn('Depth guidance', bundle.prompt)
        self.assertIn('whiten_welch(default)', bundle.prompt)

    def test_summary_needs_code(self):
        with self.assertRaises(RenderError):
            self.library.summarize('idea', '   ')

    def test_missing_placeholder(self):
        bindings = full_bindings(self.library, 'pm')
        del bindings['better_algorithm_code']
        with self.assertRaises(RenderError) as ctx:
            self.library.render('pm', 2, bindings)
        self.assertEqual(ctx.exception.placeholder, 'better_algorithm_code')

    def test_unknown_kind(self):
        with self.assertRaises(RenderError):
            self.library.render('crossover', 1, {})

    def test_bundle(self):
        bundle = self.library.render('PC_REFLECTION', 2, full_bindings(self.library, 'pc_reflection'))
        self.assertEqual(bundle.kind, 'pc_reflection')
        self.assertEqual(bundle.model_role, 'reflection')
        messages = bundle.messages()
        self.assertEqual([m['role'] for m in messages], ['system', 'user'])
        self.assertEqual(messages[0]['content'], self.library.templates['system'].strip())
        generation = self.library.render('pc', 2, full_bindings(self.library, 'pc'))
        self.assertEqual(generation.model_role, 'generation')

    def test_override_directory(self):
        directory = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, directory, True)
        (directory / 'pm.txt').write_text("Mutate {better_algorithm_code} at depth {depth}.\n")
        library = PromptLibrary(override_dir=directory)
        text = library.render_text('pm', 2, {'better_algorithm_code': 'X'})
        self.assertTrue(text.startswith('Mutate X at depth 2.'))
        self.assertEqual(library.templates['pc'], self.library.templates['pc'])


class RechatTestCase(SimpleTestCase):
    def test_rechat_carries_prompt_and_report(self):
        library = PromptLibrary()
        bundle = library.render('pm', 2, full_bindings(library, 'pm'))
        rechat = prompts.build_rechat(bundle, 'bad reply', '## Error Report\nTimeout: too slow')
        self.assertEqual([role for role, _ in rechat.turns], ['user', 'assistant', 'user'])
        self.assertEqual(rechat.turns[1][1], 'bad reply')
        last = rechat.turns[2][1]
        self.assertTrue(last.startswith(prompts.RECHAT_PREAMBLE))
        self.assertIn(bundle.prompt, last)
        self.assertTrue(last.endswith('Timeout: too slow'))
        self.assertEqual(rechat.kind, 'pm')


class ParseResponseTestCase(SimpleTestCase):
    def test_brace_idea(self):
        parsed = prompts.parse_response("{Coherent metric.}\n```pipeline\nwhiten_welch(default)\n```")
        self.assertEqual(parsed.design_idea, 'Coherent metric.')
        self.assertEqual(parsed.code, 'whiten_welch(default)')

    def test_escaped_brace_idea(self):
        parsed = prompts.parse_response("\\{Adaptive whitening.\\}\n```python\ndef f():\n    return {}\n```")
        self.assertEqual(parsed.design_idea, 'Adaptive whitening.')

    def test_braces_inside_code_are_ignored(self):
        raw = '```python\ndef f():\n    """Docstring idea."""\n    return {1: 2}\n```'
        self.assertEqual(prompts.parse_response(raw).design_idea, 'Docstring idea.')

    def test_first_fence_wins(self):
        parsed = prompts.parse_response("{idea}\n```\nfirst\n```\n```\nsecond\n```")
        self.assertEqual(parsed.code, 'first')

    def test_no_fence(self):
        with self.assertRaises(ResponseParseError):
            prompts.parse_response("{idea} but no code")

    def test_empty_fence(self):
        with self.assertRaises(ResponseParseError):
            prompts.parse_response("{idea}\n```python\n\n```")

    def test_no_idea(self):
        with self.assertRaises(ResponseParseError):
            prompts.parse_response("```python\nx = 1\n```")

    def test_extract_idea(self):
        self.assertEqual(prompts.extract_idea("Thoughts {Use a longer Welch segment.} done"),
                         'Use a longer Welch segment.')
        self.assertEqual(prompts.extract_idea("  Plain reflection.  "), 'Plain reflection.')
