"""
Prompt rendering and response parsing.

Templates are plain-text assets in ``prompt_templates/`` using ``{name}``
placeholders. A directory given as override replaces templates file by file.
When candidates are pipeline text rather than free code, the free-code
output-format section of each template is swapped for the pipeline-language
section and python fences become pipeline fences.
"""

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from . import pipelines
from .exceptions import RenderError, ResponseParseError

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / 'prompt_templates'
CHECKSUM_FILE = 'SHA256SUMS'

TEMPLATES = {
    'system': 'system.txt',
    'external_knowledge': 'external_knowledge.txt',
    'output_format_dsl': 'output_format_dsl.txt',
    'seed_analysis': 'seed_analysis.txt',
    'init': 'init.txt',
    'pc_reflection': 'pc_reflection.txt',
    'pc': 'pc.txt',
    'sc_reflection': 'sc_reflection.txt',
    'sc': 'sc.txt',
    'pm': 'pm.txt',
    'pm_reflection': 'pm_reflection.txt',
    'pm_two_stage': 'pm_two_stage.txt',
    'pwc_reflection': 'pwc_reflection.txt',
    'pwc_analysis': 'pwc_analysis.txt',
    'pwc': 'pwc.txt',
    'summary': 'summary.txt',
}

# prompt kinds that can be rendered into a bundle
PROMPT_KINDS = (
    'seed_analysis', 'init', 'pc_reflection', 'pc', 'sc_reflection', 'sc', 'pm', 'pm_reflection',
    'pm_two_stage', 'pwc_reflection', 'pwc_analysis', 'pwc', 'summary',
)
REFLECTION_KINDS = frozenset({
    'seed_analysis', 'pc_reflection', 'sc_reflection', 'pm_reflection', 'pwc_reflection', 'pwc_analysis',
})

RECHAT_PREAMBLE = (
    "Your previous code had execution errors, couldn't find signals, or timed out. "
    "Please debug and fix the issues:\n\n"
)

DSL_INTERFACE = {
    'func_name': 'pipeline',
    'input_count': 2,
    'joined_inputs': 'strain_h1, strain_l1',
    'output_count': 3,
    'joined_outputs': 'trigger_times, trigger_stats, trigger_vars',
    'inout_inf': (
        'The pipeline receives whitened-or-raw H1 and L1 strain sampled at a common rate and returns a '
        'catalog of trigger GPS times, ranking statistics and timing tolerances in seconds.'
    ),
    'other_inf': (
        'Only registered stages with in-range parameters are executable; each candidate is run on '
        'background and foreground data under a wall-time limit.'
    ),
}

CODE_INTERFACE = {
    'func_name': 'pipeline_v2',
    'input_count': 3,
    'joined_inputs': 'strain_h1, strain_l1, times',
    'output_count': 3,
    'joined_outputs': 'peak_times, peak_heights, peak_deltat',
    'inout_inf': (
        'Inputs are numpy arrays of H1 strain, L1 strain and GPS times; outputs are numpy arrays of '
        'trigger GPS times, ranking statistics and timing uncertainties in seconds.'
    ),
    'other_inf': (
        'Use numpy and scipy only; the function must finish within the evaluation time limit and '
        'must not read or write files.'
    ),
}

INIT_DIRECTIVES = (
    'Replace the spectral whitening with an adaptive, locally estimated noise model.',
    'Condition the data with a robust detrending stage before whitening.',
    'Build the detection metric from coherent cross-detector power instead of summed power.',
    'Use a curvature-boosted, frequency-weighted time-frequency metric.',
    'Generate triggers with a multi-resolution wavelet threshold and a robust (MAD) noise scale.',
    'Add a curvature veto to suppress short noise transients in the trigger stage.',
    'Tighten timing estimates by deriving per-trigger uncertainties from peak width.',
    'Trade spectral resolution for time resolution in the spectrogram and adapt the trigger spacing.',
)

FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
BRACE_RE = re.compile(r"\{(.*?)\}", re.DOTALL)
DOCSTRING_RE = re.compile(r'"""(.*?)"""', re.DOTALL)
OUTPUT_FORMAT_RE = re.compile(
    r"^(?P<indent>[ \t]*)- Place the core design idea.*?^[ \t]*```[ \t]*$",
    re.DOTALL | re.MULTILINE,
)

DEPTH_BANDS = (
    (2, 'Shallow (Depth 1-2)', 'structural patterns'),
    (4, 'Medium (Depth 3-4)', 'implementation techniques'),
    (None, 'Deep (Depth 5+)', 'mathematical details'),
)


def depth_band(depth):
    """(label, focus) of the depth band: 1-2 shallow, 3-4 medium, 5+ deep."""
    for upper, label, focus in DEPTH_BANDS:
        if upper is None or depth <= upper:
            return label, focus


@dataclass(frozen=True)
class PromptBundle:
    system: str
    turns: tuple
    kind: str
    depth: int
    placeholders: dict = field(default_factory=dict)

    @property
    def model_role(self):
        return 'reflection' if self.kind in REFLECTION_KINDS else 'generation'

    @property
    def prompt(self):
        """Content of the first user turn."""
        return self.turns[0][1]

    def messages(self):
        return [{'role': 'system', 'content': self.system}] + [
            {'role': role, 'content': content} for role, content in self.turns
        ]


@dataclass(frozen=True)
class ParsedResponse:
    design_idea: str
    code: str
    raw: str


class _Bindings(dict):
    def __missing__(self, key):
        raise RenderError(key, f"missing binding for placeholder '{key}'")


def _unescape(template):
    # assets spell a literal brace as \\{{ ... \\}}
    return template.replace('\\\\{{', '\\{{').replace('\\\\}}', '\\}}')


def file_checksums(directory=TEMPLATE_DIR):
    directory = Path(directory)
    return {
        name: hashlib.sha256((directory / name).read_bytes()).hexdigest()
        for name in sorted(TEMPLATES.values())
    }


def recorded_checksums(directory=TEMPLATE_DIR):
    recorded = {}
    for line in (Path(directory) / CHECKSUM_FILE).read_text().splitlines():
        if line.strip():
            digest, name = line.split(None, 1)
            recorded[name.lstrip('*').strip()] = digest
    return recorded


class PromptLibrary:
    """Loaded template set plus the rendering rules for one run."""

    def __init__(self, override_dir=None, dsl_mode=True, max_depth=10):
        self.dsl_mode = dsl_mode
        self.max_depth = max_depth
        self.templates = {}
        for kind, name in TEMPLATES.items():
            path = TEMPLATE_DIR / name
            if override_dir is not None and (Path(override_dir) / name).exists():
                path = Path(override_dir) / name
                logger.info("Using override template %s", path)
            self.templates[kind] = path.read_text()
        self.stage_catalog = pipelines.stage_catalog()

    @property
    def interface(self):
        return DSL_INTERFACE if self.dsl_mode else CODE_INTERFACE

    def _defaults(self, depth):
        values = dict(self.interface)
        values['prompt_inout_inf'] = values['inout_inf']
        values['prompt_other_inf'] = values['other_inf']
        values['depth'] = depth
        values['max_depth'] = self.max_depth
        values['external_knowledge'] = self.templates['external_knowledge'].rstrip('\n')
        values['stage_catalog'] = self.stage_catalog
        return values

    def _adapt(self, template):
        if not self.dsl_mode:
            return template
        block = self.templates['output_format_dsl'].rstrip('\n')

        def swap(match):
            indent = match.group('indent')
            return '\n'.join(indent + line if line else line for line in block.split('\n'))

        template = OUTPUT_FORMAT_RE.sub(swap, template, count=1)
        return template.replace('```python', '```pipeline')

    def render_text(self, kind, depth, bindings):
        if kind not in PROMPT_KINDS:
            raise RenderError(kind, f"unknown prompt kind '{kind}'")
        values = _Bindings(self._defaults(depth))
        values.update(bindings)
        text = _unescape(self._adapt(self.templates[kind])).format_map(values)
        if kind != 'summary':
            label, focus = depth_band(depth)
            text = text.rstrip('\n') + f"\n\nDepth guidance: {label}, focus on {focus}.\n"
        return text

    def render(self, kind, depth, bindings):
        """PromptBundle with one user turn; raises RenderError naming a missing placeholder."""
        kind = kind.lower()
        text = self.render_text(kind, depth, bindings)
        return PromptBundle(
            system=self.templates['system'].strip(),
            turns=(('user', text),),
            kind=kind,
            depth=depth,
            placeholders=dict(bindings),
        )

    def summarize(self, design_idea, code, depth=0):
        """Prompt asking for a description of at most three sentences."""
        if not code or not code.strip():
            raise RenderError('code', "cannot summarize empty code")
        return self.render('summary', depth, {'algorithm': design_idea, 'code': code})


def build_rechat(bundle, reply, error_report):
    """Previous exchange plus a debug request carrying the original prompt and the error report."""
    content = RECHAT_PREAMBLE + bundle.prompt + '\n\n' + error_report
    return PromptBundle(
        system=bundle.system,
        turns=bundle.turns + (('assistant', reply), ('user', content)),
        kind=bundle.kind,
        depth=bundle.depth,
        placeholders=bundle.placeholders,
    )


def _clean_idea(text):
    return text.strip().strip('\\').strip()


def parse_response(raw):
    """Design idea (first brace span outside code, else the code's docstring) and first fenced block."""
    fence = FENCE_RE.search(raw)
    if fence is None:
        raise ResponseParseError("response has no fenced code block")
    code = fence.group(1).lstrip('\n').rstrip()
    if not code:
        raise ResponseParseError("fenced code block is empty")

    outside = FENCE_RE.sub('', raw)
    idea = ''
    match = BRACE_RE.search(outside)
    if match:
        idea = _clean_idea(match.group(1))
    if not idea:
        docstring = DOCSTRING_RE.search(code)
        if docstring:
            idea = docstring.group(1).strip()
    if not idea:
        raise ResponseParseError("response has no design idea in braces or in a docstring")
    return ParsedResponse(design_idea=idea, code=code, raw=raw)


def extract_idea(raw):
    """Brace-delimited text of a reflection reply, or the whole reply."""
    match = BRACE_RE.search(FENCE_RE.sub('', raw))
    if match and _clean_idea(match.group(1)):
        return _clean_idea(match.group(1))
    return raw.strip()
