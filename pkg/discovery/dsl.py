"""
Pipeline text format.

One stage per line (or several separated by ';'), written as
``name(key=value, ...)``; ``name(default)`` keeps every default. ``#`` starts a
comment and triple-quoted docstrings are ignored. Stage order is
detrend (optional), whiten, metric, trigger.
"""

import re
from dataclasses import dataclass

from . import pipelines
from .exceptions import DslParseError, ParameterError

FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
DOCSTRING_RE = re.compile(r'"""(.*?)"""', re.DOTALL)
CALL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)$", re.DOTALL)
KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

REQUIRED_ROLES = ('whiten', 'metric', 'trigger')

SEED_DSL = """\
whiten_welch(default)
metric_meanpower(default)
trigger_basic(default)
"""

ELITE_DSL = """\
detrend_median(kernel=101)
whiten_adaptive(default)
metric_coherent(default)
trigger_multires(default)
"""


@dataclass(frozen=True)
class PipelineDsl:
    stages: tuple
    provenance: str = ''

    def to_text(self):
        """Canonical text: every parameter spelled out, keys sorted."""
        lines = []
        for name, params in self.stages:
            args = ', '.join(f"{key}={_format_value(params[key])}" for key in sorted(params))
            lines.append(f"{name}({args})")
        return '\n'.join(lines) + '\n'


def _format_value(value):
    if isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def extract_block(text):
    """First fenced block of `text`, or the whole text when it has none."""
    match = FENCE_RE.search(text)
    return match.group(1) if match else text


def _strip_docstrings(text):
    # keep line numbering stable for error positions
    return DOCSTRING_RE.sub(lambda m: '\n' * m.group(0).count('\n'), text)


def _parse_value(raw, line, column):
    raw = raw.strip()
    if NUMBER_RE.match(raw):
        value = float(raw)
        return int(value) if re.match(r"^[+-]?\d+$", raw) else value
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    if KEY_RE.match(raw):
        return raw
    raise DslParseError(f"cannot read value {raw!r}", line, column)


def _statements(text):
    """Yield (statement, line, column) triples, comments removed."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        code = line.split('#', 1)[0]
        offset = 0
        for piece in code.split(';'):
            stripped = piece.strip()
            if stripped:
                column = offset + (len(piece) - len(piece.lstrip())) + 1
                yield stripped, lineno, column
            offset += len(piece) + 1


def _parse_statement(statement, line, column):
    match = CALL_RE.match(statement)
    if not match:
        raise DslParseError(f"expected name(key=value, ...), got {statement!r}", line, column)
    name, body = match.group(1), match.group(2).strip()
    if name not in pipelines.STAGES:
        raise DslParseError(f"unknown stage '{name}'", line, column)
    params = {}
    if body and body != 'default':
        for arg in body.split(','):
            arg_column = column + statement.find(arg.strip())
            if '=' not in arg:
                raise DslParseError(f"expected key=value in stage '{name}', got {arg.strip()!r}", line, arg_column)
            key, raw = arg.split('=', 1)
            key = key.strip()
            if not KEY_RE.match(key):
                raise DslParseError(f"invalid parameter name {key!r}", line, arg_column)
            if key in params:
                raise DslParseError(f"parameter '{key}' given twice in stage '{name}'", line, arg_column)
            params[key] = _parse_value(raw, line, arg_column)
    try:
        resolved = pipelines.STAGES[name].resolve(params)
    except ParameterError as exc:
        raise DslParseError(f"{exc} in stage '{name}'", line, column) from exc
    return name, resolved


def parse_dsl(text, provenance=''):
    """Parse and validate pipeline text (fenced or bare) into a PipelineDsl."""
    body = _strip_docstrings(extract_block(text))
    stages = []
    seen = {}
    last_rank = -1
    for statement, line, column in _statements(body):
        name, params = _parse_statement(statement, line, column)
        role = pipelines.STAGES[name].role
        if role in seen:
            raise DslParseError(f"duplicate {role} stage '{name}'", line, column)
        rank = pipelines.ROLES.index(role)
        if rank < last_rank:
            raise DslParseError(
                f"{role} stage '{name}' must come before the {pipelines.ROLES[last_rank]} stage", line, column
            )
        seen[role] = name
        last_rank = rank
        stages.append((name, params))
    if not stages:
        raise DslParseError("no stages found")
    for role in REQUIRED_ROLES:
        if role not in seen:
            raise DslParseError(f"missing {role} stage")
    return PipelineDsl(tuple(stages), provenance)


def run_dsl(program, h1, l1):
    return pipelines.run_stages(program.stages, h1, l1)
