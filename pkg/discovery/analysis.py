"""
Run analytics: code normalization, population diversity (Shannon index and
CID), phase-transition detection and multi-run aggregation.
"""

import ast
import logging

import numpy as np
import pandas as pd
from scipy.stats import entropy
from sklearn.feature_extraction.text import CountVectorizer

from . import dsl
from .exceptions import DslParseError, ParameterError

logger = logging.getLogger(__name__)

CID_EPSILON = 1e-10
DEGENERATE_CENTROID = 1e-8
PHASE_TRANSITION_GAIN = 400.0
TOKEN_PATTERN = r"[A-Za-z_][A-Za-z0-9_]*|\d+(?:\.\d+)?(?:[eE][+-]?\d+)?|[^\sA-Za-z0-9_]"


class _DocstringStripper(ast.NodeTransformer):
    def _strip(self, node):
        self.generic_visit(node)
        body = node.body
        if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                and isinstance(body[0].value.value, str):
            body = body[1:] or [ast.Pass()]
        node.body = body
        return node

    visit_Module = _strip
    visit_FunctionDef = _strip
    visit_AsyncFunctionDef = _strip
    visit_ClassDef = _strip


def normalize_code_flagged(text):
    """(canonical text, flag); the flag is set when only whitespace could be normalized."""
    try:
        return dsl.parse_dsl(text).to_text(), False
    except DslParseError:
        pass
    source = dsl.extract_block(text)
    try:
        tree = _DocstringStripper().visit(ast.parse(source))
        return ast.unparse(ast.fix_missing_locations(tree)), False
    except (SyntaxError, ValueError):
        return ' '.join(text.split()), True


def normalize_code(text):
    return normalize_code_flagged(text)[0]


def shannon_index(canonical_texts):
    """Natural-log Shannon entropy of the unique-variant frequencies."""
    if not canonical_texts:
        raise ParameterError("Shannon index needs a non-empty population")
    counts = pd.Series(list(canonical_texts)).value_counts().to_numpy()
    return float(entropy(counts))


def embed(canonical_texts, vocabulary=None):
    """Token-count vectors over a shared vocabulary (fitted on the texts when not given)."""
    vectorizer = CountVectorizer(token_pattern=TOKEN_PATTERN, lowercase=False, vocabulary=vocabulary)
    if vocabulary is None:
        matrix = vectorizer.fit_transform(canonical_texts)
    else:
        matrix = vectorizer.transform(canonical_texts)
    return matrix.toarray().astype(np.float64), vectorizer.vocabulary_


def _as_matrix(embeddings):
    rows = [np.asarray(e, dtype=np.float64).ravel() for e in embeddings]
    if not rows:
        raise ParameterError("CID needs at least one embedding")
    if len({r.size for r in rows}) != 1:
        raise ParameterError("embeddings must share one dimension")
    matrix = np.vstack(rows)
    if not np.all(np.isfinite(matrix)):
        raise ParameterError("embeddings must be finite")
    return matrix


def cid_index(embeddings):
    """Mean distance to the centroid, relative to the centroid norm."""
    matrix = _as_matrix(embeddings)
    centroid = matrix.mean(axis=0)
    distances = np.linalg.norm(matrix - centroid, axis=1)
    return float(np.mean(distances / (np.linalg.norm(centroid) + CID_EPSILON)))


def centroid_degenerate(embeddings):
    return bool(np.linalg.norm(_as_matrix(embeddings).mean(axis=0)) < DEGENERATE_CENTROID)


def best_so_far(fitness):
    """Running maximum, ignoring failed (NaN/None) evaluations."""
    values = np.array([np.nan if f is None else f for f in fitness], dtype=np.float64)
    if values.size == 0:
        return values
    return np.fmax.accumulate(values)


def detect_phase_transitions(trajectory, threshold=PHASE_TRANSITION_GAIN):
    """Indices where the best-so-far fitness jumps by at least `threshold`."""
    events = []
    previous = None
    for index, value in enumerate(trajectory):
        if value is None or np.isnan(value):
            continue
        if previous is not None and value - previous >= threshold:
            events.append({'index': index, 'previous': float(previous), 'fitness': float(value),
                           'gain': float(value - previous)})
        previous = value if previous is None else max(previous, value)
    return events


def diversity_series(canonical_texts, window=50):
    """Shannon index and CID over a sliding window ending at each evaluation."""
    if not canonical_texts:
        return []
    vectors, _ = embed(canonical_texts)
    series = []
    for end in range(1, len(canonical_texts) + 1):
        start = max(0, end - window)
        block = vectors[start:end]
        series.append({
            'index': end - 1,
            'shannon': shannon_index(canonical_texts[start:end]),
            'cid': cid_index(block),
            'degenerate': centroid_degenerate(block),
        })
    return series


def population_diversity(canonical_texts):
    vectors, _ = embed(canonical_texts)
    return {
        'shannon': shannon_index(canonical_texts),
        'cid': cid_index(vectors),
        'degenerate': centroid_degenerate(vectors),
    }


def analyze_run(records, window=50, threshold=PHASE_TRANSITION_GAIN):
    """Analysis report for the evaluation records of one run (seed first)."""
    fitness = [r.get('fitness') for r in records]
    trajectory = best_so_far(fitness)
    texts = [r['canonical'] for r in records if r.get('fitness') is not None]
    report = {
        'evaluations': [
            {'index': i, 'node': r.get('node'), 'op': r.get('op'), 'fitness': r.get('fitness'),
             'best_so_far': None if np.isnan(trajectory[i]) else float(trajectory[i])}
            for i, r in enumerate(records)
        ],
        'phase_transitions': detect_phase_transitions(trajectory, threshold),
        'diversity_window': window,
        'diversity': diversity_series(texts, window),
    }
    flagged = sum(1 for r in records if r.get('normalization_flag'))
    if flagged:
        logger.info("%d candidates were normalized by whitespace only", flagged)
    return report


def analysis_frame(report):
    """Per-evaluation table with the diversity columns aligned on successful evaluations."""
    frame = pd.DataFrame(report['evaluations'])
    diversity = pd.DataFrame(report['diversity'])
    ok = frame['fitness'].notna().to_numpy()
    for column in ('shannon', 'cid'):
        frame[column] = np.nan
        if len(diversity):
            frame.loc[ok, column] = diversity[column].to_numpy()
    frame['phase_transition'] = frame['index'].isin([e['index'] for e in report['phase_transitions']])
    return frame


def aggregate_runs(trajectories):
    """Mean and standard deviation of best-so-far trajectories; shorter runs hold their last value."""
    if not trajectories:
        raise ParameterError("nothing to aggregate")
    frame = pd.DataFrame({i: pd.Series(np.asarray(t, dtype=np.float64)) for i, t in enumerate(trajectories)})
    frame = frame.ffill()
    return pd.DataFrame({
        'index': frame.index,
        'mean': frame.mean(axis=1),
        'std': frame.std(axis=1, ddof=0),
        'runs': frame.notna().sum(axis=1),
    })
