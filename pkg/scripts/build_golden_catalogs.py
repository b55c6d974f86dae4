"""
Regenerate the stored reference catalogs in tests/golden/.

Runs the seed and elite pipelines on the first training segment of the
seed-0 default benchmark. Rerun after any intentional change to a pipeline
stage, then review the diff of the CSV files.
"""

import os
import sys
from pathlib import Path

# Setup Django environment
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'gwsearch.settings')

import django
django.setup()

from discovery import datagen, pipelines
from discovery.config import load_config

GOLDEN_DIR = Path(__file__).resolve().parent.parent / 'tests' / 'golden'
SEGMENT = 'train-000'
DATA_SEED = 0


def build_segment():
    # the first segment of the default benchmark; later segments use their own seeds
    config = load_config(overrides={'dataset': {'n_train': 1, 'n_test': 0}}).dataset
    benchmark = datagen.build_benchmark(config, DATA_SEED)
    return benchmark.segments[0]


def main():
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    segment = build_segment()
    data = segment.foreground
    for name, pipeline in (('seed', pipelines.seed_pipeline), ('elite', pipelines.elite_pipeline)):
        catalog = pipeline(data.h1, data.l1)
        path = GOLDEN_DIR / f"{name}_{SEGMENT}.csv"
        catalog.to_csv(path)
        print(f"{name}: {len(catalog)} triggers -> {path}")


if __name__ == '__main__':
    main()
