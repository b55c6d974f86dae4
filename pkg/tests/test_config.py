import json
import shutil
import tempfile
from pathlib import Path
from unittest import mock

from django.test import SimpleTestCase

from discovery.config import build_config, load_config
from discovery.exceptions import ConfigError


class LoadConfigTestCase(SimpleTestCase):
    def setUp(self):
        self.directory = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.directory, True)

    def write(self, document):
        path = self.directory / 'config.json'
        path.write_text(json.dumps(document))
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.budget, 200)
        self.assertEqual(config.far_range, (4, 1000))
        self.assertEqual(config.tree.gamma, 0.5)
        self.assertEqual(config.tree.max_depth, 10)
        self.assertEqual(config.population.k, 10)
        self.assertEqual(config.population.beta, 0.005)
        self.assertEqual(config.limits.t_max, 60)
        self.assertEqual(config.limits.e_max, 3)
        self.assertEqual(config.schedule.pm_variants, ('single', 'two_stage'))
        self.assertEqual(config.generator.backend, 'mock')

    def test_file_then_overrides(self):
        path = self.write({'budget': 30, 'tree': {'gamma': 0.25}})
        config = load_config(path, overrides={'budget': 12})
        self.assertEqual(config.budget, 12)
        self.assertEqual(config.tree.gamma, 0.25)
        self.assertEqual(config.tree.c0, 1.0)

    def test_unknown_key_names_its_path(self):
        with self.assertRaisesMessage(ConfigError, "tree.gama"):
            load_config(self.write({'tree': {'gama': 0.3}}))

    def test_section_must_be_object(self):
        with self.assertRaisesMessage(ConfigError, "'tree' must be an object"):
            load_config(overrides={'tree': 3})

    def test_missing_file(self):
        with self.assertRaisesMessage(ConfigError, 'does not exist'):
            load_config(self.directory / 'nope.json')

    def test_invalid_json(self):
        path = self.directory / 'config.json'
        path.write_text('{"budget": ')
        with self.assertRaisesMessage(ConfigError, 'not valid JSON'):
            load_config(path)

    def test_validation(self):
        bad = [
            {'tree': {'gamma': 2.0}},
            {'budget': -1},
            {'budget': 'many'},
            {'far_range': [100, 10]},
            {'generator': {'backend': 'psychic'}},
            {'executor': {'mode': 'external'}},
            {'limits': {'e_max': 0}},
            {'dataset': {'f_upper': 5000}},
            {'workers': 0},
        ]
        for document in bad:
            with self.subTest(document=document):
                with self.assertRaises(ConfigError):
                    build_config(document)

    def test_external_mode_with_argv(self):
        config = build_config({'executor': {'mode': 'external', 'argv': ['run', '{candidate}']}})
        self.assertEqual(config.executor.argv, ('run', '{candidate}'))

    def test_document_rebuilds_the_same_config(self):
        config = load_config(overrides={'budget': 7, 'dataset': {'chirp_mass_range': [6, 9]}})
        self.assertEqual(build_config(config.to_document()), config)

    @mock.patch.dict('os.environ', {'CUSTOM_KEY': 'abc'})
    def test_api_key_from_environment(self):
        config = load_config(overrides={'generator': {'api_key_env': 'CUSTOM_KEY'}})
        self.assertEqual(config.generator.api_key(), 'abc')
