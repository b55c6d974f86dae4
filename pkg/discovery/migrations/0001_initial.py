# Generated by Django 4.2.25

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='SearchRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('output_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('halted', 'Halted'), ('aborted', 'Aborted')], default='running', max_length=20)),
                ('budget', models.IntegerField()),
                ('search_seed', models.IntegerField(default=0)),
                ('data_seed', models.IntegerField(default=0)),
                ('evaluations', models.IntegerField(default=0)),
                ('seed_fitness', models.FloatField(blank=True, null=True)),
                ('elite_fitness', models.FloatField(blank=True, null=True)),
                ('test_fitness', models.FloatField(blank=True, null=True)),
                ('elite_node', models.IntegerField(blank=True, null=True)),
                ('message', models.TextField(blank=True, default='')),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='NodeEvaluation',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('eval_index', models.IntegerField()),
                ('op', models.CharField(max_length=10)),
                ('inputs', models.JSONField(default=list)),
                ('node', models.IntegerField(blank=True, null=True)),
                ('fitness', models.FloatField(blank=True, null=True)),
                ('elite_fitness', models.FloatField(blank=True, null=True)),
                ('rechat_rounds', models.IntegerField(default=0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='records', to='discovery.searchrun')),
            ],
            options={
                'ordering': ['run', 'eval_index'],
                'unique_together': {('run', 'eval_index')},
            },
        ),
    ]
