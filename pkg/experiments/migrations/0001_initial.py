from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('method', models.CharField(choices=[('vanilla', 'Vanilla-KD'), ('random_text', 'Random Text'), ('unlabel', 'Unlabel-KD'), ('manual', 'PromptDFD-Manual'), ('rl', 'PromptDFD-RL')], help_text='Distillation method', max_length=20)),
                ('seed', models.BigIntegerField(help_text='Run seed')),
                ('config_hash', models.CharField(help_text='SHA-256 of the resolved run config', max_length=64)),
                ('accuracy', models.FloatField(help_text='Student accuracy on the test split')),
                ('agreement', models.FloatField(help_text='Teacher/student agreement on the test split')),
                ('report_path', models.CharField(help_text="Directory holding the run's report files", max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True, help_text='Timestamp when the run was recorded')),
            ],
            options={
                'db_table': 'experiment_runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['method'], name='experiment_method_idx'), models.Index(fields=['config_hash'], name='experiment_config_hash_idx')],
            },
        ),
    ]
