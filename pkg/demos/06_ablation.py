"""
Component ablation
==================

Four variants share one training recipe and differ only in which attention
stages are switched on.  This reduced run uses one seed and a smaller corpus.
The acceptance suite runs the full-size corpus over three seeds.
"""

from gbre import experiments, synth

data = experiments.prepare(synth.SynthSpec(train_bags=500, valid_bags=150, test_bags=150))
runs = experiments.ablation(data, seeds=(0,), base=None, log=print)
for variant in experiments.VARIANTS:
    print(f"{variant:14s} test AUC {experiments.mean_auc(runs, variant):.4f}")
