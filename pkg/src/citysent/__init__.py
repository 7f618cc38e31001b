"""Baseline-corrected detection of localized sentiment deviations in short posts.

The pipeline runs in stages: records are parsed and filtered (:mod:`.ingest`),
placed in a city and local hour (:mod:`.geo`), scored for positive and negative
strength (:mod:`.sentiment`), folded into city-hour bins (:mod:`.aggregate`),
explained by dummy-coded least-squares baselines (:mod:`.model`), and finally
compared against those baselines bin by bin (:mod:`.deviation`).
:mod:`.synth` produces corpora with known ground truth for checking all of it.
"""

__version__ = "0.1.0"
