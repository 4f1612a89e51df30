"""
Pipelines layer

What this package does:
- Multi-step workflows the CLI runs: training sessions, gallery building and
  evaluation, and the repression study across layer kinds.

Modules:
- training: seeded training session over the train split, loss log, outputs.
- evaluation: galleries per split, queries, rankings, MAP/P@k, attribute
  accuracy, CCA of the repression layer.
- study: train every requested repression kind on identical data and compare.

Design rules:
- Randomness is always derived from the run seed (one stream per purpose).
- All file output goes through ``storage.writers`` (staged, atomic).
"""
