"""Bundled example inputs.

- counterexample.json: the two-course, two-quarter instance where taking a
  single course first beats taking both at once.
- mae19_rich.json / mae19_sparse.json: a 19-course engineering-core
  reconstruction (approximate; the original offering calendars are not
  published) under availability roughly twice vs once per academic year.
- gpa_table_sat.csv: per-SAT-bin GPA statistics for six course sequences.
- resource_experiment.json: defaults for the rare-hub experiment.
"""

from importlib import resources


def path(name: str):
    """Filesystem path of a bundled data file."""
    p = resources.files(__package__).joinpath(name)
    if not p.is_file():
        available = ", ".join(sorted(
            f.name for f in resources.files(__package__).iterdir()
            if f.name not in ("__init__.py", "__pycache__")))
        raise FileNotFoundError(f"no bundled file {name!r}; available: {available}")
    return p
