"""partsight: synthetic data tooling and a retrieval-augmented parts assistant.

The package splits into batch tooling (synthetic composition, corruption
sets, white-canvas refinement, detection evaluation) and a runtime pipeline
(multi-frame fusion, depth ranking, knowledge retrieval, answer generation)
exposed both as a library and over an HTTP JSON API. All neural models are
provider boundaries with deterministic mocks.
"""

__version__ = "0.1.0"
