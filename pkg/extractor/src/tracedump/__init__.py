"""tracedump: model-side extractor for the tokmend toolkit.

Runs the two-pass activation-patching protocol over a causal LM, dumps
per-(position, layer) hidden states and patched generations in the
toolkit's trace format, and exports tokenizer and embedding files.
"""

from .export import export_model_assets
from .extract import Extractor, extract_traces, load_model
from .formats import TraceWriter, write_embedding_matrix, write_tokenizer_json
from .job import ExtractionJob

__version__ = "0.1.0"
