"""Bridge real transformer models into the merge toolkit's container format."""

__version__ = "0.1.0"

from .containers import write_container
from .export import ExportError, ExportJob, export_activations, export_reference_embeddings, read_dev_set
