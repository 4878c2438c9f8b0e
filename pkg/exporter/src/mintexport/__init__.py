from .export import (
    ConfigurationError,
    ExportError,
    ExportSpec,
    SamplingError,
    capture,
    collect_pairs,
    export_activations,
    spatial_mean,
    stratified_sample,
    write_mintact,
)

__version__ = "0.1.0"
