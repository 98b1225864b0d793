"""Privacy-preserving deep learning over negative databases."""

from .data import AttributeCodec, Dataset, decode_bits, encode_instance, load_breast_cancer, load_idx_images
from .ndbgen import NegDatabase, NegRecord, QKParams, generate_ndb, record_type
from .nn import Network, TrainConfig, predict, train
from .security import SecurityReport, guessing_probability, security_sweep
from .sketch import (
    DecodedInstance,
    DiffProfile,
    Sketch,
    attribute_posterior,
    bit_posterior,
    decode_instance,
    diff_profile,
    extract_sketch,
)

__all__ = [
    "AttributeCodec", "Dataset", "decode_bits", "encode_instance", "load_breast_cancer", "load_idx_images",
    "NegDatabase", "NegRecord", "QKParams", "generate_ndb", "record_type",
    "Network", "TrainConfig", "predict", "train",
    "SecurityReport", "guessing_probability", "security_sweep",
    "DecodedInstance", "DiffProfile", "Sketch", "attribute_posterior", "bit_posterior",
    "decode_instance", "diff_profile", "extract_sketch",
]
