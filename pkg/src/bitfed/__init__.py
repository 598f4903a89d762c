"""Additive homomorphic aggregation for federated learning.

BFV ciphertexts carry bit-interleaved packed quantized weights; the server
adds them without key material, and every client decrypts the same broadcast
sum. See the README for the pipeline walkthrough and CLI usage.
"""

from .bfv import (
    Ciphertext,
    EncryptionMask,
    PlaintextPoly,
    SecretKey,
    add_ciphertexts,
    decrypt,
    encrypt,
    keygen,
    noise_margin,
    prepare_mask,
)
from .errors import (
    BitfedError,
    ConfigError,
    InfeasibleLayoutError,
    IntegrityError,
    MaskReuseError,
    ParameterError,
    PlaintextRangeError,
    ProtocolError,
    RoundAbort,
    WeightRangeError,
    WireDecodeError,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    capacity_table,
    predict_traffic,
    run_experiment,
)
from .kernels import BACKEND
from .packing import (
    FieldLayout,
    PackedLayer,
    QuantParams,
    average_unpacked,
    dequantize_layer,
    make_layout,
    max_slots,
    pack_layer,
    quantize_layer,
    unpack_layer,
    validate_layout,
)
from .protocol import Client, ModelSchema, Server, build_schema, run_round, select_clients
from .ring import Domain, Polynomial, RingContext, default_context
from .sampling import derive_seed, sample_error, sample_secret, sample_uniform, seed_from_int
from .transport import MemTransport, SocketTransport, TrafficLedger

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BitfedError",
    "Ciphertext",
    "Client",
    "ConfigError",
    "Domain",
    "EncryptionMask",
    "ExperimentConfig",
    "ExperimentResult",
    "FieldLayout",
    "InfeasibleLayoutError",
    "IntegrityError",
    "MaskReuseError",
    "MemTransport",
    "ModelSchema",
    "PackedLayer",
    "ParameterError",
    "PlaintextPoly",
    "PlaintextRangeError",
    "Polynomial",
    "ProtocolError",
    "QuantParams",
    "RingContext",
    "RoundAbort",
    "SecretKey",
    "Server",
    "SocketTransport",
    "TrafficLedger",
    "WeightRangeError",
    "WireDecodeError",
    "add_ciphertexts",
    "average_unpacked",
    "build_schema",
    "capacity_table",
    "decrypt",
    "default_context",
    "dequantize_layer",
    "derive_seed",
    "encrypt",
    "keygen",
    "make_layout",
    "max_slots",
    "noise_margin",
    "pack_layer",
    "predict_traffic",
    "prepare_mask",
    "quantize_layer",
    "run_experiment",
    "run_round",
    "sample_error",
    "sample_secret",
    "sample_uniform",
    "seed_from_int",
    "select_clients",
    "unpack_layer",
    "validate_layout",
    "__version__",
]
