from .paillier import (
    DEFAULT_BITS,
    Ciphertext,
    KeyFileError,
    KeyGenError,
    KeyMismatchError,
    KeyPair,
    PublicKey,
    SecretKey,
    decrypt,
    decrypt_signed,
    encrypt,
    he_add,
    he_scalar_mul,
    keygen,
    keypair_from_primes,
    make_rng,
)
from .protocol import EncryptedTemplate, encrypted_sed, enroll_encrypted
from .workload import WorkloadReport, compare_workloads, workload_estimate
