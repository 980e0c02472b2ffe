"""Diffie-Hellman agreement on a pairwise secret.

Exact integer arithmetic with small test-friendly primes; no constant-time or
cryptographic-strength guarantees.
"""
from __future__ import annotations


def _check_group(base: int, modulus: int) -> None:
    from sympy import isprime

    if not isprime(modulus):
        raise ValueError(f"modulus {modulus} is not prime")
    if not 1 < base < modulus:
        raise ValueError("base must satisfy 1 < b < modulus")


def dh_public_key(base: int, modulus: int, secret: int) -> int:
    """``b^secret mod modulus``, the value an agent broadcasts."""
    _check_group(base, modulus)
    if not 1 <= secret <= modulus - 1:
        raise ValueError("secret must lie in [1, modulus - 1]")
    return pow(base, secret, modulus)


def dh_shared_secret(base: int, modulus: int, secret_a: int, secret_b: int) -> int:
    """Shared key ``b^(secret_a * secret_b) mod modulus`` agreed by two agents.

    Each side raises the other's public key to its own secret; the two results
    are checked to coincide.
    """
    pub_a = dh_public_key(base, modulus, secret_a)
    pub_b = dh_public_key(base, modulus, secret_b)
    key_a = pow(pub_b, secret_a, modulus)
    key_b = pow(pub_a, secret_b, modulus)
    if key_a != key_b:
        raise RuntimeError("Diffie-Hellman sides disagree")
    return key_a
