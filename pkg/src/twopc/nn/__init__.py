"""Fixed-point neural networks over secret shares, with plaintext mirrors."""
