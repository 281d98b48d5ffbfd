"""Oblivious transfer and the garbled wrap circuit."""
