"""Two-party secret-sharing engine."""
