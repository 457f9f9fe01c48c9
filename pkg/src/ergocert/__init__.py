"""Explicit geometric-ergodicity certificates for Markov chains and diffusions."""
