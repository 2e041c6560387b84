"""Deterministic swarm simulation: cost model, scenarios, event loop, games."""
