"""Engine services: one module per concern."""
