"""Demo application wiring for the shopcore library."""
