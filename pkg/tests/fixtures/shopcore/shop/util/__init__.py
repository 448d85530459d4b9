"""Small shared helpers with no third party dependencies."""
